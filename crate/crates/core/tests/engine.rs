use augunlearn::engine::{checkpoint, Graph, Sgd, SgdConfig, Tensor};
use augunlearn::models::{build_model, ArchSpec, Model};
use augunlearn::Error;
use proptest::prelude::*;

/// Naive direct convolution used as an oracle for the im2col path.
fn conv_oracle(
    x: &[f64],
    xs: [usize; 4],
    k: &[f64],
    ks: [usize; 4],
    stride: usize,
    pad: usize,
) -> Vec<f64> {
    let [n, c, h, w] = xs;
    let [f, _, kh, kw] = ks;
    let ho = (h + 2 * pad - kh) / stride + 1;
    let wo = (w + 2 * pad - kw) / stride + 1;
    let mut out = vec![0.0; n * f * ho * wo];
    for b in 0..n {
        for o in 0..f {
            for y in 0..ho {
                for xo in 0..wo {
                    let mut acc = 0.0;
                    for ch in 0..c {
                        for i in 0..kh {
                            for j in 0..kw {
                                let sy = (y * stride + i) as isize - pad as isize;
                                let sx = (xo * stride + j) as isize - pad as isize;
                                if sy < 0 || sx < 0 || sy >= h as isize || sx >= w as isize {
                                    continue;
                                }
                                let xv = x[((b * c + ch) * h + sy as usize) * w + sx as usize];
                                acc += xv * k[((o * c + ch) * kh + i) * kw + j];
                            }
                        }
                    }
                    out[((b * f + o) * ho + y) * wo + xo] = acc;
                }
            }
        }
    }
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn conv2d_matches_direct_loop(
        n in 1usize..3, c in 1usize..4, f in 1usize..4,
        h in 3usize..8, w in 3usize..8, kk in 1usize..4,
        stride in 1usize..3, pad in 0usize..2, seed in any::<u64>(),
    ) {
        prop_assume!(h + 2 * pad >= kk && w + 2 * pad >= kk);
        let mut s = seed | 1;
        let mut next = || { s ^= s << 13; s ^= s >> 7; s ^= s << 17; (s % 2001) as f64 / 1000.0 - 1.0 };
        let x: Vec<f64> = (0..n * c * h * w).map(|_| next()).collect();
        let k: Vec<f64> = (0..f * c * kk * kk).map(|_| next()).collect();
        let mut g = Graph::<f64>::new();
        let xv = g.input(Tensor::new(vec![n, c, h, w], x.clone()).unwrap());
        let kv = g.input(Tensor::new(vec![f, c, kk, kk], k.clone()).unwrap());
        let y = g.conv2d(xv, kv, stride, pad).unwrap();
        let want = conv_oracle(&x, [n, c, h, w], &k, [f, c, kk, kk], stride, pad);
        let got = g.value(y).data();
        prop_assert_eq!(got.len(), want.len());
        for (a, b) in got.iter().zip(&want) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn sgd_step_matches_update_rule(
        lr in 0.0f32..0.5, momentum in 0.0f32..0.99, wd in 0.0f32..0.01,
        w0 in prop::collection::vec(-2.0f32..2.0, 1..16),
        steps in 1usize..4,
    ) {
        let n = w0.len();
        let mut params = vec![Tensor::new(vec![n], w0.clone()).unwrap()];
        let mut sgd = Sgd::new(SgdConfig { lr, momentum, weight_decay: wd }).unwrap();
        let (mut w, mut v) = (w0.clone(), vec![0.0f32; n]);
        for step in 0..steps {
            let grad: Vec<f32> = (0..n).map(|i| ((i + step) as f32 * 0.37).sin()).collect();
            params[0].set_grad(grad.clone()).unwrap();
            sgd.step(&mut params).unwrap();
            for i in 0..n {
                v[i] = momentum * v[i] + grad[i] + wd * w[i];
                w[i] -= lr * v[i];
            }
            prop_assert!(params[0].grad().is_none());
        }
        prop_assert_eq!(params[0].data(), &w[..]);
    }

    #[test]
    fn checkpoint_bytes_round_trip(shapes in prop::collection::vec(prop::collection::vec(1usize..4, 1..4), 1..5)) {
        let tensors: Vec<Tensor<f32>> = shapes
            .iter()
            .enumerate()
            .map(|(t, s)| {
                let n: usize = s.iter().product();
                Tensor::new(s.clone(), (0..n).map(|i| (i * 31 + t) as f32 / 7.0 - 3.0).collect()).unwrap()
            })
            .collect();
        let names: Vec<String> = (0..tensors.len()).map(|i| format!("t{i}")).collect();
        let named: Vec<(&str, &Tensor<f32>)> = names.iter().map(|s| s.as_str()).zip(&tensors).collect();
        let bytes = checkpoint::encode(&named, serde_json::json!({"k": 1})).unwrap();
        let (header, back) = checkpoint::decode(&bytes, std::path::Path::new("mem")).unwrap();
        prop_assert_eq!(header.tensors.len(), tensors.len());
        for ((name, t), (want_name, want)) in back.iter().zip(&named) {
            prop_assert_eq!(name.as_str(), *want_name);
            prop_assert_eq!(t, *want);
        }
        let again: Vec<(&str, &Tensor<f32>)> = back.iter().map(|(n, t)| (n.as_str(), t)).collect();
        prop_assert_eq!(checkpoint::encode(&again, header.meta.clone()).unwrap(), bytes);
    }
}

#[test]
fn truncated_checkpoint_is_a_format_error() {
    let t = Tensor::new(vec![2, 2], vec![1.0f32, 2.0, 3.0, 4.0]).unwrap();
    let bytes = checkpoint::encode(&[("w", &t)], serde_json::Value::Null).unwrap();
    let err = checkpoint::decode(&bytes[..bytes.len() - 3], std::path::Path::new("cut.ckpt"))
        .unwrap_err();
    assert!(matches!(err, Error::Format { .. }), "{err:?}");
}

#[test]
fn model_save_load_is_exact() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.ckpt");
    let model = build_model(ArchSpec::tiny_resnet([3, 8, 8], 4), 12).unwrap();
    model.save(&path).unwrap();
    let back = Model::load(&path).unwrap();
    assert_eq!(back, model);
    model.save(&path).unwrap();
    let again = std::fs::read(&path).unwrap();
    back.save(&path).unwrap();
    assert_eq!(std::fs::read(&path).unwrap(), again);
}

#[test]
fn init_is_seeded() {
    let arch = ArchSpec::tiny_resnet([3, 16, 16], 10);
    let a = build_model(arch, 3).unwrap();
    assert_eq!(a, build_model(arch, 3).unwrap());
    assert_ne!(a.flat_params(), build_model(arch, 4).unwrap().flat_params());
    assert_eq!(a.param_count(), 5194);
    assert_eq!(
        build_model(ArchSpec::mlp([1, 4, 4], 2), 0)
            .unwrap()
            .param_count(),
        610
    );
}

#[test]
fn max_pool_ties_route_to_first_element() {
    let mut g = Graph::<f64>::new();
    let x = g.param(Tensor::new(vec![1, 1, 2, 2], vec![1.0, 1.0, 1.0, 1.0]).unwrap());
    let y = g.max_pool2(x).unwrap();
    let s = g.sum(y).unwrap();
    g.backward(s).unwrap();
    assert_eq!(g.grad(x).unwrap(), &[1.0, 0.0, 0.0, 0.0]);
}

#[test]
fn shape_mismatches_are_rejected() {
    let mut g = Graph::<f32>::new();
    let a = g.input(Tensor::zeros(vec![2, 3]));
    let b = g.input(Tensor::zeros(vec![3, 2]));
    assert!(matches!(g.add(a, b), Err(Error::Dimension(_))));
    assert!(matches!(g.cross_entropy(a, &[0]), Err(Error::Dimension(_))));
    assert!(matches!(g.cross_entropy(a, &[0, 3]), Err(Error::Input(_))));
}
