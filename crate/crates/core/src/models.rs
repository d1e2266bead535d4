//! Classifier architectures and batched inference.

use std::path::Path;

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::engine::{checkpoint, Element, Graph, Tensor, Var};
use crate::error::{Error, Result};
use crate::rng;

const EVAL_BATCH: usize = 256;
const RESIDUAL_SCALE: f64 = 0.25;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ArchName {
    /// conv(3->8) -> residual block (8->8) -> 2x2 max-pool -> residual block
    /// (8->16, 1x1 projection skip) -> global average pool -> dense(16->K).
    /// Channel counts scale with the width multiplier.
    TinyResnet,
    /// flatten -> dense(D -> 32w) -> relu -> dense(32w -> K).
    Mlp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ArchSpec {
    pub name: ArchName,
    /// `[C, H, W]`.
    pub input: [usize; 3],
    pub classes: usize,
    #[serde(default = "one")]
    pub width: usize,
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Init {
    /// He-normal for layers followed by a ReLU.
    Relu {
        fan_in: usize,
    },
    /// LeCun-normal for the output layer.
    Linear {
        fan_in: usize,
    },
    /// Down-scaled He-normal for the last conv of a residual branch, so each
    /// block starts close to its skip path.
    Residual {
        fan_in: usize,
    },
    Zero,
}

#[derive(Debug, Clone)]
struct ParamSlot {
    name: &'static str,
    shape: Vec<usize>,
    init: Init,
}

impl ArchSpec {
    pub fn tiny_resnet(input: [usize; 3], classes: usize) -> Self {
        Self {
            name: ArchName::TinyResnet,
            input,
            classes,
            width: 1,
        }
    }

    pub fn mlp(input: [usize; 3], classes: usize) -> Self {
        Self {
            name: ArchName::Mlp,
            input,
            classes,
            width: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.classes < 2 {
            return Err(Error::Input(format!(
                "need at least 2 classes, got {}",
                self.classes
            )));
        }
        if self.input.contains(&0) || self.width == 0 {
            return Err(Error::Input(format!(
                "input dims and width must be positive: {:?}, width {}",
                self.input, self.width
            )));
        }
        if self.name == ArchName::TinyResnet && (self.input[1] < 2 || self.input[2] < 2) {
            return Err(Error::Input(format!(
                "tiny-resnet pools once and needs H, W >= 2, got {:?}",
                self.input
            )));
        }
        Ok(())
    }

    fn slots(&self) -> Vec<ParamSlot> {
        let [c, h, w] = self.input;
        let k = self.classes;
        let slot = |name, shape: Vec<usize>, init| ParamSlot { name, shape, init };
        match self.name {
            ArchName::TinyResnet => {
                let (a, b) = (8 * self.width, 16 * self.width);
                let conv = |name, out: usize, inp: usize, ks: usize| {
                    slot(
                        name,
                        vec![out, inp, ks, ks],
                        Init::Relu {
                            fan_in: inp * ks * ks,
                        },
                    )
                };
                let branch_out = |name, out: usize, inp: usize| {
                    slot(
                        name,
                        vec![out, inp, 3, 3],
                        Init::Residual { fan_in: inp * 9 },
                    )
                };
                vec![
                    conv("stem.weight", a, c, 3),
                    slot("stem.bias", vec![a], Init::Zero),
                    conv("block1.conv1.weight", a, a, 3),
                    slot("block1.conv1.bias", vec![a], Init::Zero),
                    branch_out("block1.conv2.weight", a, a),
                    slot("block1.conv2.bias", vec![a], Init::Zero),
                    conv("block2.conv1.weight", b, a, 3),
                    slot("block2.conv1.bias", vec![b], Init::Zero),
                    branch_out("block2.conv2.weight", b, b),
                    slot("block2.conv2.bias", vec![b], Init::Zero),
                    conv("block2.skip.weight", b, a, 1),
                    slot("block2.skip.bias", vec![b], Init::Zero),
                    slot("head.weight", vec![k, b], Init::Linear { fan_in: b }),
                    slot("head.bias", vec![k], Init::Zero),
                ]
            }
            ArchName::Mlp => {
                let d = c * h * w;
                let hidden = 32 * self.width;
                vec![
                    slot("fc1.weight", vec![hidden, d], Init::Relu { fan_in: d }),
                    slot("fc1.bias", vec![hidden], Init::Zero),
                    slot(
                        "fc2.weight",
                        vec![k, hidden],
                        Init::Linear { fan_in: hidden },
                    ),
                    slot("fc2.bias", vec![k], Init::Zero),
                ]
            }
        }
    }

    pub fn param_names(&self) -> Vec<&'static str> {
        self.slots().into_iter().map(|s| s.name).collect()
    }

    pub fn param_shapes(&self) -> Vec<Vec<usize>> {
        self.slots().into_iter().map(|s| s.shape).collect()
    }

    pub fn param_count(&self) -> usize {
        self.slots()
            .iter()
            .map(|s| s.shape.iter().product::<usize>())
            .sum()
    }
}

/// Records the forward pass of `arch` on `x` into `g`, returning `[N, K]` logits.
/// `params` must follow [`ArchSpec::param_names`] order.
pub fn forward<T: Element>(
    arch: &ArchSpec,
    g: &mut Graph<T>,
    params: &[Var],
    x: Var,
) -> Result<Var> {
    let expected = arch.slots().len();
    if params.len() != expected {
        return Err(Error::Dimension(format!(
            "{:?} needs {expected} parameter tensors, got {}",
            arch.name,
            params.len()
        )));
    }
    let xs = g.value(x).shape();
    if xs.len() != 4 || xs[1..] != arch.input {
        return Err(Error::Dimension(format!(
            "batch shape {xs:?} does not match input {:?}",
            arch.input
        )));
    }
    match arch.name {
        ArchName::TinyResnet => {
            let p = params;
            let conv = |g: &mut Graph<T>, x, w, b, pad| -> Result<Var> {
                let y = g.conv2d(x, w, 1, pad)?;
                g.channel_bias(y, b)
            };
            let stem = conv(g, x, p[0], p[1], 1)?;
            let stem = g.relu(stem)?;

            let h = conv(g, stem, p[2], p[3], 1)?;
            let h = g.relu(h)?;
            let h = conv(g, h, p[4], p[5], 1)?;
            let h = g.add(h, stem)?;
            let b1 = g.relu(h)?;
            let pooled = g.max_pool2(b1)?;

            let h = conv(g, pooled, p[6], p[7], 1)?;
            let h = g.relu(h)?;
            let h = conv(g, h, p[8], p[9], 1)?;
            let skip = conv(g, pooled, p[10], p[11], 0)?;
            let h = g.add(h, skip)?;
            let b2 = g.relu(h)?;

            let feat = g.global_avg_pool(b2)?;
            g.dense(feat, p[12], Some(p[13]))
        }
        ArchName::Mlp => {
            let flat = g.flatten(x)?;
            let h = g.dense(flat, params[0], Some(params[1]))?;
            let h = g.relu(h)?;
            g.dense(h, params[2], Some(params[3]))
        }
    }
}

/// A parameterised classifier: one of the baseline, retrained or unlearned models.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    arch: ArchSpec,
    params: Vec<Tensor<f32>>,
    seed: u64,
}

/// Builds a model with fan-in scaled normal initialisation drawn from the
/// seed's init stream. Biases start at zero.
pub fn build_model(arch: ArchSpec, seed: u64) -> Result<Model> {
    arch.validate()?;
    let mut rng = rng::stream(seed, rng::INIT, &[]);
    let params = arch
        .slots()
        .into_iter()
        .map(|slot| {
            let numel: usize = slot.shape.iter().product();
            let std = match slot.init {
                Init::Relu { fan_in } => (2.0 / fan_in as f64).sqrt(),
                Init::Linear { fan_in } => (1.0 / fan_in as f64).sqrt(),
                Init::Residual { fan_in } => RESIDUAL_SCALE * (2.0 / fan_in as f64).sqrt(),
                Init::Zero => 0.0,
            };
            let data = if std == 0.0 {
                vec![0.0; numel]
            } else {
                let dist = Normal::new(0.0, std).expect("positive std");
                (0..numel).map(|_| dist.sample(&mut rng) as f32).collect()
            };
            Tensor::new(slot.shape, data)
        })
        .collect::<Result<_>>()?;
    Ok(Model { arch, params, seed })
}

impl Model {
    pub fn from_params(arch: ArchSpec, params: Vec<Tensor<f32>>, seed: u64) -> Result<Self> {
        arch.validate()?;
        let shapes = arch.param_shapes();
        if params.len() != shapes.len()
            || params
                .iter()
                .zip(&shapes)
                .any(|(p, s)| p.shape() != s.as_slice())
        {
            return Err(Error::Dimension(format!(
                "parameters do not match the {:?} layout",
                arch.name
            )));
        }
        Ok(Self { arch, params, seed })
    }

    pub fn arch(&self) -> &ArchSpec {
        &self.arch
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn params(&self) -> &[Tensor<f32>] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Tensor<f32>] {
        &mut self.params
    }

    pub fn param_count(&self) -> usize {
        self.params.iter().map(Tensor::numel).sum()
    }

    /// All parameter values concatenated in layout order.
    pub fn flat_params(&self) -> Vec<f32> {
        self.params
            .iter()
            .flat_map(|p| p.data().iter().copied())
            .collect()
    }

    /// Logits for a `[N, C, H, W]` batch. Pure: no parameter state changes.
    pub fn predict(&self, batch: &Tensor<f32>) -> Result<Tensor<f32>> {
        let mut g = Graph::<f32>::new();
        let params: Vec<Var> = self.params.iter().map(|p| g.input(p.clone())).collect();
        let x = g.input(batch.clone());
        let out = forward(&self.arch, &mut g, &params, x)?;
        Ok(g.value(out).clone())
    }

    /// Logits for every sample of `data`, as one `[N, K]` row-major buffer.
    pub fn logits(&self, data: &Dataset) -> Result<Vec<f32>> {
        if data.image_shape() != self.arch.input {
            return Err(Error::Dimension(format!(
                "dataset images {:?} do not match model input {:?}",
                data.image_shape(),
                self.arch.input
            )));
        }
        let idx: Vec<usize> = (0..data.len()).collect();
        let mut out = Vec::with_capacity(data.len() * self.arch.classes);
        for chunk in idx.chunks(EVAL_BATCH) {
            out.extend_from_slice(self.predict(&data.batch(chunk)?)?.data());
        }
        Ok(out)
    }

    pub fn predictions(&self, data: &Dataset) -> Result<Vec<usize>> {
        let k = self.arch.classes;
        Ok(self.logits(data)?.chunks(k).map(argmax).collect())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let names = self.arch.param_names();
        let named: Vec<(&str, &Tensor<f32>)> =
            names.iter().copied().zip(self.params.iter()).collect();
        let meta = serde_json::json!({ "arch": self.arch, "seed": self.seed });
        checkpoint::save(path, &named, meta)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let (header, tensors) = checkpoint::load(path)?;
        let bad = |reason: String| Error::Format {
            file: path.to_path_buf(),
            reason,
        };
        let arch: ArchSpec = serde_json::from_value(header.meta["arch"].clone())
            .map_err(|e| bad(format!("missing arch: {e}")))?;
        let seed = header.meta["seed"]
            .as_u64()
            .ok_or_else(|| bad("missing seed".into()))?;
        let names = arch.param_names();
        if tensors.len() != names.len() || tensors.iter().zip(&names).any(|((n, _), e)| n != e) {
            return Err(bad("parameter names do not match the architecture".into()));
        }
        Model::from_params(arch, tensors.into_iter().map(|(_, t)| t).collect(), seed)
            .map_err(|e| bad(e.to_string()))
    }
}

/// Index of the largest logit; ties go to the lowest class index.
pub fn argmax(row: &[f32]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// Percentage of samples whose predicted class equals the label.
pub fn accuracy(model: &Model, data: &Dataset) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::Input("accuracy of an empty dataset".into()));
    }
    let preds = model.predictions(data)?;
    Ok(percent_correct(&preds, data.labels()))
}

pub(crate) fn percent_correct(preds: &[usize], labels: &[usize]) -> f64 {
    let hits = preds.iter().zip(labels).filter(|(p, y)| p == y).count();
    100.0 * hits as f64 / labels.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Split;

    #[test]
    fn mlp_param_count_closed_form() {
        let arch = ArchSpec::mlp([1, 4, 4], 2);
        // fc1: 16*32 + 32, fc2: 32*2 + 2
        assert_eq!(arch.param_count(), 16 * 32 + 32 + 32 * 2 + 2);
        assert_eq!(build_model(arch, 0).unwrap().param_count(), 610);
    }

    #[test]
    fn tiny_resnet_is_about_five_thousand_params() {
        let arch = ArchSpec::tiny_resnet([3, 16, 16], 10);
        assert_eq!(arch.param_count(), 5194);
    }

    #[test]
    fn init_is_seeded() {
        let arch = ArchSpec::tiny_resnet([3, 8, 8], 4);
        let a = build_model(arch, 5).unwrap();
        assert_eq!(a, build_model(arch, 5).unwrap());
        assert_ne!(a.flat_params(), build_model(arch, 6).unwrap().flat_params());
    }

    #[test]
    fn zero_head_gives_zero_logits() {
        let arch = ArchSpec::tiny_resnet([3, 6, 6], 3);
        let mut m = build_model(arch, 1).unwrap();
        let n = m.params().len();
        for p in &mut m.params_mut()[n - 2..] {
            p.data_mut().fill(0.0);
        }
        let batch = Tensor::full(vec![2, 3, 6, 6], 0.4);
        assert!(m.predict(&batch).unwrap().data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn predict_rejects_wrong_shape() {
        let m = build_model(ArchSpec::mlp([1, 4, 4], 2), 0).unwrap();
        let err = m.predict(&Tensor::zeros(vec![1, 1, 5, 4])).unwrap_err();
        assert!(matches!(err, Error::Dimension(_)));
    }

    #[test]
    fn argmax_ties_go_low() {
        assert_eq!(argmax(&[1.0, 3.0, 3.0]), 1);
        assert_eq!(argmax(&[0.0, 0.0]), 0);
    }

    #[test]
    fn constant_model_on_balanced_data_is_chance() {
        let arch = ArchSpec::mlp([1, 2, 2], 10);
        let mut m = build_model(arch, 0).unwrap();
        for p in m.params_mut() {
            p.data_mut().fill(0.0);
        }
        let labels: Vec<usize> = (0..50).map(|i| i % 10).collect();
        let ds = Dataset::new(vec![0.5; 200], labels, 10, [1, 2, 2], Split::Test).unwrap();
        assert_eq!(accuracy(&m, &ds).unwrap(), 10.0);
    }

    #[test]
    fn empty_dataset_accuracy_is_input_error() {
        let m = build_model(ArchSpec::mlp([1, 2, 2], 2), 0).unwrap();
        let ds = Dataset::new(vec![], vec![], 2, [1, 2, 2], Split::Test).unwrap();
        assert!(matches!(accuracy(&m, &ds), Err(Error::Input(_))));
    }

    #[test]
    fn checkpoint_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.params");
        let m = build_model(ArchSpec::tiny_resnet([3, 4, 4], 2), 9).unwrap();
        m.save(&path).unwrap();
        assert_eq!(Model::load(&path).unwrap(), m);
    }
}
