use augunlearn::augment::{AugmentPolicy, Scenario};
use augunlearn::data::{
    make_synthetic, split_forget, Dataset, ForgetMode, ForgetPartition, Split, SyntheticSpec,
};
use augunlearn::models::{build_model, ArchSpec, Model};
use augunlearn::unlearn::{
    draw_random_labels, fine_tune, random_label, random_label_with, retrain, salun, select_top_k,
    top_k_count, RandomLabelOptions, RelabelMixture, SaliencyMask, TrainConfig,
};
use augunlearn::Error;
use proptest::prelude::*;
use statrs::distribution::{ChiSquared, ContinuousCDF};

fn toy(classes: usize, per_class: usize, seed: u64) -> Dataset {
    let mut spec = SyntheticSpec::new(classes, per_class, [1, 4, 4], seed);
    spec.noise = 0.2;
    make_synthetic(&spec, Split::Train).unwrap()
}

fn bits(m: &Model) -> Vec<u32> {
    m.flat_params().iter().map(|v| v.to_bits()).collect()
}

#[test]
fn relabels_are_uniform_over_the_other_classes() {
    let k = 10;
    let data = toy(k, 1000, 3);
    let all: Vec<usize> = (0..data.len()).collect();
    let labels = draw_random_labels(&data, &all, 17, None).unwrap();
    let mut counts = vec![vec![0u64; k]; k];
    for (&i, &y) in all.iter().zip(&labels) {
        assert_ne!(y, data.label(i), "relabel kept the true class");
        counts[data.label(i)][y] += 1;
    }
    // per true class: 1000 draws over the 9 other classes
    let chi = ChiSquared::new((k - 2) as f64).unwrap();
    let mut worst_p: f64 = 1.0;
    for (true_class, row) in counts.iter().enumerate() {
        let expected = 1000.0 / (k - 1) as f64;
        let stat: f64 = row
            .iter()
            .enumerate()
            .filter(|&(c, _)| c != true_class)
            .map(|(_, &n)| (n as f64 - expected).powi(2) / expected)
            .sum();
        worst_p = worst_p.min(1.0 - chi.cdf(stat));
    }
    // Bonferroni over the 10 rows at alpha = 0.01
    assert!(worst_p > 0.001, "min p-value {worst_p}");
}

#[test]
fn relabel_draws_are_seeded() {
    let data = toy(4, 20, 1);
    let idx: Vec<usize> = (0..data.len()).step_by(3).collect();
    let a = draw_random_labels(&data, &idx, 5, None).unwrap();
    assert_eq!(a, draw_random_labels(&data, &idx, 5, None).unwrap());
    assert_ne!(a, draw_random_labels(&data, &idx, 6, None).unwrap());
    assert_ne!(
        draw_random_labels(&data, &idx, 5, Some(0)).unwrap(),
        draw_random_labels(&data, &idx, 5, Some(1)).unwrap()
    );
}

#[test]
fn salun_with_full_mask_is_random_label() {
    let data = toy(3, 20, 2);
    let part = split_forget(&data, ForgetMode::Random { rate: 0.3 }, 4).unwrap();
    let model = build_model(ArchSpec::mlp([1, 4, 4], 3), 8).unwrap();
    let cfg = TrainConfig::new(3, 0.05, 8, 2).with_momentum(0.9, 5e-4);
    let shapes = model.params().iter().map(|p| p.shape().to_vec()).collect();
    let full = salun(&model, &part, &data, &SaliencyMask::all_ones(shapes), &cfg).unwrap();
    let rl = random_label(&model, &part, &data, &cfg).unwrap();
    assert_eq!(bits(&full.model), bits(&rl.model));
}

#[test]
fn salun_with_empty_mask_changes_nothing() {
    let data = toy(3, 20, 2);
    let part = split_forget(&data, ForgetMode::Random { rate: 0.3 }, 4).unwrap();
    let model = build_model(ArchSpec::mlp([1, 4, 4], 3), 8).unwrap();
    let cfg = TrainConfig::new(2, 0.05, 8, 2).with_momentum(0.9, 5e-4);
    let shapes = model.params().iter().map(|p| p.shape().to_vec()).collect();
    let out = salun(&model, &part, &data, &SaliencyMask::all_zeros(shapes), &cfg).unwrap();
    assert_eq!(bits(&out.model), bits(&model));
}

#[test]
fn forget_only_mixture_differs_from_default() {
    let data = toy(3, 20, 2);
    let part = split_forget(&data, ForgetMode::Random { rate: 0.3 }, 4).unwrap();
    let model = build_model(ArchSpec::mlp([1, 4, 4], 3), 8).unwrap();
    let cfg = TrainConfig::new(2, 0.05, 8, 2);
    let a = random_label(&model, &part, &data, &cfg).unwrap();
    let opts = RandomLabelOptions {
        mixture: RelabelMixture::ForgetOnly,
        redraw_each_epoch: false,
    };
    let b = random_label_with(&model, &part, &data, &cfg, opts).unwrap();
    assert_ne!(bits(&a.model), bits(&b.model));
}

#[test]
fn zero_lr_fine_tune_keeps_weights_even_with_momentum() {
    let data = toy(2, 10, 1);
    let part = split_forget(&data, ForgetMode::Random { rate: 0.5 }, 1).unwrap();
    let model = build_model(ArchSpec::mlp([1, 4, 4], 2), 1).unwrap();
    let cfg = TrainConfig::new(3, 0.0, 4, 1).with_momentum(0.9, 0.0);
    let out = fine_tune(&model, &part, &data, &cfg).unwrap();
    assert_eq!(out.model, model);
    assert_eq!(out.history.epoch_loss.len(), 3);
}

#[test]
fn retrain_is_deterministic_and_needs_a_remain_set() {
    let data = toy(2, 10, 1);
    let part = split_forget(&data, ForgetMode::Random { rate: 0.5 }, 1).unwrap();
    let arch = ArchSpec::tiny_resnet([1, 4, 4], 2);
    let cfg = TrainConfig::new(2, 0.02, 4, 3).with_policy(AugmentPolicy::new(Scenario::Default));
    let a = retrain(arch, &part, &data, &cfg).unwrap();
    let b = retrain(arch, &part, &data, &cfg).unwrap();
    assert_eq!(bits(&a.model), bits(&b.model));
    assert_eq!(a.history, b.history);

    let everything: Vec<usize> = (0..data.len()).collect();
    let all =
        ForgetPartition::from_forget(data.len(), &everything, ForgetMode::Random { rate: 1.0 }, 0)
            .unwrap();
    assert!(matches!(
        retrain(arch, &all, &data, &cfg),
        Err(Error::Input(_))
    ));
}

#[test]
fn divergence_is_reported() {
    let data = toy(2, 10, 1);
    let cfg = TrainConfig::new(5, 1e36, 4, 3).with_momentum(0.9, 0.0);
    let err = augunlearn::unlearn::train(ArchSpec::mlp([1, 4, 4], 2), &data, &cfg).unwrap_err();
    assert!(matches!(err, Error::Divergence { .. }), "{err:?}");
}

proptest! {
    #[test]
    fn partitions_cover_disjointly(
        classes in 2usize..5, per in 1usize..30, rate in 0.01f64..0.99, seed in any::<u64>(), class_pick in 0usize..5,
    ) {
        let data = toy(classes, per, 0);
        let n = data.len();
        for mode in [ForgetMode::Random { rate }, ForgetMode::Classwise { class: class_pick % classes }] {
            let part = match split_forget(&data, mode, seed) {
                Ok(p) => p,
                Err(Error::Input(_)) => continue,
                Err(e) => return Err(TestCaseError::fail(e.to_string())),
            };
            let mut seen = vec![0u8; n];
            for &i in part.forget().iter().chain(part.remain()) {
                seen[i] += 1;
            }
            prop_assert!(seen.iter().all(|&c| c == 1));
            prop_assert!(part.forget().windows(2).all(|w| w[0] < w[1]));
            match mode {
                ForgetMode::Random { rate } => {
                    prop_assert_eq!(part.forget().len(), (rate * n as f64).round() as usize);
                }
                ForgetMode::Classwise { class } => {
                    let want: Vec<usize> = (0..n).filter(|&i| data.label(i) == class).collect();
                    prop_assert_eq!(part.forget(), &want[..]);
                }
            }
            prop_assert_eq!(&split_forget(&data, mode, seed).unwrap(), &part);
        }
    }

    #[test]
    fn top_k_selects_exactly_ceil_k_p(scores in prop::collection::vec(0u8..5, 1..300), k in 0.001f64..=1.0) {
        let s: Vec<f64> = scores.iter().map(|&v| f64::from(v)).collect();
        let picked = select_top_k(&s, k).unwrap();
        let count = top_k_count(k, s.len());
        prop_assert_eq!(picked.iter().filter(|&&b| b).count(), count);
        prop_assert!(count >= 1 && count <= s.len());
        // nothing unpicked outranks anything picked
        let min_in = s.iter().zip(&picked).filter(|(_, &p)| p).map(|(v, _)| *v).fold(f64::INFINITY, f64::min);
        let max_out = s.iter().zip(&picked).filter(|(_, &p)| !p).map(|(v, _)| *v).fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(max_out <= min_in);
    }
}

#[test]
fn mask_size_guards_float_error() {
    assert_eq!(top_k_count(0.1, 610), 61);
    assert_eq!(top_k_count(0.5, 5194), 2597);
    assert_eq!(top_k_count(0.9, 10), 9);
    assert_eq!(top_k_count(1e-9, 10), 1);
}
