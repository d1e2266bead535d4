use augunlearn::eval::{
    accuracy_over, average_of, fit_threshold, metric_gap, GapMode, MetricsRecord,
};
use augunlearn::unlearn::Method;
use augunlearn::Error;
use proptest::prelude::*;

fn rec(method: Method, seed: u64, v: [f64; 4]) -> MetricsRecord {
    MetricsRecord {
        method,
        policy: "default".into(),
        seed,
        ua: v[0],
        ra: v[1],
        ta: v[2],
        mia: v[3],
        rte: 0.1,
        ta_retained_classes: None,
    }
}

fn metrics() -> impl Strategy<Value = [f64; 4]> {
    [
        0.0f64..=100.0,
        0.0f64..=100.0,
        0.0f64..=100.0,
        0.0f64..=100.0,
    ]
}

proptest! {
    #[test]
    fn ag_ignores_gap_order(g in metrics(), perm in Just([0usize, 1, 2, 3]).prop_shuffle()) {
        let p = [g[perm[0]], g[perm[1]], g[perm[2]], g[perm[3]]];
        prop_assert!((average_of(g) - average_of(p)).abs() < 1e-12);
    }

    #[test]
    fn ag_is_one_lipschitz_in_max_norm(a in metrics(), b in metrics()) {
        let max = (0..4).map(|i| (a[i] - b[i]).abs()).fold(0.0, f64::max);
        prop_assert!((average_of(a) - average_of(b)).abs() <= max + 1e-12);
    }

    #[test]
    fn per_seed_gap_bounds_gap_of_means(runs in prop::collection::vec((metrics(), metrics()), 1..8)) {
        let mu: Vec<_> = runs.iter().enumerate().map(|(s, (a, _))| rec(Method::FineTune, s as u64, *a)).collect();
        let rt: Vec<_> = runs.iter().enumerate().map(|(s, (_, b))| rec(Method::Retrain, s as u64, *b)).collect();
        let per = metric_gap(&mu, &rt, GapMode::PerSeed).unwrap();
        let ofm = metric_gap(&mu, &rt, GapMode::OfMeans).unwrap();
        for (p, o) in [(per.ua, ofm.ua), (per.ra, ofm.ra), (per.ta, ofm.ta), (per.mia, ofm.mia), (per.ag, ofm.ag)] {
            prop_assert!(p >= o - 1e-9, "{p} < {o}");
        }
    }

    #[test]
    fn gaps_survive_the_error_rate_flip(runs in prop::collection::vec((metrics(), metrics()), 1..6)) {
        let flip = |v: [f64; 4]| v.map(|x| 100.0 - x);
        for mode in [GapMode::PerSeed, GapMode::OfMeans] {
            let mu: Vec<_> = runs.iter().enumerate().map(|(s, (a, _))| rec(Method::SalUn, s as u64, *a)).collect();
            let rt: Vec<_> = runs.iter().enumerate().map(|(s, (_, b))| rec(Method::Retrain, s as u64, *b)).collect();
            let mu_f: Vec<_> = runs.iter().enumerate().map(|(s, (a, _))| rec(Method::SalUn, s as u64, flip(*a))).collect();
            let rt_f: Vec<_> = runs.iter().enumerate().map(|(s, (_, b))| rec(Method::Retrain, s as u64, flip(*b))).collect();
            let g = metric_gap(&mu, &rt, mode).unwrap();
            let f = metric_gap(&mu_f, &rt_f, mode).unwrap();
            prop_assert!((g.ag - f.ag).abs() < 1e-9);
        }
    }

    #[test]
    fn mia_fit_is_invariant_to_monotone_transforms(
        members in prop::collection::vec(0.0f64..1.0, 1..60),
        nonmembers in prop::collection::vec(0.0f64..1.0, 1..60),
        probe in prop::collection::vec(0.0f64..1.0, 1..40),
    ) {
        let f = |c: f64| (3.0 * c).exp() + c;
        let tm: Vec<f64> = members.iter().map(|&c| f(c)).collect();
        let tn: Vec<f64> = nonmembers.iter().map(|&c| f(c)).collect();
        let tp: Vec<f64> = probe.iter().map(|&c| f(c)).collect();
        let a = fit_threshold(&members, &nonmembers).unwrap();
        let b = fit_threshold(&tm, &tn).unwrap();
        prop_assert_eq!(a.fit_accuracy, b.fit_accuracy);
        prop_assert_eq!(b.threshold, f(a.threshold));
        prop_assert_eq!(a.score(&probe).unwrap(), b.score(&tp).unwrap());
    }

    #[test]
    fn accuracy_of_a_union_is_the_weighted_mean(
        hits in prop::collection::vec(any::<bool>(), 2..80), cut in 1usize..79,
    ) {
        let n = hits.len();
        let cut = cut.min(n - 1);
        let labels = vec![1usize; n];
        let preds: Vec<usize> = hits.iter().map(|&h| usize::from(h)).collect();
        let all: Vec<usize> = (0..n).collect();
        let (a, b) = all.split_at(cut);
        let whole = accuracy_over(&preds, &labels, &all).unwrap();
        let parts = (accuracy_over(&preds, &labels, a).unwrap() * a.len() as f64
            + accuracy_over(&preds, &labels, b).unwrap() * b.len() as f64)
            / n as f64;
        prop_assert!((whole - parts).abs() < 1e-9);
    }
}

#[test]
fn per_seed_gap_needs_paired_seeds() {
    let mu = [
        rec(Method::FineTune, 0, [1.0; 4]),
        rec(Method::FineTune, 1, [1.0; 4]),
    ];
    let rt = [
        rec(Method::Retrain, 0, [2.0; 4]),
        rec(Method::Retrain, 2, [2.0; 4]),
    ];
    assert!(matches!(
        metric_gap(&mu, &rt, GapMode::PerSeed),
        Err(Error::Input(_))
    ));
    let g = metric_gap(&mu, &rt, GapMode::OfMeans).unwrap();
    assert_eq!(g.ag, 1.0);
}

#[test]
fn threshold_fit_separates_disjoint_confidences() {
    let a = fit_threshold(&[0.8, 0.9, 0.95], &[0.1, 0.2, 0.3]).unwrap();
    assert_eq!(a.fit_accuracy, Some(100.0));
    assert!(a.threshold >= 0.3 && a.threshold < 0.8);
    assert!(fit_threshold(&[], &[0.5]).is_err());
}

#[test]
fn empty_index_set_has_no_accuracy() {
    assert!(accuracy_over(&[0], &[0], &[]).is_err());
}
