//! Forgets a random 10% of the training set with each method and scores the
//! result against a model retrained without it.

use augunlearn::augment::{AugmentPolicy, Scenario};
use augunlearn::data::{
    make_synthetic, split_forget, Dataset, ForgetMode, ForgetPartition, Split, SyntheticSpec,
};
use augunlearn::eval::{
    core_accuracies, fit_mia_attacker, metric_gap, mia_score, GapMode, MetricsRecord,
};
use augunlearn::models::{ArchSpec, Model};
use augunlearn::unlearn::{
    compute_saliency_mask, fine_tune, measure_rte, random_label, retrain, salun, train, Method,
    SaliencyConfig, TrainConfig, Trained,
};

fn score(
    method: Method,
    model: &Model,
    part: &ForgetPartition,
    train_set: &Dataset,
    test: &Dataset,
    rte: f64,
) -> augunlearn::Result<MetricsRecord> {
    let acc = core_accuracies(model, part, train_set, test)?;
    let attacker = fit_mia_attacker(model, part, train_set, test, 0)?;
    Ok(MetricsRecord {
        method,
        policy: "default".into(),
        seed: 0,
        ua: acc.ua,
        ra: acc.ra,
        ta: acc.ta,
        mia: mia_score(model, part, train_set, &attacker)?,
        rte,
        ta_retained_classes: None,
    })
}

fn main() -> augunlearn::Result<()> {
    let mut spec = SyntheticSpec::new(10, 100, [3, 16, 16], 2024);
    spec.noise = 0.2;
    spec.max_shift = 3;
    let train_set = make_synthetic(&spec, Split::Train)?;
    let test = make_synthetic(&spec, Split::Test)?;
    let arch = ArchSpec::tiny_resnet([3, 16, 16], 10);
    let policy = AugmentPolicy::new(Scenario::Default);

    let base = TrainConfig::new(20, 0.01, 32, 0)
        .with_momentum(0.9, 5e-4)
        .with_policy(policy.clone());
    let original = train(arch, &train_set, &base)?.model;
    let part = split_forget(&train_set, ForgetMode::Random { rate: 0.1 }, 0)?;
    let short = TrainConfig {
        epochs: 4,
        ..base.clone()
    };

    let (rt, rte) = measure_rte(|| retrain(arch, &part, &train_set, &base));
    let retrained = score(Method::Retrain, &rt?.model, &part, &train_set, &test, rte)?;

    let runs: Vec<(Method, Box<dyn Fn() -> augunlearn::Result<Trained>>)> = vec![
        (
            Method::FineTune,
            Box::new(|| fine_tune(&original, &part, &train_set, &short)),
        ),
        (
            Method::RandomLabel,
            Box::new(|| random_label(&original, &part, &train_set, &short)),
        ),
        (
            Method::SalUn,
            Box::new(|| {
                let mask = compute_saliency_mask(
                    &original,
                    &part,
                    &train_set,
                    &SaliencyConfig::default(),
                )?;
                salun(&original, &part, &train_set, &mask, &short)
            }),
        ),
    ];

    println!(
        "{:<8} {:>6} {:>6} {:>6} {:>6} {:>6}",
        "method", "UA", "RA", "TA", "MIA", "AG"
    );
    let r = &retrained;
    println!(
        "{:<8} {:>6.2} {:>6.2} {:>6.2} {:>6.2} {:>6}",
        "retrain", r.ua, r.ra, r.ta, r.mia, "-"
    );
    for (method, run) in runs {
        let (out, rte) = measure_rte(run);
        let m = score(method, &out?.model, &part, &train_set, &test, rte)?;
        let gap = metric_gap(
            std::slice::from_ref(&m),
            std::slice::from_ref(&retrained),
            GapMode::PerSeed,
        )?;
        println!(
            "{:<8} {:>6.2} {:>6.2} {:>6.2} {:>6.2} {:>6.2}",
            method.name(),
            m.ua,
            m.ra,
            m.ta,
            m.mia,
            gap.ag
        );
    }
    Ok(())
}
