//! Fits the confidence-threshold membership attacker on a trained model and
//! compares how often it flags training vs held-out samples.

use augunlearn::data::{make_synthetic, split_forget, ForgetMode, Split, SyntheticSpec};
use augunlearn::eval::{confidences, fit_mia_attacker, mia_score};
use augunlearn::models::ArchSpec;
use augunlearn::unlearn::{train, TrainConfig};

fn main() -> augunlearn::Result<()> {
    let mut spec = SyntheticSpec::new(5, 30, [3, 12, 12], 7);
    spec.noise = 0.8;
    spec.max_shift = 3;
    let train_set = make_synthetic(&spec, Split::Train)?;
    let test = make_synthetic(&spec, Split::Test)?;
    let cfg = TrainConfig::new(30, 0.01, 16, 1).with_momentum(0.9, 0.0);
    let model = train(ArchSpec::tiny_resnet([3, 12, 12], 5), &train_set, &cfg)?.model;

    let part = split_forget(&train_set, ForgetMode::Random { rate: 0.2 }, 3)?;
    let attacker = fit_mia_attacker(&model, &part, &train_set, &test, 42)?;
    println!(
        "threshold {:.4}, balanced accuracy on the fit draw {:.2}%",
        attacker.threshold,
        attacker.fit_accuracy.unwrap_or(f64::NAN)
    );

    let all_test: Vec<usize> = (0..test.len()).collect();
    let test_conf = confidences(&model, &test, &all_test)?;
    println!(
        "flagged as members: forget set {:.2}%, test set {:.2}%",
        mia_score(&model, &part, &train_set, &attacker)?,
        attacker.score(&test_conf)?
    );
    Ok(())
}
