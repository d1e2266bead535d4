//! Runs a shrunken desk grid end to end and prints the aggregate table.
//!
//! cargo run --example run_grid -- [output dir]

use std::path::PathBuf;

use augunlearn::augment::Scenario;
use augunlearn::eval::GapMode;
use augunlearn::experiment::{aggregate_rows, preset, run_experiment, DatasetSpec};

fn main() -> augunlearn::Result<()> {
    let out = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("augunlearn_grid"));
    let mut cfg = preset("desk")?;
    cfg.output_dir = out;
    cfg.dataset = DatasetSpec::Synthetic {
        classes: 5,
        train_per_class: 60,
        test_per_class: 30,
        image_shape: [3, 12, 12],
        noise: 0.2,
        max_shift: 2,
        bumps: 3,
        data_seed: 9,
    };
    cfg.baseline.epochs = 20;
    cfg.unlearn.epochs = 5;
    cfg.policies = vec![Scenario::NoAug, Scenario::Default];
    cfg.seeds = vec![0, 1];

    let manifest = run_experiment(&cfg)?;
    println!(
        "{} runs, {} failed, written to {}",
        manifest.runs.len(),
        manifest.failures(),
        cfg.output_dir.display()
    );
    println!(
        "{:<8} {:<10} {:>7} {:>7} {:>7} {:>7} {:>6}",
        "method", "policy", "UA", "RA", "TA", "MIA", "AG"
    );
    for row in aggregate_rows(&manifest.runs, GapMode::PerSeed) {
        println!(
            "{:<8} {:<10} {:>7.2} {:>7.2} {:>7.2} {:>7.2} {:>6.2}",
            row.method, row.policy, row.ua_mean, row.ra_mean, row.ta_mean, row.mia_mean, row.ag
        );
    }
    Ok(())
}
