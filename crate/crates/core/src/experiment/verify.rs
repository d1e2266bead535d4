use std::path::Path;

use super::run::{load_datasets, Cell, RunManifest, RunStatus};
use crate::data::split_forget;
use crate::error::Result;
use crate::models::Model;
use crate::unlearn::{compute_saliency_mask, Method};

/// Outcome of re-checking a manifest. Empty `problems` means every check passed.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct VerifyReport {
    pub checked: usize,
    pub problems: Vec<String>,
}

impl VerifyReport {
    pub fn ok(&self) -> bool {
        self.problems.is_empty()
    }
}

const METRIC_TOL: f64 = 1e-9;

/// Reloads every stored checkpoint and re-checks the manifest's claims:
/// grid completeness, finite weights of the configured architecture,
/// metrics recomputed from the checkpoint, and the SalUn masking contract.
pub fn verify(manifest_path: &Path) -> Result<VerifyReport> {
    let manifest = RunManifest::load(manifest_path)?;
    let dir = manifest_path.parent().unwrap_or(Path::new("."));
    let cfg = &manifest.config;
    let mut report = VerifyReport::default();
    let mut problem = |msg: String| report.problems.push(msg);

    let expected = RunManifest::expected_rows(cfg);
    if manifest.runs.len() != expected {
        problem(format!(
            "grid has {} rows, expected {expected}",
            manifest.runs.len()
        ));
    }
    if manifest.config_hash != cfg.hash() {
        problem("stored config hash does not match the stored config".into());
    }
    let data = match load_datasets(&cfg.dataset) {
        Ok(d) => Some(d),
        Err(e) => {
            problem(format!("cannot load data, metrics not rechecked: {e}"));
            None
        }
    };
    let arch = cfg.arch_spec();
    let mut checked = 0;
    for entry in manifest.runs.iter().filter(|e| e.status == RunStatus::Ok) {
        checked += 1;
        let id = &entry.id;
        let (Some(ck), Some(stored)) = (&entry.checkpoint, &entry.metrics) else {
            problem(format!("{id}: completed run without checkpoint or metrics"));
            continue;
        };
        for (name, v) in [
            ("UA", stored.ua),
            ("RA", stored.ra),
            ("TA", stored.ta),
            ("MIA", stored.mia),
        ] {
            if !(0.0..=100.0).contains(&v) {
                problem(format!("{id}: {name} = {v} outside [0, 100]"));
            }
        }
        if !(stored.rte >= 0.0) {
            problem(format!("{id}: negative RTE"));
        }
        let model = match Model::load(&dir.join(ck)) {
            Ok(m) => m,
            Err(e) => {
                problem(format!("{id}: {e}"));
                continue;
            }
        };
        if *model.arch() != arch {
            problem(format!(
                "{id}: checkpoint architecture differs from the config"
            ));
            continue;
        }
        if !model.params().iter().all(|p| p.all_finite()) {
            problem(format!("{id}: non-finite weights"));
        }
        let Some((train, test)) = &data else { continue };
        let partition = match split_forget(train, entry.forget, entry.seed) {
            Ok(p) => p,
            Err(e) => {
                problem(format!("{id}: {e}"));
                continue;
            }
        };
        let cell = Cell {
            cfg,
            train,
            test,
            policy: entry.policy,
            seed: entry.seed,
        };
        match cell.evaluate(&model, &partition, entry.method, stored.rte) {
            Ok(fresh) => {
                let pairs = [
                    (fresh.ua, stored.ua),
                    (fresh.ra, stored.ra),
                    (fresh.ta, stored.ta),
                    (fresh.mia, stored.mia),
                ];
                if pairs.iter().any(|(a, b)| (a - b).abs() > METRIC_TOL) {
                    problem(format!(
                        "{id}: recomputed metrics {pairs:?} differ from the manifest"
                    ));
                }
            }
            Err(e) => problem(format!("{id}: re-evaluation failed: {e}")),
        }
        if entry.method == Method::SalUn {
            let base_path = dir
                .join(ck)
                .with_file_name(format!("baseline_{}_s{}.ckpt", entry.policy, entry.seed));
            let check = Model::load(&base_path).and_then(|base| {
                let mask = compute_saliency_mask(&base, &partition, train, &cfg.salun)?;
                let frozen_moved = model
                    .params()
                    .iter()
                    .zip(base.params())
                    .zip(&mask.masks)
                    .any(|((u, o), m)| {
                        u.data()
                            .iter()
                            .zip(o.data())
                            .zip(m)
                            .any(|((a, b), &keep)| keep == 0 && a.to_bits() != b.to_bits())
                    });
                Ok(frozen_moved)
            });
            match check {
                Ok(false) => {}
                Ok(true) => problem(format!("{id}: an unselected parameter moved")),
                Err(e) => problem(format!("{id}: masking contract not checked: {e}")),
            }
        }
    }
    report.checked = checked;
    Ok(report)
}
