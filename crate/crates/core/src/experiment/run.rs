use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use log::{info, warn};
use serde::{Deserialize, Serialize};

use super::config::{DatasetSpec, ExperimentConfig};
use super::report::{write_reports, ReportFormat};
use super::write_atomic;
use crate::augment::{AugmentPolicy, Image, Scenario};
use crate::data::{
    load_cifar, make_synthetic, split_forget, CifarVariant, Dataset, ForgetMode, ForgetPartition,
    Split,
};
use crate::error::{Error, Result};
use crate::eval::{
    accuracy_excluding_class, core_accuracies, fit_mia_attacker, mia_score, MetricsRecord,
};
use crate::models::Model;
use crate::rng;
use crate::unlearn::{
    compute_saliency_mask, fine_tune, measure_rte, random_label_with, retrain, salun_with, train,
    Method,
};

pub const MANIFEST_FORMAT: &str = "augunlearn.manifest";
pub const MANIFEST_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RunStatus {
    Ok,
    Failed,
}

/// One row of the grid: a retrain or unlearning run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunEntry {
    pub id: String,
    pub dataset: String,
    pub method: Method,
    pub policy: Scenario,
    pub forget: ForgetMode,
    pub seed: u64,
    pub status: RunStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    /// Relative to the manifest's directory.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub checkpoint: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metrics: Option<MetricsRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub format: String,
    pub version: u32,
    pub config_hash: String,
    pub config: ExperimentConfig,
    pub runs: Vec<RunEntry>,
    /// Report files written so far, relative to the manifest's directory.
    #[serde(default)]
    pub reports: Vec<PathBuf>,
}

impl RunManifest {
    pub fn failures(&self) -> usize {
        self.runs
            .iter()
            .filter(|r| r.status == RunStatus::Failed)
            .count()
    }

    /// Number of rows a failure-free run of the config produces.
    pub fn expected_rows(cfg: &ExperimentConfig) -> usize {
        cfg.policies.len() * cfg.seeds.len() * cfg.forget.modes().len() * (cfg.methods.len() + 1)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let m: RunManifest = serde_json::from_str(&text).map_err(|e| Error::Format {
            file: path.to_path_buf(),
            reason: e.to_string(),
        })?;
        if m.format != MANIFEST_FORMAT || m.version != MANIFEST_VERSION {
            return Err(Error::Format {
                file: path.to_path_buf(),
                reason: format!("not a version {MANIFEST_VERSION} manifest"),
            });
        }
        Ok(m)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut text =
            serde_json::to_string_pretty(self).map_err(|e| Error::Serde(e.to_string()))?;
        text.push('\n');
        write_atomic(path, text.as_bytes())
    }
}

/// Loads `(train, test)` for a dataset spec.
pub fn load_datasets(spec: &DatasetSpec) -> Result<(Dataset, Dataset)> {
    match spec {
        DatasetSpec::Synthetic { .. } => {
            let train = make_synthetic(&spec.synthetic(false).expect("synthetic"), Split::Train)?;
            let test = make_synthetic(&spec.synthetic(true).expect("synthetic"), Split::Test)?;
            Ok((train, test))
        }
        DatasetSpec::Cifar10 {
            path,
            train_subsample,
            test_subsample,
        }
        | DatasetSpec::Cifar100 {
            path,
            train_subsample,
            test_subsample,
        } => {
            let variant = if matches!(spec, DatasetSpec::Cifar10 { .. }) {
                CifarVariant::Cifar10
            } else {
                CifarVariant::Cifar100
            };
            let (train, test) = load_cifar(path, variant)?;
            Ok((
                subsample(train, *train_subsample, 0)?,
                subsample(test, *test_subsample, 1)?,
            ))
        }
    }
}

fn subsample(data: Dataset, n: Option<usize>, salt: u64) -> Result<Dataset> {
    match n {
        Some(n) if n < data.len() => {
            let mut r = rng::stream(salt, rng::PARTITION, &[u64::MAX]);
            let mut idx = rand::seq::index::sample(&mut r, data.len(), n).into_vec();
            idx.sort_unstable();
            data.subset(&idx)
        }
        _ => Ok(data),
    }
}

/// Applies `policy` once to every image (epoch 0), for augmented evaluation.
pub fn augment_dataset(data: &Dataset, policy: &AugmentPolicy, seed: u64) -> Result<Dataset> {
    let mut out = data.clone();
    let shape = data.image_shape();
    for i in 0..data.len() {
        let img = Image::from_slice(shape, data.image(i))?;
        let aug = policy.apply(&img, i as u64, 0, seed);
        out.image_mut(i).copy_from_slice(&aug.data);
    }
    Ok(out)
}

fn forget_key(mode: ForgetMode) -> String {
    match mode {
        ForgetMode::Random { rate } => format!("random-{rate}"),
        ForgetMode::Classwise { class } => format!("classwise-{class}"),
    }
}

/// Checkpoints and their timings for one config hash.
struct Store {
    root: PathBuf,
    rel: PathBuf,
    timings_path: PathBuf,
    timings: BTreeMap<String, f64>,
}

impl Store {
    fn open(output: &Path, hash: &str) -> Result<Self> {
        let rel = Path::new("checkpoints").join(&hash[..16]);
        let root = output.join(&rel);
        std::fs::create_dir_all(&root).map_err(|e| Error::io(&root, e))?;
        let timings_path = root.join("timings.json");
        let timings = match std::fs::read_to_string(&timings_path) {
            Ok(text) => serde_json::from_str(&text).map_err(|e| Error::Format {
                file: timings_path.clone(),
                reason: e.to_string(),
            })?,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => BTreeMap::new(),
            Err(e) => return Err(Error::io(&timings_path, e)),
        };
        Ok(Self {
            root,
            rel,
            timings_path,
            timings,
        })
    }

    /// Returns the stored model for `stage` or produces, times and stores it.
    fn get_or_run(
        &mut self,
        stage: &str,
        produce: impl FnOnce() -> Result<Model>,
    ) -> Result<(Model, f64, PathBuf)> {
        let file = format!("{stage}.ckpt");
        let path = self.root.join(&file);
        let rel = self.rel.join(&file);
        if let Some(&rte) = self.timings.get(stage) {
            match Model::load(&path) {
                Ok(model) => {
                    info!("reusing {stage}");
                    return Ok((model, rte, rel));
                }
                Err(e) => warn!("recomputing {stage}: {e}"),
            }
        }
        info!("running {stage}");
        let (model, rte) = measure_rte(produce);
        let model = model?;
        model.save(&path)?;
        self.timings.insert(stage.to_string(), rte);
        let mut text =
            serde_json::to_string_pretty(&self.timings).map_err(|e| Error::Serde(e.to_string()))?;
        text.push('\n');
        write_atomic(&self.timings_path, text.as_bytes())?;
        Ok((model, rte, rel))
    }
}

pub(super) struct Cell<'a> {
    pub(super) cfg: &'a ExperimentConfig,
    pub(super) train: &'a Dataset,
    pub(super) test: &'a Dataset,
    pub(super) policy: Scenario,
    pub(super) seed: u64,
}

impl Cell<'_> {
    pub(super) fn evaluate(
        &self,
        model: &Model,
        partition: &ForgetPartition,
        method: Method,
        rte: f64,
    ) -> Result<MetricsRecord> {
        let (train, test);
        let (train_ref, test_ref) = if self.cfg.augmented_eval {
            let policy = self.cfg.policy(self.policy);
            train = augment_dataset(self.train, &policy, self.seed)?;
            test = augment_dataset(self.test, &policy, self.seed)?;
            (&train, &test)
        } else {
            (self.train, self.test)
        };
        let acc = core_accuracies(model, partition, train_ref, test_ref)?;
        // the attacker always sees clean images
        let attacker = fit_mia_attacker(model, partition, self.train, self.test, self.seed)?;
        let mia = mia_score(model, partition, self.train, &attacker)?;
        let ta_retained_classes = match partition.forgotten_class() {
            Some(c) => Some(accuracy_excluding_class(model, test_ref, c)?),
            None => None,
        };
        Ok(MetricsRecord {
            method,
            policy: self.policy.name().to_string(),
            seed: self.seed,
            ua: acc.ua,
            ra: acc.ra,
            ta: acc.ta,
            mia,
            rte,
            ta_retained_classes,
        })
    }
}

/// Runs the whole grid, writing checkpoints, the manifest and the reports
/// under the config's output directory. Individual run failures are
/// recorded in the manifest; only config and I/O problems return `Err`.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunManifest> {
    cfg.validate()?;
    let out = cfg.output_dir.clone();
    std::fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
    let hash = cfg.hash();
    let mut store = Store::open(&out, &hash)?;
    let manifest_path = out.join(MANIFEST_FILE);
    let mut manifest = RunManifest {
        format: MANIFEST_FORMAT.into(),
        version: MANIFEST_VERSION,
        config_hash: hash,
        config: cfg.clone(),
        runs: Vec::new(),
        reports: Vec::new(),
    };
    let dataset_name = cfg.dataset.name().to_string();
    let (train_data, test_data) = load_datasets(&cfg.dataset)?;
    let arch = cfg.arch_spec();
    let modes = cfg.forget.modes();

    for &policy in &cfg.policies {
        for &seed in &cfg.seeds {
            let cell = Cell {
                cfg,
                train: &train_data,
                test: &test_data,
                policy,
                seed,
            };
            let aug = cfg.policy(policy);
            let base_cfg = cfg.baseline.train_config(aug.clone(), seed);
            let unlearn_cfg = cfg.unlearn.train_config(aug, seed);
            let baseline = store.get_or_run(&format!("baseline_{policy}_s{seed}"), || {
                Ok(train(arch, &train_data, &base_cfg)?.model)
            });
            for &mode in &modes {
                let fkey = forget_key(mode);
                let mut push = |method: Method, result: Result<(MetricsRecord, PathBuf)>| {
                    let id = format!("{method}_{fkey}_{policy}_s{seed}");
                    let (status, error, checkpoint, metrics) = match result {
                        Ok((m, ck)) => (RunStatus::Ok, None, Some(ck), Some(m)),
                        Err(e) => {
                            warn!("{id} failed: {e}");
                            (RunStatus::Failed, Some(e.to_string()), None, None)
                        }
                    };
                    manifest.runs.push(RunEntry {
                        id,
                        dataset: dataset_name.clone(),
                        method,
                        policy,
                        forget: mode,
                        seed,
                        status,
                        error,
                        checkpoint,
                        metrics,
                    });
                };
                let (theta_o, partition) = match (&baseline, split_forget(&train_data, mode, seed))
                {
                    (Ok((m, _, _)), Ok(p)) => (m, p),
                    (Err(e), _) => {
                        for method in
                            std::iter::once(Method::Retrain).chain(cfg.methods.iter().copied())
                        {
                            push(method, Err(Error::Input(format!("baseline failed: {e}"))));
                        }
                        continue;
                    }
                    (_, Err(e)) => {
                        for method in
                            std::iter::once(Method::Retrain).chain(cfg.methods.iter().copied())
                        {
                            push(method, Err(Error::Input(format!("partition failed: {e}"))));
                        }
                        continue;
                    }
                };
                let stage = format!("retrain_{fkey}_{policy}_s{seed}");
                let r = store
                    .get_or_run(&stage, || {
                        Ok(retrain(arch, &partition, &train_data, &base_cfg)?.model)
                    })
                    .and_then(|(m, rte, ck)| {
                        Ok((cell.evaluate(&m, &partition, Method::Retrain, rte)?, ck))
                    });
                push(Method::Retrain, r);
                for &method in &cfg.methods {
                    let stage = format!("{method}_{fkey}_{policy}_s{seed}");
                    let r = store
                        .get_or_run(&stage, || {
                            let trained = match method {
                                Method::FineTune => {
                                    fine_tune(theta_o, &partition, &train_data, &unlearn_cfg)?
                                }
                                Method::RandomLabel => random_label_with(
                                    theta_o,
                                    &partition,
                                    &train_data,
                                    &unlearn_cfg,
                                    cfg.random_label,
                                )?,
                                Method::SalUn => {
                                    let mask = compute_saliency_mask(
                                        theta_o,
                                        &partition,
                                        &train_data,
                                        &cfg.salun,
                                    )?;
                                    salun_with(
                                        theta_o,
                                        &partition,
                                        &train_data,
                                        &mask,
                                        &unlearn_cfg,
                                        cfg.random_label,
                                    )?
                                }
                                Method::Retrain => unreachable!("rejected by validation"),
                            };
                            Ok(trained.model)
                        })
                        .and_then(|(m, rte, ck)| {
                            Ok((cell.evaluate(&m, &partition, method, rte)?, ck))
                        });
                    push(method, r);
                }
            }
            manifest.save(&manifest_path)?;
        }
    }
    manifest.reports = write_reports(&manifest, &out, &[ReportFormat::Csv, ReportFormat::Json])?;
    manifest.save(&manifest_path)?;
    Ok(manifest)
}
