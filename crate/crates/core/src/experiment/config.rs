use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::augment::{AugmentParams, AugmentPolicy, Scenario};
use crate::data::{ForgetMode, SyntheticSpec};
use crate::error::{Error, Result};
use crate::eval::GapMode;
use crate::models::{ArchName, ArchSpec};
use crate::unlearn::{Method, RandomLabelOptions, SaliencyConfig, TrainConfig};

pub const SCHEMA_VERSION: u32 = 1;

/// Environment variable that replaces the configured seed list.
/// Accepts one seed or a comma-separated list.
pub const SEED_ENV: &str = "UNLEARN_SEED";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum DatasetSpec {
    Synthetic {
        classes: usize,
        train_per_class: usize,
        test_per_class: usize,
        image_shape: [usize; 3],
        noise: f64,
        #[serde(default)]
        max_shift: usize,
        #[serde(default = "default_bumps")]
        bumps: usize,
        /// Seed of the class patterns and sample noise; fixed across run seeds.
        #[serde(default)]
        data_seed: u64,
    },
    Cifar10 {
        path: PathBuf,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        train_subsample: Option<usize>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        test_subsample: Option<usize>,
    },
    Cifar100 {
        path: PathBuf,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        train_subsample: Option<usize>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        test_subsample: Option<usize>,
    },
}

fn default_bumps() -> usize {
    3
}

impl DatasetSpec {
    pub fn name(&self) -> &'static str {
        match self {
            DatasetSpec::Synthetic { .. } => "synthetic",
            DatasetSpec::Cifar10 { .. } => "cifar10",
            DatasetSpec::Cifar100 { .. } => "cifar100",
        }
    }

    pub fn classes(&self) -> usize {
        match self {
            DatasetSpec::Synthetic { classes, .. } => *classes,
            DatasetSpec::Cifar10 { .. } => 10,
            DatasetSpec::Cifar100 { .. } => 100,
        }
    }

    pub fn image_shape(&self) -> [usize; 3] {
        match self {
            DatasetSpec::Synthetic { image_shape, .. } => *image_shape,
            _ => [3, 32, 32],
        }
    }

    pub(crate) fn synthetic(&self, test: bool) -> Option<SyntheticSpec> {
        let DatasetSpec::Synthetic {
            classes,
            train_per_class,
            test_per_class,
            image_shape,
            noise,
            max_shift,
            bumps,
            data_seed,
        } = self
        else {
            return None;
        };
        let per_class = if test {
            *test_per_class
        } else {
            *train_per_class
        };
        let mut spec = SyntheticSpec::new(*classes, per_class, *image_shape, *data_seed);
        spec.noise = *noise as f32;
        spec.max_shift = *max_shift;
        spec.bumps = *bumps;
        Some(spec)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArchConfig {
    pub name: ArchName,
    #[serde(default = "one")]
    pub width: usize,
}

fn one() -> usize {
    1
}

/// Optimiser settings of one training stage. The policy and seed come from
/// the grid cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StageConfig {
    pub epochs: usize,
    pub lr: f64,
    #[serde(default)]
    pub momentum: f64,
    #[serde(default)]
    pub weight_decay: f64,
    pub batch_size: usize,
}

impl StageConfig {
    pub fn train_config(&self, policy: AugmentPolicy, seed: u64) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            lr: self.lr as f32,
            momentum: self.momentum as f32,
            weight_decay: self.weight_decay as f32,
            batch_size: self.batch_size,
            policy,
            seed,
            log_access: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ForgetSpec {
    pub mode: ForgetKind,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub rates: Vec<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub classes: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ForgetKind {
    Random,
    Classwise,
}

impl ForgetSpec {
    pub fn modes(&self) -> Vec<ForgetMode> {
        match self.mode {
            ForgetKind::Random => self
                .rates
                .iter()
                .map(|&rate| ForgetMode::Random { rate })
                .collect(),
            ForgetKind::Classwise => self
                .classes
                .iter()
                .map(|&class| ForgetMode::Classwise { class })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema: u32,
    pub name: String,
    /// Where manifests, checkpoints and reports go. Relative paths resolve
    /// against the config file's directory.
    pub output_dir: PathBuf,
    pub dataset: DatasetSpec,
    pub arch: ArchConfig,
    pub baseline: StageConfig,
    pub unlearn: StageConfig,
    pub methods: Vec<Method>,
    pub policies: Vec<Scenario>,
    pub forget: ForgetSpec,
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub gap_mode: GapMode,
    #[serde(default)]
    pub salun: SaliencyConfig,
    #[serde(default)]
    pub random_label: RandomLabelOptions,
    /// Transform parameters shared by every policy.
    #[serde(default)]
    pub augment: AugmentParams,
    /// Compute UA/RA/TA on augmented rather than clean images.
    #[serde(default)]
    pub augmented_eval: bool,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str, origin: &str) -> Result<Self> {
        let value: toml::Value =
            toml::from_str(text).map_err(|e| Error::config(origin, e.message().trim()))?;
        let cfg: ExperimentConfig = serde_path_to_error::deserialize(value).map_err(|e| {
            let path = e.path().to_string();
            Error::config(
                if path == "." {
                    origin.to_string()
                } else {
                    path
                },
                e.into_inner().message().trim(),
            )
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a config file and resolves relative paths against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_toml(&text, &path.display().to_string())?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.resolve_paths(base);
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Serde(e.to_string()))
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.output_dir);
        if let DatasetSpec::Cifar10 { path, .. } | DatasetSpec::Cifar100 { path, .. } =
            &mut self.dataset
        {
            fix(path);
        }
    }

    /// Replaces the seed list from `UNLEARN_SEED` when set.
    pub fn apply_seed_override(&mut self) -> Result<()> {
        if let Ok(raw) = std::env::var(SEED_ENV) {
            self.seeds = parse_seed_list(&raw)?;
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let err = |path: &str, msg: String| Err(Error::config(path, msg));
        if self.schema != SCHEMA_VERSION {
            return err(
                "schema",
                format!(
                    "unsupported schema {}, expected {SCHEMA_VERSION}",
                    self.schema
                ),
            );
        }
        if self.methods.is_empty() {
            return err("methods", "at least one method is required".into());
        }
        if self.methods.contains(&Method::Retrain) {
            return err(
                "methods",
                "retrain always runs as the reference; list only unlearning methods".into(),
            );
        }
        if self.policies.is_empty() {
            return err("policies", "at least one policy is required".into());
        }
        if self.seeds.is_empty() {
            return err("seeds", "at least one seed is required".into());
        }
        for (name, list) in [
            ("methods", dup(&self.methods)),
            ("policies", dup(&self.policies)),
            ("seeds", dup(&self.seeds)),
        ] {
            if list {
                return err(name, "duplicate entries".into());
            }
        }
        for (path, st) in [("baseline", &self.baseline), ("unlearn", &self.unlearn)] {
            if st.batch_size == 0 {
                return err(&format!("{path}.batch_size"), "must be >= 1".into());
            }
            if !(st.lr > 0.0 && st.lr.is_finite()) {
                return err(&format!("{path}.lr"), format!("must be > 0, got {}", st.lr));
            }
            if !(0.0..1.0).contains(&st.momentum) {
                return err(
                    &format!("{path}.momentum"),
                    format!("must lie in [0, 1), got {}", st.momentum),
                );
            }
            if !(st.weight_decay >= 0.0) {
                return err(
                    &format!("{path}.weight_decay"),
                    format!("must be >= 0, got {}", st.weight_decay),
                );
            }
        }
        let modes = self.forget.modes();
        if modes.is_empty() {
            return err("forget", "no forget rates or classes listed".into());
        }
        for m in &modes {
            match *m {
                ForgetMode::Random { rate } if !(rate > 0.0 && rate < 1.0) => {
                    return err("forget.rates", format!("rate {rate} outside (0, 1)"));
                }
                ForgetMode::Classwise { class } if class >= self.dataset.classes() => {
                    return err(
                        "forget.classes",
                        format!("class {class} not below {}", self.dataset.classes()),
                    );
                }
                _ => {}
            }
        }
        if !(self.salun.fraction > 0.0 && self.salun.fraction <= 1.0) {
            return err(
                "salun.fraction",
                format!("must lie in (0, 1], got {}", self.salun.fraction),
            );
        }
        if let DatasetSpec::Synthetic {
            train_per_class,
            test_per_class,
            ..
        } = self.dataset
        {
            if train_per_class == 0 || test_per_class == 0 {
                return err("dataset", "per-class counts must be >= 1".into());
            }
        }
        self.arch_spec()
            .validate()
            .map_err(|e| Error::config("arch", e.to_string()))?;
        self.augment
            .validate()
            .map_err(|e| Error::config("augment", e.to_string()))?;
        Ok(())
    }

    pub fn arch_spec(&self) -> ArchSpec {
        ArchSpec {
            name: self.arch.name,
            input: self.dataset.image_shape(),
            classes: self.dataset.classes(),
            width: self.arch.width,
        }
    }

    pub fn policy(&self, scenario: Scenario) -> AugmentPolicy {
        AugmentPolicy {
            scenario,
            params: self.augment.clone(),
        }
    }

    /// SHA-256 of the canonical (sorted-key) JSON form, ignoring the output directory.
    pub fn hash(&self) -> String {
        let mut value = serde_json::to_value(self).expect("config serialises");
        if let Some(obj) = value.as_object_mut() {
            obj.remove("output_dir");
        }
        // serde_json's default map is ordered by key, so this is canonical
        let canonical = serde_json::to_string(&value).expect("value serialises");
        hex::encode(Sha256::digest(canonical.as_bytes()))
    }
}

fn dup<T: PartialEq>(xs: &[T]) -> bool {
    xs.iter().enumerate().any(|(i, x)| xs[..i].contains(x))
}

pub fn parse_seed_list(raw: &str) -> Result<Vec<u64>> {
    let seeds = raw
        .split(',')
        .map(|s| s.trim().parse::<u64>())
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(|e| Error::config(SEED_ENV, format!("`{raw}` is not a seed list: {e}")))?;
    if seeds.is_empty() {
        return Err(Error::config(SEED_ENV, "empty seed list"));
    }
    Ok(seeds)
}

/// Named starting configurations.
pub fn preset(name: &str) -> Result<ExperimentConfig> {
    match name {
        "desk" => Ok(desk()),
        "paper-cifar10" => Ok(paper(DatasetSpec::Cifar10 {
            path: "data/cifar-10-batches-bin".into(),
            train_subsample: None,
            test_subsample: None,
        })),
        "paper-cifar100" => Ok(paper(DatasetSpec::Cifar100 {
            path: "data/cifar-100-binary".into(),
            train_subsample: None,
            test_subsample: None,
        })),
        other => Err(Error::Input(format!(
            "unknown preset `{other}` (expected desk, paper-cifar10 or paper-cifar100)"
        ))),
    }
}

pub const PRESETS: [&str; 3] = ["desk", "paper-cifar10", "paper-cifar100"];

fn desk() -> ExperimentConfig {
    ExperimentConfig {
        schema: SCHEMA_VERSION,
        name: "desk".into(),
        output_dir: "runs/desk".into(),
        dataset: DatasetSpec::Synthetic {
            classes: 10,
            train_per_class: 200,
            test_per_class: 100,
            image_shape: [3, 16, 16],
            noise: 0.2,
            max_shift: 3,
            bumps: 3,
            data_seed: 2024,
        },
        arch: ArchConfig {
            name: ArchName::TinyResnet,
            width: 1,
        },
        baseline: StageConfig {
            epochs: 20,
            lr: 0.01,
            momentum: 0.9,
            weight_decay: 5e-4,
            batch_size: 32,
        },
        unlearn: StageConfig {
            epochs: 5,
            lr: 0.01,
            momentum: 0.9,
            weight_decay: 5e-4,
            batch_size: 32,
        },
        methods: Method::UNLEARNING.to_vec(),
        policies: vec![Scenario::NoAug, Scenario::DefaultTrivialAug],
        forget: ForgetSpec {
            mode: ForgetKind::Random,
            rates: vec![0.5],
            classes: vec![],
        },
        seeds: vec![0, 1, 2],
        gap_mode: GapMode::PerSeed,
        salun: SaliencyConfig::default(),
        random_label: RandomLabelOptions::default(),
        augment: AugmentParams {
            crop_pad: 2,
            ..AugmentParams::default()
        },
        augmented_eval: false,
    }
}

fn paper(dataset: DatasetSpec) -> ExperimentConfig {
    let name = format!("paper-{}", dataset.name());
    ExperimentConfig {
        schema: SCHEMA_VERSION,
        output_dir: format!("runs/{name}").into(),
        name,
        dataset,
        arch: ArchConfig {
            name: ArchName::TinyResnet,
            width: 4,
        },
        baseline: StageConfig {
            epochs: 200,
            lr: 0.1,
            momentum: 0.9,
            weight_decay: 5e-4,
            batch_size: 256,
        },
        unlearn: StageConfig {
            epochs: 10,
            lr: 0.01,
            momentum: 0.9,
            weight_decay: 5e-4,
            batch_size: 256,
        },
        methods: Method::UNLEARNING.to_vec(),
        policies: Scenario::ALL.to_vec(),
        forget: ForgetSpec {
            mode: ForgetKind::Random,
            rates: vec![0.1, 0.5],
            classes: vec![],
        },
        seeds: vec![0, 1, 2, 3, 4],
        gap_mode: GapMode::PerSeed,
        salun: SaliencyConfig::default(),
        random_label: RandomLabelOptions::default(),
        augment: AugmentParams::default(),
        augmented_eval: false,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_round_trip() {
        for name in PRESETS {
            let cfg = preset(name).unwrap();
            cfg.validate().unwrap();
            let text = cfg.to_toml().unwrap();
            assert_eq!(ExperimentConfig::from_toml(&text, name).unwrap(), cfg);
        }
        assert!(preset("imagenet").is_err());
    }

    #[test]
    fn paper_cifar10_hyperparameters() {
        let cfg = preset("paper-cifar10").unwrap();
        assert_eq!(
            (
                cfg.baseline.epochs,
                cfg.baseline.lr,
                cfg.baseline.batch_size
            ),
            (200, 0.1, 256)
        );
        assert_eq!((cfg.unlearn.epochs, cfg.unlearn.lr), (10, 0.01));
        assert_eq!(cfg.forget.rates, vec![0.1, 0.5]);
    }

    #[test]
    fn hash_ignores_key_order_and_output_dir() {
        let cfg = preset("desk").unwrap();
        // compact form keeps every value on one line, so reversing the
        // top-level keys and the table order is a pure key permutation
        let text = toml::to_string(&cfg).unwrap();
        let mut blocks: Vec<Vec<&str>> = vec![vec![]];
        for line in text.lines().filter(|l| !l.trim().is_empty()) {
            if line.starts_with('[') {
                blocks.push(vec![]);
            }
            blocks.last_mut().unwrap().push(line);
        }
        let mut top = blocks.remove(0);
        top.reverse();
        blocks.reverse();
        let mut permuted_text = top.join("\n");
        for b in blocks {
            permuted_text.push('\n');
            permuted_text.push_str(&b.join("\n"));
        }
        assert_ne!(permuted_text, text.trim_end());
        let permuted = ExperimentConfig::from_toml(&permuted_text, "permuted").unwrap();
        assert_eq!(permuted.hash(), cfg.hash());
        let mut moved = cfg.clone();
        moved.output_dir = "elsewhere".into();
        assert_eq!(moved.hash(), cfg.hash());
        let mut changed = cfg.clone();
        changed.seeds.push(9);
        assert_ne!(changed.hash(), cfg.hash());
    }

    #[test]
    fn schema_errors_carry_field_path() {
        let text = preset("desk")
            .unwrap()
            .to_toml()
            .unwrap()
            .replace("lr = 0.01", "lr = \"fast\"");
        match ExperimentConfig::from_toml(&text, "x") {
            Err(Error::Config { path, .. }) => assert_eq!(path, "baseline.lr"),
            other => panic!("{other:?}"),
        }
        let text = preset("desk")
            .unwrap()
            .to_toml()
            .unwrap()
            .replace("seeds = [", "seeds = [0, ");
        match ExperimentConfig::from_toml(&text, "x") {
            Err(Error::Config { path, .. }) => assert_eq!(path, "seeds"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn seed_list_parsing() {
        assert_eq!(parse_seed_list("3").unwrap(), vec![3]);
        assert_eq!(parse_seed_list("1, 2,3").unwrap(), vec![1, 2, 3]);
        assert!(parse_seed_list("x").is_err());
    }
}
