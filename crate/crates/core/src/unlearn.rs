//! The SGD training loop and the unlearning procedures built on it:
//! retraining from scratch, fine-tuning on the remain set, random labelling
//! and saliency-masked random labelling (SalUn).

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::augment::{AugmentPolicy, Image, Scenario};
use crate::data::{Dataset, ForgetPartition};
use crate::engine::{Graph, Sgd, SgdConfig, Tensor, Var};
use crate::error::{Error, Result};
use crate::models::{build_model, forward, ArchSpec, Model};
use crate::rng;

/// Procedures that produce a model compared against the retrain oracle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Method {
    Retrain,
    FineTune,
    RandomLabel,
    SalUn,
}

impl Method {
    /// The unlearning methods, in report order.
    pub const UNLEARNING: [Method; 3] = [Method::FineTune, Method::RandomLabel, Method::SalUn];

    pub fn name(self) -> &'static str {
        match self {
            Method::Retrain => "retrain",
            Method::FineTune => "ft",
            Method::RandomLabel => "rl",
            Method::SalUn => "salun",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "retrain" => Ok(Method::Retrain),
            "ft" | "fine-tune" | "fine-tuning" => Ok(Method::FineTune),
            "rl" | "random-label" => Ok(Method::RandomLabel),
            "salun" => Ok(Method::SalUn),
            _ => Err(Error::Input(format!("unknown method `{s}`"))),
        }
    }
}

impl Serialize for Method {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.name())
    }
}

impl<'de> Deserialize<'de> for Method {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        String::deserialize(d)?
            .parse()
            .map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr: f32,
    #[serde(default)]
    pub momentum: f32,
    #[serde(default)]
    pub weight_decay: f32,
    pub batch_size: usize,
    #[serde(default = "no_aug")]
    pub policy: AugmentPolicy,
    #[serde(default)]
    pub seed: u64,
    /// Record every `(epoch, sample index)` visited. Debug aid.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub log_access: bool,
}

fn no_aug() -> AugmentPolicy {
    AugmentPolicy::new(Scenario::NoAug)
}

impl TrainConfig {
    pub fn new(epochs: usize, lr: f32, batch_size: usize, seed: u64) -> Self {
        Self {
            epochs,
            lr,
            momentum: 0.0,
            weight_decay: 0.0,
            batch_size,
            policy: no_aug(),
            seed,
            log_access: false,
        }
    }

    pub fn with_policy(mut self, policy: AugmentPolicy) -> Self {
        self.policy = policy;
        self
    }

    pub fn with_momentum(mut self, momentum: f32, weight_decay: f32) -> Self {
        self.momentum = momentum;
        self.weight_decay = weight_decay;
        self
    }

    /// `lr = 0` is accepted so a null update can be expressed; the config
    /// layer rejects it for real runs.
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Input("batch size must be >= 1".into()));
        }
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return Err(Error::Input(format!(
                "learning rate must be >= 0, got {}",
                self.lr
            )));
        }
        self.policy.validate()?;
        Sgd::new(self.sgd()).map(|_| ())
    }

    pub fn sgd(&self) -> SgdConfig {
        SgdConfig {
            lr: self.lr,
            momentum: self.momentum,
            weight_decay: self.weight_decay,
        }
    }
}

/// What a training call produced besides the weights.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainHistory {
    /// Mean mini-batch loss per epoch.
    pub epoch_loss: Vec<f64>,
    /// `(epoch, sample index)` pairs, filled when `log_access` is set.
    pub access: Vec<(usize, usize)>,
}

#[derive(Debug, Clone)]
pub struct Trained {
    pub model: Model,
    pub history: TrainHistory,
}

/// Cross-entropy loss and per-parameter gradients for one batch.
pub fn batch_gradients(
    model: &Model,
    batch: &Tensor<f32>,
    labels: &[usize],
) -> Result<(f64, Vec<Vec<f32>>)> {
    let mut g = Graph::<f32>::new();
    let params: Vec<Var> = model.params().iter().map(|p| g.param(p.clone())).collect();
    let x = g.input(batch.clone());
    let logits = forward(model.arch(), &mut g, &params, x)?;
    let loss = g.cross_entropy(logits, labels)?;
    let value = f64::from(g.value(loss).item());
    if !value.is_finite() {
        return Ok((value, Vec::new()));
    }
    g.backward(loss)?;
    let grads = params
        .iter()
        .map(|&p| {
            g.grad(p)
                .map(<[f32]>::to_vec)
                .ok_or_else(|| Error::Usage("missing gradient".into()))
        })
        .collect::<Result<_>>()?;
    Ok((value, grads))
}

/// Post-step projection used by SalUn: unselected weights snap back to the
/// reference values and lose their momentum.
struct Freeze<'a> {
    mask: &'a SaliencyMask,
    reference: &'a [Tensor<f32>],
}

impl Freeze<'_> {
    fn apply(&self, params: &mut [Tensor<f32>], sgd: &mut Sgd) {
        let velocity = sgd.velocity_mut();
        for (i, (p, r)) in params.iter_mut().zip(self.reference).enumerate() {
            let m = &self.mask.masks[i];
            for (j, w) in p.data_mut().iter_mut().enumerate() {
                if m[j] == 0 {
                    *w = r.data()[j];
                    if let Some(v) = velocity.get_mut(i) {
                        v[j] = 0.0;
                    }
                }
            }
        }
    }
}

/// Where per-sample training labels come from.
enum Labels<'a> {
    True,
    Fixed(&'a [usize]),
    /// Forget samples get a fresh random label each epoch.
    Redraw {
        forget: &'a [usize],
        seed: u64,
    },
}

/// Mini-batch SGD over `indices` of `data`. Sample identities (for
/// augmentation and the access log) are indices into `data`.
fn run_sgd(
    model: &mut Model,
    data: &Dataset,
    indices: &[usize],
    labels: Labels<'_>,
    cfg: &TrainConfig,
    freeze: Option<&Freeze<'_>>,
) -> Result<TrainHistory> {
    cfg.validate()?;
    if indices.is_empty() {
        return Err(Error::Input("training set is empty".into()));
    }
    if data.image_shape() != model.arch().input {
        return Err(Error::Dimension(format!(
            "dataset images {:?} do not match model input {:?}",
            data.image_shape(),
            model.arch().input
        )));
    }
    let mut sgd = Sgd::new(cfg.sgd())?;
    let mut history = TrainHistory::default();
    let shape = data.image_shape();
    let per = data.image_len();
    let mut order: Vec<usize> = indices.to_vec();
    let mut epoch_labels: Vec<usize> = match labels {
        Labels::Fixed(l) => {
            if l.len() != data.len() {
                return Err(Error::Dimension(format!(
                    "{} labels for {} samples",
                    l.len(),
                    data.len()
                )));
            }
            l.to_vec()
        }
        _ => data.labels().to_vec(),
    };
    for epoch in 0..cfg.epochs {
        if let Labels::Redraw { forget, seed } = labels {
            epoch_labels = data.labels().to_vec();
            let drawn = draw_random_labels(data, forget, seed, Some(epoch as u64))?;
            for (&i, y) in forget.iter().zip(drawn) {
                epoch_labels[i] = y;
            }
        }
        order.copy_from_slice(indices);
        order.shuffle(&mut rng::stream(cfg.seed, rng::SHUFFLE, &[epoch as u64]));
        let mut loss_sum = 0.0;
        let mut batches = 0usize;
        for (b, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let mut pixels = Vec::with_capacity(chunk.len() * per);
            for &i in chunk {
                if cfg.policy.scenario == Scenario::NoAug {
                    pixels.extend_from_slice(data.image(i));
                } else {
                    let img = Image::from_slice(shape, data.image(i))?;
                    pixels.extend(
                        cfg.policy
                            .apply(&img, i as u64, epoch as u64, cfg.seed)
                            .data,
                    );
                }
                if cfg.log_access {
                    history.access.push((epoch, i));
                }
            }
            let batch = Tensor::new(vec![chunk.len(), shape[0], shape[1], shape[2]], pixels)?;
            let ys: Vec<usize> = chunk.iter().map(|&i| epoch_labels[i]).collect();
            let (loss, grads) = batch_gradients(model, &batch, &ys)?;
            if !loss.is_finite() {
                return Err(Error::Divergence {
                    epoch,
                    batch: b,
                    loss,
                });
            }
            for (p, g) in model.params_mut().iter_mut().zip(grads) {
                p.set_grad(g)?;
            }
            sgd.step(model.params_mut())?;
            if let Some(f) = freeze {
                f.apply(model.params_mut(), &mut sgd);
            }
            loss_sum += loss;
            batches += 1;
        }
        history.epoch_loss.push(loss_sum / batches as f64);
    }
    Ok(history)
}

/// Trains a freshly initialised model (init seed = `cfg.seed`) on all of `data`.
pub fn train(arch: ArchSpec, data: &Dataset, cfg: &TrainConfig) -> Result<Trained> {
    let all: Vec<usize> = (0..data.len()).collect();
    train_on(arch, data, &all, cfg)
}

/// Trains a freshly initialised model on the listed samples only.
pub fn train_on(
    arch: ArchSpec,
    data: &Dataset,
    indices: &[usize],
    cfg: &TrainConfig,
) -> Result<Trained> {
    let mut model = build_model(arch, cfg.seed)?;
    let history = run_sgd(&mut model, data, indices, Labels::True, cfg, None)?;
    Ok(Trained { model, history })
}

/// The retrain oracle: training from the baseline's initialisation on the
/// remain set. Forget-set pixels are never read.
pub fn retrain(
    arch: ArchSpec,
    partition: &ForgetPartition,
    data: &Dataset,
    cfg: &TrainConfig,
) -> Result<Trained> {
    check_partition(partition, data)?;
    if partition.remain().is_empty() {
        return Err(Error::Input("remain set is empty".into()));
    }
    train_on(arch, data, partition.remain(), cfg)
}

/// Continues SGD from `original` on the remain set only.
pub fn fine_tune(
    original: &Model,
    partition: &ForgetPartition,
    data: &Dataset,
    cfg: &TrainConfig,
) -> Result<Trained> {
    check_partition(partition, data)?;
    if partition.remain().is_empty() {
        return Err(Error::Input("remain set is empty".into()));
    }
    let mut model = original.clone();
    let history = if cfg.epochs == 0 {
        TrainHistory::default()
    } else {
        run_sgd(
            &mut model,
            data,
            partition.remain(),
            Labels::True,
            cfg,
            None,
        )?
    };
    Ok(Trained { model, history })
}

/// Training data used by random labelling.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RelabelMixture {
    /// Relabelled forget set plus the remain set.
    #[default]
    ForgetAndRemain,
    /// Relabelled forget set alone.
    ForgetOnly,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RandomLabelOptions {
    #[serde(default)]
    pub mixture: RelabelMixture,
    /// Draw new labels every epoch instead of once per run.
    #[serde(default)]
    pub redraw_each_epoch: bool,
}

/// One label per listed sample, uniform over the other `K - 1` classes.
/// `epoch` is `None` for the once-per-run draw.
pub fn draw_random_labels(
    data: &Dataset,
    samples: &[usize],
    seed: u64,
    epoch: Option<u64>,
) -> Result<Vec<usize>> {
    let k = data.classes();
    if k < 2 {
        return Err(Error::Input(format!("cannot relabel with {k} class")));
    }
    let parts: Vec<u64> = epoch.map(|e| vec![e]).unwrap_or_default();
    let mut r = rng::stream(seed, rng::RELABEL, &parts);
    Ok(samples
        .iter()
        .map(|&i| {
            let y = data.label(i);
            let draw = r.gen_range(0..k - 1);
            if draw >= y {
                draw + 1
            } else {
                draw
            }
        })
        .collect())
}

pub fn random_label(
    original: &Model,
    partition: &ForgetPartition,
    data: &Dataset,
    cfg: &TrainConfig,
) -> Result<Trained> {
    random_label_with(
        original,
        partition,
        data,
        cfg,
        RandomLabelOptions::default(),
    )
}

pub fn random_label_with(
    original: &Model,
    partition: &ForgetPartition,
    data: &Dataset,
    cfg: &TrainConfig,
    opts: RandomLabelOptions,
) -> Result<Trained> {
    relabel_and_train(original, partition, data, cfg, opts, None)
}

fn relabel_and_train(
    original: &Model,
    partition: &ForgetPartition,
    data: &Dataset,
    cfg: &TrainConfig,
    opts: RandomLabelOptions,
    mask: Option<&SaliencyMask>,
) -> Result<Trained> {
    check_partition(partition, data)?;
    let forget = partition.forget();
    if forget.is_empty() {
        return Err(Error::Input("forget set is empty".into()));
    }
    let fixed;
    let labels = if opts.redraw_each_epoch {
        // validates K up front even when epochs = 0
        draw_random_labels(data, &forget[..1], partition.seed(), Some(0))?;
        Labels::Redraw {
            forget,
            seed: partition.seed(),
        }
    } else {
        let mut l = data.labels().to_vec();
        for (&i, y) in forget
            .iter()
            .zip(draw_random_labels(data, forget, partition.seed(), None)?)
        {
            l[i] = y;
        }
        fixed = l;
        Labels::Fixed(&fixed)
    };
    let indices: Vec<usize> = match opts.mixture {
        RelabelMixture::ForgetAndRemain => (0..data.len()).collect(),
        RelabelMixture::ForgetOnly => forget.to_vec(),
    };
    let mut model = original.clone();
    let freeze = mask.map(|m| Freeze {
        mask: m,
        reference: original.params(),
    });
    let history = if cfg.epochs == 0 {
        TrainHistory::default()
    } else {
        run_sgd(&mut model, data, &indices, labels, cfg, freeze.as_ref())?
    };
    Ok(Trained { model, history })
}

/// Binary per-parameter masks, laid out like a model's parameter list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SaliencyMask {
    pub shapes: Vec<Vec<usize>>,
    pub masks: Vec<Vec<u8>>,
    pub fraction: f64,
}

impl SaliencyMask {
    fn filled(shapes: Vec<Vec<usize>>, value: u8, fraction: f64) -> Self {
        let masks = shapes
            .iter()
            .map(|s| vec![value; s.iter().product()])
            .collect();
        Self {
            shapes,
            masks,
            fraction,
        }
    }

    pub fn all_ones(shapes: Vec<Vec<usize>>) -> Self {
        Self::filled(shapes, 1, 1.0)
    }

    pub fn all_zeros(shapes: Vec<Vec<usize>>) -> Self {
        Self::filled(shapes, 0, 0.0)
    }

    /// Splits a flat selection back into per-parameter masks.
    pub fn from_flat(shapes: Vec<Vec<usize>>, flat: &[bool], fraction: f64) -> Result<Self> {
        let total: usize = shapes.iter().map(|s| s.iter().product::<usize>()).sum();
        if flat.len() != total {
            return Err(Error::Dimension(format!(
                "{} mask entries for {total} parameters",
                flat.len()
            )));
        }
        let mut rest = flat;
        let masks = shapes
            .iter()
            .map(|s| {
                let (head, tail) = rest.split_at(s.iter().product());
                rest = tail;
                head.iter().map(|&b| u8::from(b)).collect()
            })
            .collect();
        Ok(Self {
            shapes,
            masks,
            fraction,
        })
    }

    pub fn flat(&self) -> Vec<bool> {
        self.masks.iter().flatten().map(|&m| m == 1).collect()
    }

    pub fn selected(&self) -> usize {
        self.masks.iter().flatten().filter(|&&m| m == 1).count()
    }

    pub fn total(&self) -> usize {
        self.masks.iter().map(Vec::len).sum()
    }

    fn check_against(&self, model: &Model) -> Result<()> {
        let ok = self.shapes.len() == model.params().len()
            && self
                .shapes
                .iter()
                .zip(model.params())
                .all(|(s, p)| s.as_slice() == p.shape())
            && self
                .masks
                .iter()
                .zip(&self.shapes)
                .all(|(m, s)| m.len() == s.iter().product::<usize>());
        if ok {
            Ok(())
        } else {
            Err(Error::Dimension(
                "saliency mask does not match the model parameters".into(),
            ))
        }
    }
}

/// Number of entries selected for fraction `k` of `total`.
pub fn top_k_count(k: f64, total: usize) -> usize {
    // the small guard keeps k * total landing a hair above an integer from
    // rounding up to the next one
    let raw = (k * total as f64 - 1e-9).ceil();
    (raw.max(1.0) as usize).min(total)
}

/// Selects the `ceil(k * n)` largest scores. Equal scores go to the lower index.
pub fn select_top_k(scores: &[f64], k: f64) -> Result<Vec<bool>> {
    if !(k > 0.0 && k <= 1.0) {
        return Err(Error::Input(format!(
            "saliency fraction must lie in (0, 1], got {k}"
        )));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::Input("saliency scores contain NaN".into()));
    }
    let count = top_k_count(k, scores.len());
    let mut order: Vec<usize> = (0..scores.len()).collect();
    // stable sort keeps ascending index order within equal scores
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut picked = vec![false; scores.len()];
    for &i in &order[..count] {
        picked[i] = true;
    }
    Ok(picked)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SaliencyConfig {
    pub fraction: f64,
    #[serde(default = "default_saliency_batch")]
    pub batch_size: usize,
    /// Stop after this many batches of the forget set. `None` uses all.
    #[serde(default)]
    pub batch_cap: Option<usize>,
}

fn default_saliency_batch() -> usize {
    256
}

impl Default for SaliencyConfig {
    fn default() -> Self {
        Self {
            fraction: 0.5,
            batch_size: default_saliency_batch(),
            batch_cap: None,
        }
    }
}

/// Gradient of the mean forget-set cross-entropy (true labels, clean
/// images) over the visited batches, flattened in parameter order.
pub fn forget_gradient(
    model: &Model,
    partition: &ForgetPartition,
    data: &Dataset,
    cfg: &SaliencyConfig,
) -> Result<Vec<f64>> {
    check_partition(partition, data)?;
    let forget = partition.forget();
    if forget.is_empty() {
        return Err(Error::Input("forget set is empty".into()));
    }
    if cfg.batch_size == 0 || cfg.batch_cap == Some(0) {
        return Err(Error::Input(
            "saliency batch size and cap must be >= 1".into(),
        ));
    }
    let cap = cfg.batch_cap.unwrap_or(usize::MAX);
    let chunks: Vec<&[usize]> = forget.chunks(cfg.batch_size).take(cap).collect();
    let seen: usize = chunks.iter().map(|c| c.len()).sum();
    let mut acc = vec![0.0f64; model.param_count()];
    for chunk in chunks {
        let batch = data.batch(chunk)?;
        let ys: Vec<usize> = chunk.iter().map(|&i| data.label(i)).collect();
        let (loss, grads) = batch_gradients(model, &batch, &ys)?;
        if !loss.is_finite() {
            return Err(Error::Divergence {
                epoch: 0,
                batch: 0,
                loss,
            });
        }
        let weight = chunk.len() as f64 / seen as f64;
        for (a, g) in acc.iter_mut().zip(grads.iter().flatten()) {
            *a += weight * f64::from(*g);
        }
    }
    Ok(acc)
}

pub fn compute_saliency_mask(
    model: &Model,
    partition: &ForgetPartition,
    data: &Dataset,
    cfg: &SaliencyConfig,
) -> Result<SaliencyMask> {
    if !(cfg.fraction > 0.0 && cfg.fraction <= 1.0) {
        return Err(Error::Input(format!(
            "saliency fraction must lie in (0, 1], got {}",
            cfg.fraction
        )));
    }
    let grad = forget_gradient(model, partition, data, cfg)?;
    let scores: Vec<f64> = grad.iter().map(|g| g.abs()).collect();
    let flat = select_top_k(&scores, cfg.fraction)?;
    let shapes = model.params().iter().map(|p| p.shape().to_vec()).collect();
    SaliencyMask::from_flat(shapes, &flat, cfg.fraction)
}

/// Random labelling with updates confined to the masked parameters.
pub fn salun(
    original: &Model,
    partition: &ForgetPartition,
    data: &Dataset,
    mask: &SaliencyMask,
    cfg: &TrainConfig,
) -> Result<Trained> {
    salun_with(
        original,
        partition,
        data,
        mask,
        cfg,
        RandomLabelOptions::default(),
    )
}

pub fn salun_with(
    original: &Model,
    partition: &ForgetPartition,
    data: &Dataset,
    mask: &SaliencyMask,
    cfg: &TrainConfig,
    opts: RandomLabelOptions,
) -> Result<Trained> {
    mask.check_against(original)?;
    relabel_and_train(original, partition, data, cfg, opts, Some(mask))
}

/// Runs `f`, returning its result and the elapsed wall-clock minutes.
pub fn measure_rte<T>(f: impl FnOnce() -> T) -> (T, f64) {
    let start = Instant::now();
    let out = f();
    (out, start.elapsed().as_secs_f64() / 60.0)
}

fn check_partition(partition: &ForgetPartition, data: &Dataset) -> Result<()> {
    if partition.len() != data.len() {
        return Err(Error::Input(format!(
            "partition covers {} samples but the dataset has {}",
            partition.len(),
            data.len()
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{make_synthetic, split_forget, ForgetMode, Split, SyntheticSpec};

    fn blobs() -> Dataset {
        let mut spec = SyntheticSpec::new(2, 20, [1, 4, 4], 7);
        spec.noise = 0.05;
        make_synthetic(&spec, Split::Train).unwrap()
    }

    fn mlp() -> ArchSpec {
        ArchSpec::mlp([1, 4, 4], 2)
    }

    fn cfg(epochs: usize) -> TrainConfig {
        TrainConfig::new(epochs, 0.1, 8, 5)
    }

    #[test]
    fn zero_epochs_returns_initial_model() {
        let data = blobs();
        let t = train(mlp(), &data, &cfg(0)).unwrap();
        assert_eq!(t.model, build_model(mlp(), 5).unwrap());
    }

    #[test]
    fn training_is_deterministic_and_fits_blobs() {
        let data = blobs();
        let c = cfg(20).with_policy(AugmentPolicy::new(Scenario::Default));
        let a = train(mlp(), &data, &c).unwrap();
        let b = train(mlp(), &data, &c).unwrap();
        assert_eq!(a.model, b.model);
        let plain = train(mlp(), &data, &cfg(20)).unwrap();
        assert!(crate::models::accuracy(&plain.model, &data).unwrap() >= 95.0);
    }

    #[test]
    fn divergence_is_reported() {
        let data = blobs();
        let mut c = cfg(3);
        c.lr = 1e30;
        match train(mlp(), &data, &c) {
            Err(Error::Divergence { .. }) => {}
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn relabels_differ_and_complement_for_two_classes() {
        let data = blobs();
        let all: Vec<usize> = (0..data.len()).collect();
        let l = draw_random_labels(&data, &all, 3, None).unwrap();
        for (&i, &y) in all.iter().zip(&l) {
            assert_eq!(y, 1 - data.label(i));
        }
    }

    #[test]
    fn top_k_ties_prefer_lower_index() {
        let picked = select_top_k(&[1.0, 3.0, 3.0, 3.0, 0.0], 0.4).unwrap();
        assert_eq!(picked, vec![false, true, true, false, false]);
        assert_eq!(top_k_count(0.1, 30), 3);
        assert_eq!(top_k_count(1.0, 7), 7);
    }

    #[test]
    fn salun_with_zero_mask_is_frozen() {
        let data = blobs();
        let base = train(mlp(), &data, &cfg(2)).unwrap().model;
        let part = split_forget(&data, ForgetMode::Random { rate: 0.25 }, 1).unwrap();
        let shapes = base.params().iter().map(|p| p.shape().to_vec()).collect();
        let c = cfg(3).with_momentum(0.9, 5e-4);
        let out = salun(&base, &part, &data, &SaliencyMask::all_zeros(shapes), &c).unwrap();
        assert_eq!(out.model, base);
    }

    #[test]
    fn fine_tune_lr_zero_is_identity() {
        let data = blobs();
        let base = train(mlp(), &data, &cfg(1)).unwrap().model;
        let part = split_forget(&data, ForgetMode::Random { rate: 0.25 }, 1).unwrap();
        let mut c = cfg(2);
        c.lr = 0.0;
        assert_eq!(fine_tune(&base, &part, &data, &c).unwrap().model, base);
    }

    #[test]
    fn rte_is_nonnegative() {
        let (v, minutes) = measure_rte(|| 2 + 2);
        assert_eq!(v, 4);
        assert!(minutes >= 0.0);
    }
}
