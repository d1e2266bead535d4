//! Forgetting metrics (UA, RA, TA, MIA), gaps to the retrain oracle and
//! the Average Gap.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::seq::index;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, ForgetPartition};
use crate::error::{Error, Result};
use crate::models::Model;
use crate::rng;
use crate::unlearn::Method;

/// Metrics of one model for one (method, policy, seed) cell. Percents in `[0, 100]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub method: Method,
    pub policy: String,
    pub seed: u64,
    pub ua: f64,
    pub ra: f64,
    pub ta: f64,
    pub mia: f64,
    /// Wall-clock minutes of the producing call.
    pub rte: f64,
    /// Test accuracy with the forgotten class removed (class-wise forgetting only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ta_retained_classes: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GapMode {
    /// Mean over seed-paired runs of `|m_MU - m_retrain|`.
    #[default]
    PerSeed,
    /// `|mean(m_MU) - mean(m_retrain)|`.
    OfMeans,
}

impl GapMode {
    pub fn name(self) -> &'static str {
        match self {
            GapMode::PerSeed => "per-seed",
            GapMode::OfMeans => "of-means",
        }
    }
}

impl fmt::Display for GapMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for GapMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "per-seed" => Ok(GapMode::PerSeed),
            "of-means" => Ok(GapMode::OfMeans),
            _ => Err(Error::Input(format!("unknown gap mode `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GapRecord {
    pub ua: f64,
    pub ra: f64,
    pub ta: f64,
    pub mia: f64,
    pub ag: f64,
    pub mode: GapMode,
}

impl GapRecord {
    pub fn new(ua: f64, ra: f64, ta: f64, mia: f64, mode: GapMode) -> Self {
        Self {
            ua,
            ra,
            ta,
            mia,
            ag: average_of([ua, ra, ta, mia]),
            mode,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoreAccuracies {
    pub ua: f64,
    pub ra: f64,
    pub ta: f64,
}

/// Percentage of `indices` whose prediction equals the label.
pub fn accuracy_over(preds: &[usize], labels: &[usize], indices: &[usize]) -> Result<f64> {
    if indices.is_empty() {
        return Err(Error::Input("accuracy over an empty set".into()));
    }
    let hits = indices.iter().filter(|&&i| preds[i] == labels[i]).count();
    Ok(100.0 * hits as f64 / indices.len() as f64)
}

/// UA, RA and TA from per-sample predictions on the training and test sets.
pub fn accuracies_from_predictions(
    train_preds: &[usize],
    train_labels: &[usize],
    partition: &ForgetPartition,
    test_preds: &[usize],
    test_labels: &[usize],
) -> Result<CoreAccuracies> {
    if train_preds.len() != train_labels.len() || test_preds.len() != test_labels.len() {
        return Err(Error::Dimension(
            "prediction and label counts differ".into(),
        ));
    }
    if partition.len() != train_labels.len() {
        return Err(Error::Input(
            "partition does not cover the training set".into(),
        ));
    }
    let test_all: Vec<usize> = (0..test_labels.len()).collect();
    Ok(CoreAccuracies {
        ua: accuracy_over(train_preds, train_labels, partition.forget())?,
        ra: accuracy_over(train_preds, train_labels, partition.remain())?,
        ta: accuracy_over(test_preds, test_labels, &test_all)?,
    })
}

/// UA on the forget set, RA on the remain set and TA on `test`, all on clean images.
pub fn core_accuracies(
    model: &Model,
    partition: &ForgetPartition,
    data: &Dataset,
    test: &Dataset,
) -> Result<CoreAccuracies> {
    if data.is_empty() || test.is_empty() {
        return Err(Error::Input("accuracy over an empty set".into()));
    }
    accuracies_from_predictions(
        &model.predictions(data)?,
        data.labels(),
        partition,
        &model.predictions(test)?,
        test.labels(),
    )
}

/// Test accuracy over samples whose label is not `class`.
pub fn accuracy_excluding_class(model: &Model, test: &Dataset, class: usize) -> Result<f64> {
    let keep: Vec<usize> = (0..test.len())
        .filter(|&i| test.label(i) != class)
        .collect();
    accuracy_over(&model.predictions(test)?, test.labels(), &keep)
}

/// Softmax probability of `label`, computed in f64.
pub fn true_class_confidence(logits: &[f32], label: usize) -> f64 {
    let max = logits
        .iter()
        .fold(f64::NEG_INFINITY, |m, &v| m.max(f64::from(v)));
    let z: f64 = logits.iter().map(|&v| (f64::from(v) - max).exp()).sum();
    (f64::from(logits[label]) - max).exp() / z
}

/// True-class confidences for the listed samples.
pub fn confidences(model: &Model, data: &Dataset, indices: &[usize]) -> Result<Vec<f64>> {
    let sub = data.subset(indices)?;
    let k = data.classes();
    let logits = model.logits(&sub)?;
    Ok(logits
        .chunks(k)
        .zip(sub.labels())
        .map(|(row, &y)| true_class_confidence(row, y))
        .collect())
}

/// Confidence-threshold membership attacker: a sample is flagged as a
/// member when its confidence is strictly above the threshold.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MiaAttacker {
    pub threshold: f64,
    /// Balanced accuracy on the fit data, percent. `None` for a hand-set threshold.
    pub fit_accuracy: Option<f64>,
    pub members: usize,
    pub nonmembers: usize,
}

impl MiaAttacker {
    pub fn with_threshold(threshold: f64) -> Self {
        Self {
            threshold,
            fit_accuracy: None,
            members: 0,
            nonmembers: 0,
        }
    }

    pub fn is_member(&self, confidence: f64) -> bool {
        confidence > self.threshold
    }

    /// Balanced accuracy (percent) of this attacker on labelled confidences.
    pub fn balanced_accuracy(&self, members: &[f64], nonmembers: &[f64]) -> Result<f64> {
        if members.is_empty() || nonmembers.is_empty() {
            return Err(Error::Fit(
                "balanced accuracy needs both members and nonmembers".into(),
            ));
        }
        let tp = members.iter().filter(|&&c| self.is_member(c)).count();
        let tn = nonmembers.iter().filter(|&&c| !self.is_member(c)).count();
        Ok(50.0 * (tp as f64 / members.len() as f64 + tn as f64 / nonmembers.len() as f64))
    }

    /// Percentage of `confidences` flagged as members.
    pub fn score(&self, confidences: &[f64]) -> Result<f64> {
        if confidences.is_empty() {
            return Err(Error::Input("MIA score of an empty set".into()));
        }
        let hits = confidences.iter().filter(|&&c| self.is_member(c)).count();
        Ok(100.0 * hits as f64 / confidences.len() as f64)
    }
}

/// Chooses the threshold, among the observed confidence values, that
/// maximises balanced accuracy. Ties go to the lower threshold.
pub fn fit_threshold(members: &[f64], nonmembers: &[f64]) -> Result<MiaAttacker> {
    if members.is_empty() || nonmembers.is_empty() {
        return Err(Error::Fit(format!(
            "need both classes, got {} members and {} nonmembers",
            members.len(),
            nonmembers.len()
        )));
    }
    if members.iter().chain(nonmembers).any(|c| !c.is_finite()) {
        return Err(Error::Fit("non-finite confidence".into()));
    }
    let (nm, nn) = (members.len() as u128, nonmembers.len() as u128);
    // (confidence, is_member), ascending
    let mut all: Vec<(f64, bool)> = members
        .iter()
        .map(|&c| (c, true))
        .chain(nonmembers.iter().map(|&c| (c, false)))
        .collect();
    all.sort_by(|a, b| a.0.total_cmp(&b.0));
    // sweeping t upward over distinct values: members at or below t become
    // misses, nonmembers at or below t become correct rejections
    let (mut tp, mut tn) = (nm, 0u128);
    let mut best: Option<(u128, f64)> = None;
    let mut i = 0;
    while i < all.len() {
        let t = all[i].0;
        while i < all.len() && all[i].0 == t {
            if all[i].1 {
                tp -= 1;
            } else {
                tn += 1;
            }
            i += 1;
        }
        // balanced accuracy scaled by nm * nn, exact in integers
        let score = tp * nn + tn * nm;
        if best.is_none_or(|(s, _)| score > s) {
            best = Some((score, t));
        }
    }
    let (score, threshold) = best.expect("nonempty");
    Ok(MiaAttacker {
        threshold,
        fit_accuracy: Some(50.0 * score as f64 / (nm * nn) as f64),
        members: members.len(),
        nonmembers: nonmembers.len(),
    })
}

/// Draws equal-size member (remain set) and nonmember (test set) samples
/// for `seed` and fits the attacker on their confidences.
pub fn fit_mia_attacker(
    model: &Model,
    partition: &ForgetPartition,
    data: &Dataset,
    test: &Dataset,
    seed: u64,
) -> Result<MiaAttacker> {
    let remain = partition.remain();
    let n = remain.len().min(test.len());
    if n == 0 {
        return Err(Error::Fit("members or nonmembers are empty".into()));
    }
    let mut r = rng::stream(seed, rng::MIA, &[]);
    let mut members: Vec<usize> = index::sample(&mut r, remain.len(), n)
        .into_iter()
        .map(|i| remain[i])
        .collect();
    members.sort_unstable();
    let mut nonmembers = index::sample(&mut r, test.len(), n).into_vec();
    nonmembers.sort_unstable();
    fit_threshold(
        &confidences(model, data, &members)?,
        &confidences(model, test, &nonmembers)?,
    )
}

/// Percentage of the forget set the attacker flags as members.
pub fn mia_score(
    model: &Model,
    partition: &ForgetPartition,
    data: &Dataset,
    attacker: &MiaAttacker,
) -> Result<f64> {
    if partition.forget().is_empty() {
        return Err(Error::Input("forget set is empty".into()));
    }
    attacker.score(&confidences(model, data, partition.forget())?)
}

/// Mean of four gap values.
pub fn average_of(gaps: [f64; 4]) -> f64 {
    (gaps[0] + gaps[1] + gaps[2] + gaps[3]) / 4.0
}

pub fn average_gap(gaps: &GapRecord) -> f64 {
    average_of([gaps.ua, gaps.ra, gaps.ta, gaps.mia])
}

fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let (mut sum, mut n) = (0.0, 0usize);
    for x in xs {
        sum += x;
        n += 1;
    }
    sum / n as f64
}

fn metric_values(r: &MetricsRecord) -> [f64; 4] {
    [r.ua, r.ra, r.ta, r.mia]
}

pub fn metric_gap(
    unlearned: &[MetricsRecord],
    retrained: &[MetricsRecord],
    mode: GapMode,
) -> Result<GapRecord> {
    if unlearned.is_empty() || retrained.is_empty() {
        return Err(Error::Input(
            "gap needs at least one run on each side".into(),
        ));
    }
    let gaps: [f64; 4] = match mode {
        GapMode::OfMeans => std::array::from_fn(|m| {
            let a = mean(unlearned.iter().map(|r| metric_values(r)[m]));
            let b = mean(retrained.iter().map(|r| metric_values(r)[m]));
            (a - b).abs()
        }),
        GapMode::PerSeed => {
            let by_seed = |runs: &[MetricsRecord]| -> Result<BTreeMap<u64, [f64; 4]>> {
                let mut map = BTreeMap::new();
                for r in runs {
                    if map.insert(r.seed, metric_values(r)).is_some() {
                        return Err(Error::Input(format!("seed {} appears twice", r.seed)));
                    }
                }
                Ok(map)
            };
            let (u, r) = (by_seed(unlearned)?, by_seed(retrained)?);
            if u.len() != r.len() || u.keys().any(|s| !r.contains_key(s)) {
                return Err(Error::Input(format!(
                    "unpaired seeds: {:?} vs {:?}",
                    u.keys().collect::<Vec<_>>(),
                    r.keys().collect::<Vec<_>>()
                )));
            }
            std::array::from_fn(|m| mean(u.iter().map(|(s, a)| (a[m] - r[s][m]).abs())))
        }
    };
    Ok(GapRecord::new(gaps[0], gaps[1], gaps[2], gaps[3], mode))
}
