use rand::seq::index;
use serde::{Deserialize, Serialize};

use super::Dataset;
use crate::error::{Error, Result};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "lowercase")]
pub enum ForgetMode {
    /// Forget `round(rate * N)` samples drawn uniformly without replacement.
    Random { rate: f64 },
    /// Forget every sample of one class.
    Classwise { class: usize },
}

impl ForgetMode {
    pub fn tag(&self) -> &'static str {
        match self {
            ForgetMode::Random { .. } => "random",
            ForgetMode::Classwise { .. } => "classwise",
        }
    }

    /// Rate or class id as a plain number, for reports.
    pub fn parameter(&self) -> f64 {
        match *self {
            ForgetMode::Random { rate } => rate,
            ForgetMode::Classwise { class } => class as f64,
        }
    }
}

/// Disjoint cover of `0..N` by the forget set and the remain set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForgetPartition {
    forget: Vec<usize>,
    remain: Vec<usize>,
    mode: ForgetMode,
    seed: u64,
}

impl ForgetPartition {
    /// Builds a partition of `0..n` from an explicit forget list. The forget
    /// set may be empty here; `split_forget` never produces one.
    pub fn from_forget(n: usize, forget: &[usize], mode: ForgetMode, seed: u64) -> Result<Self> {
        let mut in_forget = vec![false; n];
        for &i in forget {
            if i >= n {
                return Err(Error::Input(format!(
                    "forget index {i} out of range for {n} samples"
                )));
            }
            if in_forget[i] {
                return Err(Error::Input(format!("duplicate forget index {i}")));
            }
            in_forget[i] = true;
        }
        let (f, r): (Vec<usize>, Vec<usize>) = (0..n).partition(|&i| in_forget[i]);
        Ok(Self {
            forget: f,
            remain: r,
            mode,
            seed,
        })
    }

    pub fn forget(&self) -> &[usize] {
        &self.forget
    }

    pub fn remain(&self) -> &[usize] {
        &self.remain
    }

    pub fn mode(&self) -> ForgetMode {
        self.mode
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn len(&self) -> usize {
        self.forget.len() + self.remain.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// The class removed by class-wise forgetting, if any.
    pub fn forgotten_class(&self) -> Option<usize> {
        match self.mode {
            ForgetMode::Classwise { class } => Some(class),
            ForgetMode::Random { .. } => None,
        }
    }
}

/// Draws the forget set. Depends only on `N`, the labels and the seed.
pub fn split_forget(data: &Dataset, mode: ForgetMode, seed: u64) -> Result<ForgetPartition> {
    let n = data.len();
    let forget: Vec<usize> = match mode {
        ForgetMode::Random { rate } => {
            if !(rate > 0.0 && rate <= 1.0) {
                return Err(Error::Input(format!(
                    "forget rate must lie in (0, 1], got {rate}"
                )));
            }
            let count = (rate * n as f64).round() as usize;
            if count == 0 {
                return Err(Error::Input(format!(
                    "forget rate {rate} selects no samples out of {n}"
                )));
            }
            let mut rng = rng::stream(seed, rng::PARTITION, &[]);
            index::sample(&mut rng, n, count).into_vec()
        }
        ForgetMode::Classwise { class } => {
            if class >= data.classes() {
                return Err(Error::Input(format!(
                    "class {class} not below class count {}",
                    data.classes()
                )));
            }
            let picked: Vec<usize> = (0..n).filter(|&i| data.label(i) == class).collect();
            if picked.is_empty() {
                return Err(Error::Input(format!("class {class} has no samples")));
            }
            picked
        }
    };
    ForgetPartition::from_forget(n, &forget, mode, seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Split;

    fn labelled(labels: Vec<usize>, classes: usize) -> Dataset {
        let n = labels.len();
        Dataset::new(vec![0.0; n], labels, classes, [1, 1, 1], Split::Train).unwrap()
    }

    #[test]
    fn random_rate_counts() {
        let ds = labelled((0..50_000).map(|i| i % 10).collect(), 10);
        let p = split_forget(&ds, ForgetMode::Random { rate: 0.1 }, 3).unwrap();
        assert_eq!(p.forget().len(), 5_000);
        assert_eq!(p.remain().len(), 45_000);
        let c = split_forget(&ds, ForgetMode::Classwise { class: 7 }, 3).unwrap();
        assert_eq!(c.forget().len(), 5_000);
        assert!(c.forget().iter().all(|&i| ds.label(i) == 7));
    }

    #[test]
    fn full_rate_leaves_empty_remain() {
        let ds = labelled(vec![0, 1, 0, 1], 2);
        let p = split_forget(&ds, ForgetMode::Random { rate: 1.0 }, 0).unwrap();
        assert!(p.remain().is_empty());
        assert_eq!(p.forget(), &[0, 1, 2, 3]);
    }

    #[test]
    fn tiny_rate_is_rejected() {
        let ds = labelled(vec![0, 1, 0, 1], 2);
        let err = split_forget(&ds, ForgetMode::Random { rate: 0.01 }, 0).unwrap_err();
        assert!(matches!(err, Error::Input(_)));
        assert!(split_forget(&ds, ForgetMode::Classwise { class: 2 }, 0).is_err());
    }
}
