use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{Dataset, Split};
use crate::error::{Error, Result};
use crate::rng;

/// Class-conditional blob images: every class owns a smooth mean pattern made
/// of a few coloured Gaussian bumps; samples add a random spatial shift of
/// that pattern plus per-pixel Gaussian noise, then clip to `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub classes: usize,
    pub per_class: usize,
    pub image_shape: [usize; 3],
    /// Standard deviation of the per-pixel noise.
    pub noise: f32,
    /// Maximum per-sample shift of the class pattern, in pixels.
    #[serde(default)]
    pub max_shift: usize,
    /// Bumps per class pattern.
    #[serde(default = "default_bumps")]
    pub bumps: usize,
    pub seed: u64,
}

fn default_bumps() -> usize {
    3
}

impl SyntheticSpec {
    pub fn new(classes: usize, per_class: usize, image_shape: [usize; 3], seed: u64) -> Self {
        Self {
            classes,
            per_class,
            image_shape,
            noise: 0.1,
            max_shift: 0,
            bumps: default_bumps(),
            seed,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.classes < 2 {
            return Err(Error::Input(format!(
                "need at least 2 classes, got {}",
                self.classes
            )));
        }
        if self.per_class == 0 {
            return Err(Error::Input("per_class must be at least 1".into()));
        }
        if self.image_shape.contains(&0) {
            return Err(Error::Input(format!(
                "bad image shape {:?}",
                self.image_shape
            )));
        }
        if !(self.noise >= 0.0 && self.noise.is_finite()) {
            return Err(Error::Input(format!(
                "noise must be finite and >= 0, got {}",
                self.noise
            )));
        }
        Ok(())
    }

    /// Mean image of every class; depends only on the seed and geometry.
    pub fn class_patterns(&self) -> Vec<Vec<f32>> {
        let [c, h, w] = self.image_shape;
        let mut rng = rng::stream(self.seed, rng::SYNTHETIC, &[0]);
        (0..self.classes)
            .map(|_| {
                let mut img = vec![0.5f32; c * h * w];
                for _ in 0..self.bumps {
                    let cy = rng.gen_range(0.0..h as f32);
                    let cx = rng.gen_range(0.0..w as f32);
                    let sigma = rng.gen_range(0.15..0.35) * h.min(w) as f32;
                    let colour: Vec<f32> = (0..c).map(|_| rng.gen_range(-0.45..0.45)).collect();
                    for (ch, &amp) in colour.iter().enumerate() {
                        for y in 0..h {
                            for x in 0..w {
                                let d2 = (y as f32 - cy).powi(2) + (x as f32 - cx).powi(2);
                                img[(ch * h + y) * w + x] +=
                                    amp * (-d2 / (2.0 * sigma * sigma)).exp();
                            }
                        }
                    }
                }
                img.iter_mut().for_each(|v| *v = v.clamp(0.0, 1.0));
                img
            })
            .collect()
    }
}

/// Generates a class-balanced dataset, ordered class by class. Train and test
/// splits share class patterns but draw independent noise.
pub fn make_synthetic(spec: &SyntheticSpec, split: Split) -> Result<Dataset> {
    spec.validate()?;
    let [c, h, w] = spec.image_shape;
    let patterns = spec.class_patterns();
    let split_tag = match split {
        Split::Train => 1,
        Split::Test => 2,
    };
    let mut rng = rng::stream(spec.seed, rng::SYNTHETIC, &[split_tag]);
    let n = spec.classes * spec.per_class;
    let mut images = Vec::with_capacity(n * c * h * w);
    let mut labels = Vec::with_capacity(n);
    let shift = spec.max_shift as i64;
    for (class, pattern) in patterns.iter().enumerate() {
        for _ in 0..spec.per_class {
            let (dy, dx) = if shift > 0 {
                (rng.gen_range(-shift..=shift), rng.gen_range(-shift..=shift))
            } else {
                (0, 0)
            };
            for ch in 0..c {
                for y in 0..h {
                    for x in 0..w {
                        let sy = (y as i64 - dy).clamp(0, h as i64 - 1) as usize;
                        let sx = (x as i64 - dx).clamp(0, w as i64 - 1) as usize;
                        let z: f32 = StandardNormal.sample(&mut rng);
                        let v = pattern[(ch * h + sy) * w + sx] + spec.noise * z;
                        images.push(v.clamp(0.0, 1.0));
                    }
                }
            }
            labels.push(class);
        }
    }
    Dataset::new(images, labels, spec.classes, spec.image_shape, split)
}
