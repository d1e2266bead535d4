//! Seeded image augmentation: the Default crop-and-flip pair and the
//! RandAugment, AutoAugment, Random Erasing, TrivialAugment and AugMix
//! scenarios built on top of it.
//!
//! Every random transform draws from an [`AugRng`] derived from
//! `(seed, sample index, epoch)`, so a policy is a pure function of its
//! inputs and records what it did in a [`AppliedOp`] log.

mod auto;
mod ops;

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rand::{Rng, RngCore};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Dirichlet, Distribution};
use serde::{Deserialize, Serialize};

pub use auto::{replay_auto_augment, PolicyStep, SubPolicy, AUTO_AUGMENT_CIFAR};
pub use ops::{Interpolation, OpKind};

use crate::error::{Error, Result};
use crate::rng;

/// Number of magnitude bins shared by RandAugment, TrivialAugment and AugMix.
pub const MAGNITUDE_BINS: u8 = 31;

/// A single `C x H x W` image with values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub data: Vec<f32>,
}

impl Image {
    pub fn new(channels: usize, height: usize, width: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != channels * height * width {
            return Err(Error::Dimension(format!(
                "{} values for a {channels}x{height}x{width} image",
                data.len()
            )));
        }
        Ok(Self {
            channels,
            height,
            width,
            data,
        })
    }

    pub fn from_slice(shape: [usize; 3], data: &[f32]) -> Result<Self> {
        Self::new(shape[0], shape[1], shape[2], data.to_vec())
    }

    pub fn zeros(channels: usize, height: usize, width: usize) -> Self {
        Self {
            channels,
            height,
            width,
            data: vec![0.0; channels * height * width],
        }
    }

    pub fn shape(&self) -> [usize; 3] {
        [self.channels, self.height, self.width]
    }

    pub fn map(&self, f: impl Fn(f32) -> f32) -> Image {
        Image {
            channels: self.channels,
            height: self.height,
            width: self.width,
            data: self.data.iter().map(|&v| f(v).clamp(0.0, 1.0)).collect(),
        }
    }

    fn at(&self, c: usize, y: usize, x: usize) -> f32 {
        self.data[(c * self.height + y) * self.width + x]
    }
}

/// Per-sample random stream. Counts the 32-bit words drawn so logs can show
/// how much randomness each transform consumed.
#[derive(Debug, Clone)]
pub struct AugRng {
    inner: ChaCha8Rng,
    draws: u64,
}

impl AugRng {
    pub fn for_sample(seed: u64, sample_index: u64, epoch: u64) -> Self {
        Self {
            inner: rng::stream(seed, rng::AUGMENT, &[sample_index, epoch]),
            draws: 0,
        }
    }

    pub fn draws(&self) -> u64 {
        self.draws
    }
}

impl RngCore for AugRng {
    fn next_u32(&mut self) -> u32 {
        self.draws += 1;
        self.inner.next_u32()
    }
    fn next_u64(&mut self) -> u64 {
        self.draws += 2;
        self.inner.next_u64()
    }
    fn fill_bytes(&mut self, dest: &mut [u8]) {
        self.draws += dest.len().div_ceil(4) as u64;
        self.inner.fill_bytes(dest)
    }
    fn try_fill_bytes(&mut self, dest: &mut [u8]) -> std::result::Result<(), rand::Error> {
        self.fill_bytes(dest);
        Ok(())
    }
}

/// One entry of a transform log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "kebab-case")]
pub enum AppliedOp {
    Crop {
        pad: usize,
        top: usize,
        left: usize,
    },
    Flip {
        flipped: bool,
    },
    Erase {
        top: usize,
        left: usize,
        height: usize,
        width: usize,
        fill: f32,
    },
    /// Erasing was drawn but skipped (gate closed or no rectangle fit).
    EraseSkipped,
    Transform {
        kind: OpKind,
        level: f32,
        sign: f32,
        #[serde(skip_serializing_if = "Option::is_none")]
        bin: Option<u8>,
    },
    AutoGate {
        sub_policy: usize,
        fired: [bool; 2],
        signs: [f32; 2],
    },
    AugMix {
        mix: f64,
        weights: Vec<f64>,
        chains: Vec<Vec<AppliedOp>>,
    },
}

fn draw_sign(kind: OpKind, rng: &mut impl Rng) -> f32 {
    if kind.signed() && rng.gen_bool(0.5) {
        -1.0
    } else {
        1.0
    }
}

fn bin_level(bin: u8) -> f32 {
    f32::from(bin) / f32::from(MAGNITUDE_BINS - 1)
}

/// Zero-pads by `pad` on every side and crops back at `(top, left)`.
pub fn crop_at(img: &Image, pad: usize, top: usize, left: usize) -> Image {
    let (h, w) = (img.height, img.width);
    let mut out = Image::zeros(img.channels, h, w);
    for c in 0..img.channels {
        for y in 0..h {
            let sy = (y + top).checked_sub(pad).filter(|&v| v < h);
            let Some(sy) = sy else { continue };
            for x in 0..w {
                if let Some(sx) = (x + left).checked_sub(pad).filter(|&v| v < w) {
                    out.data[(c * h + y) * w + x] = img.at(c, sy, sx);
                }
            }
        }
    }
    out
}

pub fn random_crop(img: &Image, pad: usize, rng: &mut impl Rng, log: &mut Vec<AppliedOp>) -> Image {
    let top = rng.gen_range(0..=2 * pad);
    let left = rng.gen_range(0..=2 * pad);
    log.push(AppliedOp::Crop { pad, top, left });
    crop_at(img, pad, top, left)
}

/// Reverses column order.
pub fn flip(img: &Image) -> Image {
    let mut out = img.clone();
    for row in out.data.chunks_mut(img.width) {
        row.reverse();
    }
    out
}

pub fn horizontal_flip(img: &Image, p: f64, rng: &mut impl Rng, log: &mut Vec<AppliedOp>) -> Image {
    let flipped = rng.gen::<f64>() < p;
    log.push(AppliedOp::Flip { flipped });
    if flipped {
        flip(img)
    } else {
        img.clone()
    }
}

/// Sets a rectangle (clipped to the image) to `fill` in every channel.
pub fn erase_region(
    img: &Image,
    top: usize,
    left: usize,
    height: usize,
    width: usize,
    fill: f32,
) -> Image {
    let mut out = img.clone();
    let fill = fill.clamp(0.0, 1.0);
    for c in 0..img.channels {
        for y in top..(top + height).min(img.height) {
            for x in left..(left + width).min(img.width) {
                out.data[(c * img.height + y) * img.width + x] = fill;
            }
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EraseParams {
    pub p: f64,
    pub area: [f64; 2],
    pub aspect: [f64; 2],
    pub fill: f32,
    #[serde(default = "default_erase_attempts")]
    pub attempts: usize,
}

fn default_erase_attempts() -> usize {
    10
}

impl Default for EraseParams {
    fn default() -> Self {
        Self {
            p: 0.5,
            area: [0.02, 0.33],
            aspect: [0.3, 3.3],
            fill: 0.0,
            attempts: default_erase_attempts(),
        }
    }
}

impl EraseParams {
    fn validate(&self) -> Result<()> {
        let [sl, sh] = self.area;
        let [rl, rh] = self.aspect;
        if !(0.0..=1.0).contains(&self.p)
            || !(0.0 < sl && sl <= sh && sh < 1.0)
            || !(0.0 < rl && rl <= rh)
        {
            return Err(Error::Input(format!(
                "invalid random-erasing parameters {self:?}"
            )));
        }
        Ok(())
    }
}

/// Random Erasing. The rectangle is rejection-sampled so its area fraction
/// lies in `area` and its aspect ratio in `aspect`; after `attempts` misses
/// the image is returned unchanged.
pub fn random_erase(
    img: &Image,
    params: &EraseParams,
    rng: &mut impl Rng,
    log: &mut Vec<AppliedOp>,
) -> Image {
    if rng.gen::<f64>() >= params.p {
        log.push(AppliedOp::EraseSkipped);
        return img.clone();
    }
    let (h, w) = (img.height, img.width);
    let total = (h * w) as f64;
    let [sl, sh] = params.area;
    let (lr_lo, lr_hi) = (params.aspect[0].ln(), params.aspect[1].ln());
    for _ in 0..params.attempts {
        let target = total * rng.gen_range(sl..=sh);
        let ratio = rng.gen_range(lr_lo..=lr_hi).exp();
        let eh = (target * ratio).sqrt().round() as usize;
        let ew = (target / ratio).sqrt().round() as usize;
        if eh == 0 || ew == 0 || eh > h || ew > w {
            continue;
        }
        let frac = (eh * ew) as f64 / total;
        if frac < sl || frac > sh {
            continue;
        }
        let top = rng.gen_range(0..=h - eh);
        let left = rng.gen_range(0..=w - ew);
        log.push(AppliedOp::Erase {
            top,
            left,
            height: eh,
            width: ew,
            fill: params.fill,
        });
        return erase_region(img, top, left, eh, ew, params.fill);
    }
    log.push(AppliedOp::EraseSkipped);
    img.clone()
}

/// One uniformly drawn op at one uniformly drawn magnitude bin in `[0, 30]`.
pub fn trivial_augment(
    img: &Image,
    table: &[OpKind],
    interp: Interpolation,
    rng: &mut impl Rng,
    log: &mut Vec<AppliedOp>,
) -> Image {
    assert!(!table.is_empty(), "op table must not be empty");
    let kind = table[rng.gen_range(0..table.len())];
    let bin = rng.gen_range(0..MAGNITUDE_BINS);
    let sign = draw_sign(kind, rng);
    let level = bin_level(bin);
    log.push(AppliedOp::Transform {
        kind,
        level,
        sign,
        bin: Some(bin),
    });
    kind.apply(img, level, sign, interp)
}

/// `n` ops drawn uniformly with replacement, each at magnitude bin `m`.
pub fn rand_augment(
    img: &Image,
    n: usize,
    m: u8,
    table: &[OpKind],
    interp: Interpolation,
    rng: &mut impl Rng,
    log: &mut Vec<AppliedOp>,
) -> Image {
    assert!(!table.is_empty(), "op table must not be empty");
    let level = bin_level(m.min(MAGNITUDE_BINS - 1));
    let mut out = img.clone();
    for _ in 0..n {
        let kind = table[rng.gen_range(0..table.len())];
        let sign = draw_sign(kind, rng);
        log.push(AppliedOp::Transform {
            kind,
            level,
            sign,
            bin: Some(m),
        });
        out = kind.apply(&out, level, sign, interp);
    }
    out
}

/// One uniformly drawn sub-policy; each of its two ops fires with its own
/// probability.
pub fn auto_augment(
    img: &Image,
    table: &[SubPolicy],
    interp: Interpolation,
    rng: &mut impl Rng,
    log: &mut Vec<AppliedOp>,
) -> Image {
    assert!(!table.is_empty(), "policy table must not be empty");
    let idx = rng.gen_range(0..table.len());
    let sub = &table[idx];
    let mut fired = [false; 2];
    let mut signs = [1.0; 2];
    for (slot, step) in sub.iter().enumerate() {
        fired[slot] = rng.gen::<f64>() < step.prob;
        signs[slot] = draw_sign(step.kind, rng);
    }
    let record = AppliedOp::AutoGate {
        sub_policy: idx,
        fired,
        signs,
    };
    let out = replay_auto_augment(img, table, &record, interp).expect("record built from table");
    log.push(record);
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AugMixParams {
    pub chains: usize,
    pub depth: [usize; 2],
    pub alpha: f64,
    /// Magnitudes are drawn from bins `0..=max_bin`.
    pub max_bin: u8,
}

impl Default for AugMixParams {
    fn default() -> Self {
        Self {
            chains: 3,
            depth: [1, 3],
            alpha: 1.0,
            max_bin: 9,
        }
    }
}

/// Deterministic AugMix core: `mix * original + (1 - mix) * sum_i w_i chain_i`.
pub fn augmix_blend(img: &Image, chains: &[Image], weights: &[f64], mix: f64) -> Image {
    let mut out = img.clone();
    for (i, o) in out.data.iter_mut().enumerate() {
        let blended: f64 = chains
            .iter()
            .zip(weights)
            .map(|(c, &w)| w * f64::from(c.data[i]))
            .sum();
        let v = mix * f64::from(img.data[i]) + (1.0 - mix) * blended;
        *o = (v as f32).clamp(0.0, 1.0);
    }
    out
}

/// Draws Dirichlet chain weights and a Beta mixing coefficient.
pub fn draw_augmix_weights(chains: usize, alpha: f64, rng: &mut impl Rng) -> (Vec<f64>, f64) {
    let weights = if chains == 1 {
        vec![1.0]
    } else {
        Dirichlet::new_with_size(alpha, chains)
            .expect("alpha > 0 and chains >= 2")
            .sample(rng)
    };
    let mix = Beta::new(alpha, alpha).expect("alpha > 0").sample(rng);
    (weights, mix)
}

pub fn augmix(
    img: &Image,
    params: &AugMixParams,
    table: &[OpKind],
    interp: Interpolation,
    rng: &mut impl Rng,
    log: &mut Vec<AppliedOp>,
) -> Image {
    assert!(
        params.chains >= 1 && params.alpha > 0.0,
        "invalid AugMix parameters"
    );
    assert!(!table.is_empty(), "op table must not be empty");
    let (weights, mix) = draw_augmix_weights(params.chains, params.alpha, rng);
    let mut chain_logs = Vec::with_capacity(params.chains);
    let mut chains = Vec::with_capacity(params.chains);
    for _ in 0..params.chains {
        let depth = rng.gen_range(params.depth[0]..=params.depth[1]);
        let mut chain = img.clone();
        let mut clog = Vec::with_capacity(depth);
        for _ in 0..depth {
            let kind = table[rng.gen_range(0..table.len())];
            let bin = rng.gen_range(0..=params.max_bin.min(MAGNITUDE_BINS - 1));
            let sign = draw_sign(kind, rng);
            let level = bin_level(bin);
            clog.push(AppliedOp::Transform {
                kind,
                level,
                sign,
                bin: Some(bin),
            });
            chain = kind.apply(&chain, level, sign, interp);
        }
        chains.push(chain);
        chain_logs.push(clog);
    }
    log.push(AppliedOp::AugMix {
        mix,
        weights: weights.clone(),
        chains: chain_logs,
    });
    augmix_blend(img, &chains, &weights, mix)
}

/// The seven augmentation scenarios.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Scenario {
    NoAug,
    Default,
    DefaultRandAugment,
    DefaultAutoAugment,
    DefaultRandomErasing,
    DefaultTrivialAug,
    DefaultAugMix,
}

impl Scenario {
    pub const ALL: [Scenario; 7] = [
        Scenario::NoAug,
        Scenario::Default,
        Scenario::DefaultRandAugment,
        Scenario::DefaultAutoAugment,
        Scenario::DefaultRandomErasing,
        Scenario::DefaultTrivialAug,
        Scenario::DefaultAugMix,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Scenario::NoAug => "no-aug",
            Scenario::Default => "default",
            Scenario::DefaultRandAugment => "default+randaugment",
            Scenario::DefaultAutoAugment => "default+autoaugment",
            Scenario::DefaultRandomErasing => "default+random-erasing",
            Scenario::DefaultTrivialAug => "default+trivialaug",
            Scenario::DefaultAugMix => "default+augmix",
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.trim().to_ascii_lowercase().replace(['_', ' '], "-");
        Scenario::ALL
            .into_iter()
            .find(|sc| sc.name() == norm)
            .ok_or_else(|| Error::Input(format!("unknown augmentation scenario `{s}`")))
    }
}

impl Serialize for Scenario {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.name())
    }
}

impl<'de> Deserialize<'de> for Scenario {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Parameters of every transform a scenario may use.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AugmentParams {
    pub crop_pad: usize,
    pub flip_p: f64,
    pub rand_augment_n: usize,
    pub rand_augment_m: u8,
    pub erase: EraseParams,
    pub augmix: AugMixParams,
    pub interpolation: Interpolation,
    pub op_table: Vec<OpKind>,
}

impl Default for AugmentParams {
    fn default() -> Self {
        Self {
            crop_pad: 4,
            flip_p: 0.5,
            rand_augment_n: 2,
            rand_augment_m: 9,
            erase: EraseParams::default(),
            augmix: AugMixParams::default(),
            interpolation: Interpolation::Nearest,
            op_table: OpKind::SHARED_TABLE.to_vec(),
        }
    }
}

impl AugmentParams {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.flip_p) {
            return Err(Error::Input(format!(
                "flip probability {} outside [0, 1]",
                self.flip_p
            )));
        }
        if self.op_table.is_empty() {
            return Err(Error::Input("op table must not be empty".into()));
        }
        if self.rand_augment_n == 0 || self.rand_augment_m >= MAGNITUDE_BINS {
            return Err(Error::Input(format!(
                "RandAugment needs n >= 1 and m in [0, {}]",
                MAGNITUDE_BINS - 1
            )));
        }
        let am = &self.augmix;
        if am.chains == 0 || !(am.alpha > 0.0) || am.depth[0] == 0 || am.depth[0] > am.depth[1] {
            return Err(Error::Input(format!("invalid AugMix parameters {am:?}")));
        }
        self.erase.validate()
    }
}

/// A scenario plus the transform parameters it runs with.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugmentPolicy {
    pub scenario: Scenario,
    #[serde(default, flatten)]
    pub params: AugmentParams,
}

impl Default for AugmentPolicy {
    fn default() -> Self {
        Self::new(Scenario::Default)
    }
}

impl AugmentPolicy {
    pub fn new(scenario: Scenario) -> Self {
        Self {
            scenario,
            params: AugmentParams::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validate()
    }

    /// Applies the policy, returning the image and the transform log.
    pub fn apply_logged(
        &self,
        img: &Image,
        sample_index: u64,
        epoch: u64,
        seed: u64,
    ) -> (Image, Vec<AppliedOp>) {
        let mut log = Vec::new();
        if self.scenario == Scenario::NoAug {
            return (img.clone(), log);
        }
        let p = &self.params;
        let mut rng = AugRng::for_sample(seed, sample_index, epoch);
        let out = random_crop(img, p.crop_pad, &mut rng, &mut log);
        let out = horizontal_flip(&out, p.flip_p, &mut rng, &mut log);
        let interp = p.interpolation;
        let out = match self.scenario {
            Scenario::NoAug | Scenario::Default => out,
            Scenario::DefaultRandAugment => rand_augment(
                &out,
                p.rand_augment_n,
                p.rand_augment_m,
                &p.op_table,
                interp,
                &mut rng,
                &mut log,
            ),
            Scenario::DefaultAutoAugment => {
                auto_augment(&out, &AUTO_AUGMENT_CIFAR, interp, &mut rng, &mut log)
            }
            Scenario::DefaultRandomErasing => random_erase(&out, &p.erase, &mut rng, &mut log),
            Scenario::DefaultTrivialAug => {
                trivial_augment(&out, &p.op_table, interp, &mut rng, &mut log)
            }
            Scenario::DefaultAugMix => {
                augmix(&out, &p.augmix, &p.op_table, interp, &mut rng, &mut log)
            }
        };
        (out, log)
    }

    pub fn apply(&self, img: &Image, sample_index: u64, epoch: u64, seed: u64) -> Image {
        self.apply_logged(img, sample_index, epoch, seed).0
    }
}

/// Free-function form of [`AugmentPolicy::apply`].
pub fn apply_policy(
    policy: &AugmentPolicy,
    img: &Image,
    sample_index: u64,
    epoch: u64,
    seed: u64,
) -> Image {
    policy.apply(img, sample_index, epoch, seed)
}

/// One line of the newline-delimited JSON transform log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransformRecord {
    pub sample_index: u64,
    pub epoch: u64,
    pub scenario: Scenario,
    pub ops: Vec<AppliedOp>,
}

pub fn write_transform_log<W: Write>(out: &mut W, records: &[TransformRecord]) -> Result<()> {
    for r in records {
        let line = serde_json::to_string(r).map_err(|e| Error::Serde(e.to_string()))?;
        writeln!(out, "{line}").map_err(|e| Error::io("<transform log>", e))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn ramp(h: usize, w: usize) -> Image {
        Image::new(
            1,
            h,
            w,
            (0..h * w)
                .map(|i| (i + 1) as f32 / (h * w) as f32)
                .collect(),
        )
        .unwrap()
    }

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(42)
    }

    #[test]
    fn crop_identities() {
        let img = Image::new(
            3,
            32,
            32,
            (0..3072).map(|i| (i % 255) as f32 / 255.0).collect(),
        )
        .unwrap();
        assert_eq!(crop_at(&img, 4, 4, 4), img);
        let mut log = vec![];
        assert_eq!(random_crop(&img, 0, &mut rng(), &mut log), img);
    }

    #[test]
    fn crop_corner_offset_shifts_ramp() {
        let img = ramp(3, 3);
        let v = |k: usize| k as f32 / 9.0;
        let out = crop_at(&img, 1, 0, 0);
        assert_eq!(
            out.data,
            vec![0.0, 0.0, 0.0, 0.0, v(1), v(2), 0.0, v(4), v(5)]
        );
    }

    #[test]
    fn flip_properties() {
        let img = ramp(4, 5);
        assert_eq!(flip(&flip(&img)), img);
        let sym = Image::new(1, 2, 3, vec![0.1, 0.5, 0.1, 0.7, 0.2, 0.7]).unwrap();
        assert_eq!(flip(&sym), sym);
        let mut log = vec![];
        assert_eq!(horizontal_flip(&img, 0.0, &mut rng(), &mut log), img);
        assert_eq!(log, vec![AppliedOp::Flip { flipped: false }]);
    }

    #[test]
    fn erase_gate_and_full_region() {
        let img = Image::new(3, 8, 8, vec![1.0; 192]).unwrap();
        let mut log = vec![];
        let params = EraseParams {
            p: 0.0,
            ..EraseParams::default()
        };
        assert_eq!(random_erase(&img, &params, &mut rng(), &mut log), img);
        assert!(erase_region(&img, 0, 0, 8, 8, 0.0)
            .data
            .iter()
            .all(|&v| v == 0.0));
    }

    #[test]
    fn erased_area_within_bounds() {
        let img = Image::new(1, 32, 32, vec![1.0; 1024]).unwrap();
        let params = EraseParams {
            p: 1.0,
            ..EraseParams::default()
        };
        for seed in 0..200 {
            let mut r = ChaCha8Rng::seed_from_u64(seed);
            let mut log = vec![];
            let out = random_erase(&img, &params, &mut r, &mut log);
            let zeros = out.data.iter().filter(|&&v| v == 0.0).count() as f64;
            if matches!(log[0], AppliedOp::Erase { .. }) {
                assert!(
                    (0.02 * 1024.0..=0.33 * 1024.0).contains(&zeros),
                    "seed {seed}: {zeros}"
                );
            } else {
                assert_eq!(zeros, 0.0);
            }
        }
    }

    #[test]
    fn single_identity_tables() {
        let img = ramp(5, 5);
        let mut log = vec![];
        let t = [OpKind::Identity];
        assert_eq!(
            trivial_augment(&img, &t, Interpolation::Nearest, &mut rng(), &mut log),
            img
        );
        assert_eq!(
            rand_augment(&img, 1, 9, &t, Interpolation::Nearest, &mut rng(), &mut log),
            img
        );
    }

    #[test]
    fn rand_augment_applies_n_ops() {
        let img = ramp(6, 6);
        let mut log = vec![];
        rand_augment(
            &img,
            2,
            9,
            &OpKind::SHARED_TABLE,
            Interpolation::Nearest,
            &mut rng(),
            &mut log,
        );
        assert_eq!(log.len(), 2);
        assert!(log
            .iter()
            .all(|op| matches!(op, AppliedOp::Transform { bin: Some(9), .. })));
    }

    #[test]
    fn augmix_mix_one_is_identity() {
        let img = ramp(4, 4);
        let other = Image::new(1, 4, 4, vec![0.9; 16]).unwrap();
        let out = augmix_blend(&img, &[other.clone(), other], &[0.3, 0.7], 1.0);
        assert_eq!(out, img);
    }

    #[test]
    fn augmix_identity_chains_return_original() {
        let img = ramp(4, 4);
        let mut log = vec![];
        let out = augmix(
            &img,
            &AugMixParams::default(),
            &[OpKind::Identity],
            Interpolation::Nearest,
            &mut rng(),
            &mut log,
        );
        for (a, b) in out.data.iter().zip(&img.data) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn scenario_names_round_trip() {
        for sc in Scenario::ALL {
            assert_eq!(sc.name().parse::<Scenario>().unwrap(), sc);
        }
        assert!("mixup".parse::<Scenario>().is_err());
    }

    #[test]
    fn no_aug_is_bit_identical() {
        let img = ramp(5, 5);
        let p = AugmentPolicy::new(Scenario::NoAug);
        let (out, log) = p.apply_logged(&img, 3, 1, 9);
        assert_eq!(out, img);
        assert!(log.is_empty());
    }

    #[test]
    fn transform_log_lines_parse_back() {
        let img = ramp(8, 8);
        let p = AugmentPolicy::new(Scenario::DefaultAugMix);
        let (_, ops) = p.apply_logged(&img, 1, 2, 3);
        let rec = TransformRecord {
            sample_index: 1,
            epoch: 2,
            scenario: p.scenario,
            ops,
        };
        let mut buf = Vec::new();
        write_transform_log(&mut buf, std::slice::from_ref(&rec)).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 1);
        let back: TransformRecord = serde_json::from_str(text.trim()).unwrap();
        assert_eq!(back, rec);
    }
}
