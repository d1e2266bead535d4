//! Deterministic image kernels. Every kernel takes a magnitude `level` in
//! `[0, 1]` (and a sign for symmetric ops) and returns values clipped to
//! `[0, 1]`.

use serde::{Deserialize, Serialize};

use super::Image;

const MAX_ROTATE_DEG: f32 = 30.0;
const MAX_SHEAR: f32 = 0.3;
// 10 px on a 32 px image; scaled with image width
const MAX_TRANSLATE_FRAC: f32 = 10.0 / 32.0;
const MAX_ENHANCE: f32 = 0.9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OpKind {
    Identity,
    Rotate,
    ShearX,
    ShearY,
    TranslateX,
    TranslateY,
    Brightness,
    Contrast,
    Color,
    Sharpness,
    Posterize,
    Solarize,
    AutoContrast,
    Equalize,
    /// Used only by the AutoAugment table.
    Invert,
}

/// Resampling used by the geometric ops.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Interpolation {
    #[default]
    Nearest,
    Bilinear,
}

impl OpKind {
    /// The shared table used by RandAugment, TrivialAugment and AugMix.
    pub const SHARED_TABLE: [OpKind; 14] = [
        OpKind::Identity,
        OpKind::Rotate,
        OpKind::ShearX,
        OpKind::ShearY,
        OpKind::TranslateX,
        OpKind::TranslateY,
        OpKind::Brightness,
        OpKind::Contrast,
        OpKind::Color,
        OpKind::Sharpness,
        OpKind::Posterize,
        OpKind::Solarize,
        OpKind::AutoContrast,
        OpKind::Equalize,
    ];

    /// Whether the op is applied with a random sign.
    pub fn signed(self) -> bool {
        matches!(
            self,
            OpKind::Rotate
                | OpKind::ShearX
                | OpKind::ShearY
                | OpKind::TranslateX
                | OpKind::TranslateY
                | OpKind::Brightness
                | OpKind::Contrast
                | OpKind::Color
                | OpKind::Sharpness
        )
    }

    pub fn apply(self, img: &Image, level: f32, sign: f32, interp: Interpolation) -> Image {
        let level = level.clamp(0.0, 1.0);
        let s = level * sign;
        match self {
            OpKind::Identity => img.clone(),
            OpKind::Rotate => rotate(img, s * MAX_ROTATE_DEG, interp),
            OpKind::ShearX => shear(img, s * MAX_SHEAR, 0.0, interp),
            OpKind::ShearY => shear(img, 0.0, s * MAX_SHEAR, interp),
            OpKind::TranslateX => {
                translate(img, s * MAX_TRANSLATE_FRAC * img.width as f32, 0.0, interp)
            }
            OpKind::TranslateY => {
                translate(img, 0.0, s * MAX_TRANSLATE_FRAC * img.height as f32, interp)
            }
            OpKind::Brightness => brightness(img, 1.0 + s * MAX_ENHANCE),
            OpKind::Contrast => contrast(img, 1.0 + s * MAX_ENHANCE),
            OpKind::Color => color(img, 1.0 + s * MAX_ENHANCE),
            OpKind::Sharpness => sharpness(img, 1.0 + s * MAX_ENHANCE),
            OpKind::Posterize => posterize(img, 8 - (level * 4.0).round() as u32),
            OpKind::Solarize => solarize(img, 1.0 - level),
            OpKind::AutoContrast => autocontrast(img),
            OpKind::Equalize => equalize(img),
            OpKind::Invert => img.map(|v| 1.0 - v),
        }
    }
}

/// Inverse-maps every output pixel through `src(x, y)` and samples the input
/// with zero fill outside the image.
fn warp(img: &Image, interp: Interpolation, src: impl Fn(f32, f32) -> (f32, f32)) -> Image {
    let (h, w) = (img.height, img.width);
    let mut out = Image::zeros(img.channels, h, w);
    for y in 0..h {
        for x in 0..w {
            let (sx, sy) = src(x as f32, y as f32);
            for c in 0..img.channels {
                out.data[(c * h + y) * w + x] = match interp {
                    Interpolation::Nearest => sample_nearest(img, c, sx, sy),
                    Interpolation::Bilinear => sample_bilinear(img, c, sx, sy),
                };
            }
        }
    }
    out
}

fn pixel(img: &Image, c: usize, y: i64, x: i64) -> f32 {
    if y < 0 || x < 0 || y >= img.height as i64 || x >= img.width as i64 {
        0.0
    } else {
        img.data[(c * img.height + y as usize) * img.width + x as usize]
    }
}

fn sample_nearest(img: &Image, c: usize, sx: f32, sy: f32) -> f32 {
    pixel(img, c, sy.round() as i64, sx.round() as i64)
}

fn sample_bilinear(img: &Image, c: usize, sx: f32, sy: f32) -> f32 {
    let (x0, y0) = (sx.floor(), sy.floor());
    let (fx, fy) = (sx - x0, sy - y0);
    let (x0, y0) = (x0 as i64, y0 as i64);
    let top = pixel(img, c, y0, x0) * (1.0 - fx) + pixel(img, c, y0, x0 + 1) * fx;
    let bot = pixel(img, c, y0 + 1, x0) * (1.0 - fx) + pixel(img, c, y0 + 1, x0 + 1) * fx;
    (top * (1.0 - fy) + bot * fy).clamp(0.0, 1.0)
}

fn centre(img: &Image) -> (f32, f32) {
    (
        (img.width as f32 - 1.0) / 2.0,
        (img.height as f32 - 1.0) / 2.0,
    )
}

pub fn rotate(img: &Image, degrees: f32, interp: Interpolation) -> Image {
    let (cx, cy) = centre(img);
    let (sin, cos) = degrees.to_radians().sin_cos();
    warp(img, interp, |x, y| {
        let (dx, dy) = (x - cx, y - cy);
        (cos * dx + sin * dy + cx, -sin * dx + cos * dy + cy)
    })
}

pub fn shear(img: &Image, sx: f32, sy: f32, interp: Interpolation) -> Image {
    let (cx, cy) = centre(img);
    warp(img, interp, |x, y| (x + sx * (y - cy), y + sy * (x - cx)))
}

pub fn translate(img: &Image, dx: f32, dy: f32, interp: Interpolation) -> Image {
    warp(img, interp, |x, y| (x - dx, y - dy))
}

fn blend(degenerate: &[f32], img: &Image, factor: f32) -> Image {
    let mut out = img.clone();
    for (o, &d) in out.data.iter_mut().zip(degenerate) {
        *o = (d + factor * (*o - d)).clamp(0.0, 1.0);
    }
    out
}

/// Luma plane (ITU-R 601) for RGB; channel mean otherwise.
fn grayscale(img: &Image) -> Vec<f32> {
    let plane = img.height * img.width;
    let ch = |c: usize| &img.data[c * plane..(c + 1) * plane];
    if img.channels == 3 {
        (0..plane)
            .map(|i| 0.299 * ch(0)[i] + 0.587 * ch(1)[i] + 0.114 * ch(2)[i])
            .collect()
    } else {
        (0..plane)
            .map(|i| (0..img.channels).map(|c| ch(c)[i]).sum::<f32>() / img.channels as f32)
            .collect()
    }
}

pub fn brightness(img: &Image, factor: f32) -> Image {
    blend(&vec![0.0; img.data.len()], img, factor)
}

pub fn contrast(img: &Image, factor: f32) -> Image {
    let gray = grayscale(img);
    let mean = gray.iter().sum::<f32>() / gray.len() as f32;
    blend(&vec![mean; img.data.len()], img, factor)
}

pub fn color(img: &Image, factor: f32) -> Image {
    let gray = grayscale(img);
    let degenerate: Vec<f32> = (0..img.channels)
        .flat_map(|_| gray.iter().copied())
        .collect();
    blend(&degenerate, img, factor)
}

/// Blends with a 3x3 smoothed copy (centre weight 5, neighbours 1); the
/// one-pixel border of the smoothed copy keeps the original values.
pub fn sharpness(img: &Image, factor: f32) -> Image {
    let (h, w) = (img.height, img.width);
    let mut smooth = img.data.clone();
    if h >= 3 && w >= 3 {
        for c in 0..img.channels {
            for y in 1..h - 1 {
                for x in 1..w - 1 {
                    let mut acc = 0.0;
                    for dy in 0..3 {
                        for dx in 0..3 {
                            let wgt = if dy == 1 && dx == 1 { 5.0 } else { 1.0 };
                            acc += wgt * img.data[(c * h + y + dy - 1) * w + x + dx - 1];
                        }
                    }
                    smooth[(c * h + y) * w + x] = acc / 13.0;
                }
            }
        }
    }
    blend(&smooth, img, factor)
}

fn to_byte(v: f32) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

pub fn posterize(img: &Image, bits: u32) -> Image {
    let bits = bits.clamp(1, 8);
    let mask = !((1u16 << (8 - bits)) - 1) as u8;
    img.map(|v| f32::from(to_byte(v) & mask) / 255.0)
}

/// Inverts every value at or above `threshold`.
pub fn solarize(img: &Image, threshold: f32) -> Image {
    img.map(|v| if v >= threshold { 1.0 - v } else { v })
}

/// Stretches each channel to span `[0, 1]`; flat channels are left alone.
pub fn autocontrast(img: &Image) -> Image {
    let mut out = img.clone();
    let plane = img.height * img.width;
    for ch in out.data.chunks_mut(plane) {
        let lo = ch.iter().copied().fold(f32::INFINITY, f32::min);
        let hi = ch.iter().copied().fold(f32::NEG_INFINITY, f32::max);
        if hi > lo {
            let scale = 1.0 / (hi - lo);
            ch.iter_mut()
                .for_each(|v| *v = ((*v - lo) * scale).clamp(0.0, 1.0));
        }
    }
    out
}

/// Per-channel histogram equalisation over 256 levels.
pub fn equalize(img: &Image) -> Image {
    let mut out = img.clone();
    let plane = img.height * img.width;
    for ch in out.data.chunks_mut(plane) {
        let bytes: Vec<u8> = ch.iter().map(|&v| to_byte(v)).collect();
        let mut hist = [0usize; 256];
        for &b in &bytes {
            hist[b as usize] += 1;
        }
        let last = hist.iter().rposition(|&c| c > 0).unwrap_or(0);
        let step = (bytes.len() - hist[last]) / 255;
        if step == 0 {
            continue;
        }
        let mut lut = [0u8; 256];
        let mut n = step / 2;
        for (i, slot) in lut.iter_mut().enumerate() {
            *slot = (n / step).min(255) as u8;
            n += hist[i];
        }
        for (v, &b) in ch.iter_mut().zip(&bytes) {
            *v = f32::from(lut[b as usize]) / 255.0;
        }
    }
    out
}
