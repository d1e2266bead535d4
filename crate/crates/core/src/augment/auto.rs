use super::{AppliedOp, Image, Interpolation, OpKind};
use crate::error::{Error, Result};

/// One op of an AutoAugment sub-policy. `magnitude` is a bin in `0..=9`
/// mapped to level `magnitude / 9`; parameter-free ops ignore it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolicyStep {
    pub kind: OpKind,
    pub prob: f64,
    pub magnitude: u8,
}

pub type SubPolicy = [PolicyStep; 2];

const fn s(kind: OpKind, prob: f64, magnitude: u8) -> PolicyStep {
    PolicyStep {
        kind,
        prob,
        magnitude,
    }
}

use OpKind::*;

/// The learned CIFAR-10 policy as distributed with torchvision.
pub const AUTO_AUGMENT_CIFAR: [SubPolicy; 25] = [
    [s(Invert, 0.1, 0), s(Contrast, 0.2, 6)],
    [s(Rotate, 0.7, 2), s(TranslateX, 0.3, 9)],
    [s(Sharpness, 0.8, 1), s(Sharpness, 0.9, 3)],
    [s(ShearY, 0.5, 8), s(TranslateY, 0.7, 9)],
    [s(AutoContrast, 0.5, 0), s(Equalize, 0.9, 0)],
    [s(ShearY, 0.2, 7), s(Posterize, 0.3, 7)],
    [s(Color, 0.4, 3), s(Brightness, 0.6, 7)],
    [s(Sharpness, 0.3, 9), s(Brightness, 0.7, 9)],
    [s(Equalize, 0.6, 0), s(Equalize, 0.5, 0)],
    [s(Contrast, 0.6, 7), s(Sharpness, 0.6, 5)],
    [s(Color, 0.7, 7), s(TranslateX, 0.5, 8)],
    [s(Equalize, 0.3, 0), s(AutoContrast, 0.4, 0)],
    [s(TranslateY, 0.4, 3), s(Sharpness, 0.2, 6)],
    [s(Brightness, 0.9, 6), s(Color, 0.2, 8)],
    [s(Solarize, 0.5, 2), s(Invert, 0.0, 0)],
    [s(Equalize, 0.2, 0), s(AutoContrast, 0.6, 0)],
    [s(Equalize, 0.2, 0), s(Equalize, 0.6, 0)],
    [s(Color, 0.9, 9), s(Equalize, 0.6, 0)],
    [s(AutoContrast, 0.8, 0), s(Solarize, 0.2, 8)],
    [s(Brightness, 0.1, 3), s(Color, 0.7, 0)],
    [s(Solarize, 0.4, 5), s(AutoContrast, 0.9, 0)],
    [s(TranslateY, 0.9, 9), s(TranslateY, 0.7, 9)],
    [s(AutoContrast, 0.9, 0), s(Solarize, 0.8, 3)],
    [s(Equalize, 0.8, 0), s(Invert, 0.1, 0)],
    [s(TranslateY, 0.7, 9), s(AutoContrast, 0.9, 0)],
];

/// Re-applies a logged [`AppliedOp::AutoGate`] decision.
pub fn replay_auto_augment(
    img: &Image,
    table: &[SubPolicy],
    record: &AppliedOp,
    interp: Interpolation,
) -> Result<Image> {
    let AppliedOp::AutoGate {
        sub_policy,
        fired,
        signs,
    } = record
    else {
        return Err(Error::Input(format!(
            "not an AutoAugment record: {record:?}"
        )));
    };
    let sub = table
        .get(*sub_policy)
        .ok_or_else(|| Error::Input(format!("sub-policy {sub_policy} out of range")))?;
    let mut out = img.clone();
    for (slot, step) in sub.iter().enumerate() {
        if fired[slot] {
            let level = f32::from(step.magnitude) / 9.0;
            out = step.kind.apply(&out, level, signs[slot], interp);
        }
    }
    Ok(out)
}
