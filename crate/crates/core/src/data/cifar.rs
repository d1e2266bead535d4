//! CIFAR binary batches.
//!
//! Each record is the label byte(s) followed by 3072 pixel bytes: the red,
//! green and blue 32x32 planes in row-major order. CIFAR-100 records carry a
//! coarse label before the fine label; only the fine label is used.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Dataset, Split};
use crate::error::{Error, Result};

const SIDE: usize = 32;
const PIXELS: usize = 3 * SIDE * SIDE;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CifarVariant {
    Cifar10,
    Cifar100,
}

impl CifarVariant {
    pub fn classes(self) -> usize {
        match self {
            CifarVariant::Cifar10 => 10,
            CifarVariant::Cifar100 => 100,
        }
    }

    fn label_bytes(self) -> usize {
        match self {
            CifarVariant::Cifar10 => 1,
            CifarVariant::Cifar100 => 2,
        }
    }

    pub fn record_len(self) -> usize {
        self.label_bytes() + PIXELS
    }

    fn train_files(self) -> &'static [&'static str] {
        match self {
            CifarVariant::Cifar10 => &[
                "data_batch_1.bin",
                "data_batch_2.bin",
                "data_batch_3.bin",
                "data_batch_4.bin",
                "data_batch_5.bin",
            ],
            CifarVariant::Cifar100 => &["train.bin"],
        }
    }

    fn test_file(self) -> &'static str {
        match self {
            CifarVariant::Cifar10 => "test_batch.bin",
            CifarVariant::Cifar100 => "test.bin",
        }
    }
}

pub fn read_cifar_file(path: &Path, variant: CifarVariant, split: Split) -> Result<Dataset> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    parse(&bytes, variant, split, path)
}

fn parse(bytes: &[u8], variant: CifarVariant, split: Split, path: &Path) -> Result<Dataset> {
    let bad = |reason: String| Error::Format {
        file: path.to_path_buf(),
        reason,
    };
    let rec = variant.record_len();
    if bytes.is_empty() || !bytes.len().is_multiple_of(rec) {
        return Err(bad(format!(
            "length {} is not a positive multiple of the {rec}-byte record",
            bytes.len()
        )));
    }
    let n = bytes.len() / rec;
    let mut images = Vec::with_capacity(n * PIXELS);
    let mut labels = Vec::with_capacity(n);
    let mut coarse = Vec::new();
    for (r, record) in bytes.chunks_exact(rec).enumerate() {
        let label = record[variant.label_bytes() - 1] as usize;
        if label >= variant.classes() {
            return Err(bad(format!("record {r}: label {label} out of range")));
        }
        if variant == CifarVariant::Cifar100 {
            coarse.push(record[0]);
        }
        labels.push(label);
        images.extend(
            record[variant.label_bytes()..]
                .iter()
                .map(|&b| f32::from(b) / 255.0),
        );
    }
    let mut ds = Dataset::new(images, labels, variant.classes(), [3, SIDE, SIDE], split)?;
    if variant == CifarVariant::Cifar100 {
        ds.coarse_labels = Some(coarse);
    }
    Ok(ds)
}

/// Loads the official train and test batch files from `dir`.
pub fn load_cifar(dir: &Path, variant: CifarVariant) -> Result<(Dataset, Dataset)> {
    let mut train: Option<Dataset> = None;
    for name in variant.train_files() {
        let part = read_cifar_file(&dir.join(name), variant, Split::Train)?;
        train = Some(match train {
            None => part,
            Some(acc) => concat(acc, part),
        });
    }
    let test = read_cifar_file(&dir.join(variant.test_file()), variant, Split::Test)?;
    Ok((train.expect("at least one train file"), test))
}

fn concat(mut a: Dataset, b: Dataset) -> Dataset {
    a.images.extend(b.images);
    a.labels.extend(b.labels);
    if let (Some(ca), Some(cb)) = (a.coarse_labels.as_mut(), b.coarse_labels) {
        ca.extend(cb);
    }
    a
}

/// Serializes a dataset back into the binary record format.
pub fn encode_cifar(data: &Dataset, variant: CifarVariant) -> Result<Vec<u8>> {
    if data.image_shape() != [3, SIDE, SIDE] {
        return Err(Error::Dimension(format!(
            "CIFAR records hold 3x32x32 images, got {:?}",
            data.image_shape()
        )));
    }
    if data.classes() != variant.classes() {
        return Err(Error::Input(format!(
            "{} classes cannot be written as {variant:?}",
            data.classes()
        )));
    }
    let mut out = Vec::with_capacity(data.len() * variant.record_len());
    for i in 0..data.len() {
        if variant == CifarVariant::Cifar100 {
            out.push(data.coarse_labels().map_or(0, |c| c[i]));
        }
        out.push(data.label(i) as u8);
        out.extend(data.image(i).iter().map(|&v| (v * 255.0).round() as u8));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(label: &[u8], fill: impl Fn(usize) -> u8) -> Vec<u8> {
        let mut r = label.to_vec();
        r.extend((0..PIXELS).map(fill));
        r
    }

    #[test]
    fn cifar100_uses_fine_label() {
        let bytes = record(&[19, 87], |i| (i % 256) as u8);
        let ds = parse(&bytes, CifarVariant::Cifar100, Split::Train, Path::new("x")).unwrap();
        assert_eq!(ds.labels(), &[87]);
        assert_eq!(ds.coarse_labels(), Some(&[19u8][..]));
        assert_eq!(encode_cifar(&ds, CifarVariant::Cifar100).unwrap(), bytes);
    }

    #[test]
    fn out_of_range_label_is_format_error() {
        let bytes = record(&[10], |_| 0);
        let err = parse(
            &bytes,
            CifarVariant::Cifar10,
            Split::Test,
            Path::new("b.bin"),
        )
        .unwrap_err();
        assert!(matches!(err, Error::Format { .. }));
    }
}
