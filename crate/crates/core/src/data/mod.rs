//! Image classification datasets and forget/remain partitions.

mod cifar;
mod partition;
mod synthetic;

pub use cifar::{encode_cifar, load_cifar, read_cifar_file, CifarVariant};
pub use partition::{split_forget, ForgetMode, ForgetPartition};
pub use synthetic::{make_synthetic, SyntheticSpec};

use serde::{Deserialize, Serialize};

use crate::engine::Tensor;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

/// Images in `[0, 1]`, stored `N x C x H x W` row-major, with labels in `[0, K)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    images: Vec<f32>,
    labels: Vec<usize>,
    classes: usize,
    image_shape: [usize; 3],
    split: Split,
    // CIFAR-100 coarse labels, kept only so files re-encode byte-for-byte
    coarse_labels: Option<Vec<u8>>,
}

impl Dataset {
    pub fn new(
        images: Vec<f32>,
        labels: Vec<usize>,
        classes: usize,
        image_shape: [usize; 3],
        split: Split,
    ) -> Result<Self> {
        let per = image_shape.iter().product::<usize>();
        if per == 0 {
            return Err(Error::Dimension(format!(
                "empty image shape {image_shape:?}"
            )));
        }
        if images.len() != per * labels.len() {
            return Err(Error::Dimension(format!(
                "{} image values for {} labels of shape {image_shape:?}",
                images.len(),
                labels.len()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&y| y >= classes) {
            return Err(Error::Input(format!(
                "label {bad} not below class count {classes}"
            )));
        }
        if let Some(bad) = images.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::Input(format!("pixel value {bad} outside [0, 1]")));
        }
        Ok(Self {
            images,
            labels,
            classes,
            image_shape,
            split,
            coarse_labels: None,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn image_shape(&self) -> [usize; 3] {
        self.image_shape
    }

    pub fn image_len(&self) -> usize {
        self.image_shape.iter().product()
    }

    pub fn split(&self) -> Split {
        self.split
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn label(&self, i: usize) -> usize {
        self.labels[i]
    }

    pub fn image(&self, i: usize) -> &[f32] {
        let per = self.image_len();
        &self.images[i * per..(i + 1) * per]
    }

    pub fn image_mut(&mut self, i: usize) -> &mut [f32] {
        let per = self.image_len();
        &mut self.images[i * per..(i + 1) * per]
    }

    pub fn images(&self) -> &[f32] {
        &self.images
    }

    pub fn coarse_labels(&self) -> Option<&[u8]> {
        self.coarse_labels.as_deref()
    }

    /// New dataset holding the listed samples, in the listed order.
    pub fn subset(&self, indices: &[usize]) -> Result<Dataset> {
        let per = self.image_len();
        let mut images = Vec::with_capacity(indices.len() * per);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            if i >= self.len() {
                return Err(Error::Input(format!(
                    "index {i} out of range for {} samples",
                    self.len()
                )));
            }
            images.extend_from_slice(self.image(i));
            labels.push(self.labels[i]);
        }
        Ok(Dataset {
            images,
            labels,
            classes: self.classes,
            image_shape: self.image_shape,
            split: self.split,
            coarse_labels: self
                .coarse_labels
                .as_ref()
                .map(|c| indices.iter().map(|&i| c[i]).collect()),
        })
    }

    /// Samples stacked into an `[n, C, H, W]` tensor.
    pub fn batch(&self, indices: &[usize]) -> Result<Tensor<f32>> {
        let per = self.image_len();
        let mut data = Vec::with_capacity(indices.len() * per);
        for &i in indices {
            data.extend_from_slice(self.image(i));
        }
        let [c, h, w] = self.image_shape;
        Tensor::new(vec![indices.len(), c, h, w], data)
    }
}
