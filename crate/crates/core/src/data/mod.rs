//! Datasets: seeded synthetic grating images, the CIFAR-10 binary format,
//! and shuffled mini-batching.

mod batch;
mod cifar;
mod synthetic;

pub use batch::{batches, epoch_order, BatchStream};
pub use cifar::{encode_cifar_records, load_cifar10, parse_cifar_records, CIFAR_RECORD_BYTES};
pub use synthetic::{generate_synthetic, SyntheticSpec};

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::objectives::Batch;
use crate::tensor::Tensor;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("missing data file {0}")]
    FileMissing(PathBuf),
    #[error("{path}: truncated record at byte offset {offset} (file length {len} is not a multiple of 3073)")]
    TruncatedRecord { path: PathBuf, offset: usize, len: usize },
    #[error("{path}: record {record} has label {label}, expected 0..=9")]
    LabelOutOfRange { path: PathBuf, record: usize, label: u8 },
    #[error("invalid dataset: {0}")]
    Invalid(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Test,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Provenance {
    Synthetic { spec: SyntheticSpec },
    Cifar10 { files: Vec<PathBuf> },
}

/// Pixel storage. Byte images are scaled by `1/255` on read.
#[derive(Debug, Clone, PartialEq)]
enum Pixels {
    Bytes(Vec<u8>),
    Real(Vec<f64>),
}

/// Labeled images `[N, C, H, W]` with values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub split: Split,
    pub provenance: Provenance,
    pub num_classes: usize,
    image_shape: [usize; 3],
    pixels: Pixels,
    labels: Vec<usize>,
}

impl Dataset {
    fn new(
        split: Split,
        provenance: Provenance,
        num_classes: usize,
        image_shape: [usize; 3],
        pixels: Pixels,
        labels: Vec<usize>,
    ) -> Result<Self, DataError> {
        let per = image_shape.iter().product::<usize>();
        let len = match &pixels {
            Pixels::Bytes(b) => b.len(),
            Pixels::Real(r) => r.len(),
        };
        if labels.is_empty() || len != per * labels.len() {
            return Err(DataError::Invalid(format!("{} labels for {len} pixel values of {image_shape:?}", labels.len())));
        }
        if let Some(l) = labels.iter().find(|&&l| l >= num_classes) {
            return Err(DataError::Invalid(format!("label {l} outside {num_classes} classes")));
        }
        Ok(Dataset { split, provenance, num_classes, image_shape, pixels, labels })
    }

    fn from_bytes(
        split: Split,
        provenance: Provenance,
        num_classes: usize,
        image_shape: [usize; 3],
        pixels: Vec<u8>,
        labels: Vec<usize>,
    ) -> Result<Self, DataError> {
        Self::new(split, provenance, num_classes, image_shape, Pixels::Bytes(pixels), labels)
    }

    /// Real-valued dataset; values must lie in `[0, 1]`.
    pub fn from_real(
        split: Split,
        provenance: Provenance,
        num_classes: usize,
        image_shape: [usize; 3],
        pixels: Vec<f64>,
        labels: Vec<usize>,
    ) -> Result<Self, DataError> {
        if pixels.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(DataError::Invalid("pixel values must lie in [0, 1]".into()));
        }
        Self::new(split, provenance, num_classes, image_shape, Pixels::Real(pixels), labels)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn image_shape(&self) -> [usize; 3] {
        self.image_shape
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    /// Replaces the labels, keeping images.
    pub fn with_labels(mut self, labels: Vec<usize>) -> Result<Self, DataError> {
        if labels.len() != self.labels.len() || labels.iter().any(|&l| l >= self.num_classes) {
            return Err(DataError::Invalid("replacement labels do not fit the dataset".into()));
        }
        self.labels = labels;
        Ok(self)
    }

    fn per_image(&self) -> usize {
        self.image_shape.iter().product()
    }

    /// Value of pixel `offset` (flat `[N, C, H, W]` index).
    pub fn pixel(&self, offset: usize) -> f64 {
        match &self.pixels {
            Pixels::Bytes(b) => f64::from(b[offset]) / 255.0,
            Pixels::Real(r) => r[offset],
        }
    }

    /// Raw bytes when the dataset was loaded from a byte format.
    pub fn raw_bytes(&self) -> Option<&[u8]> {
        match &self.pixels {
            Pixels::Bytes(b) => Some(b),
            Pixels::Real(_) => None,
        }
    }

    /// Batch of the given sample indices, in order.
    pub fn gather(&self, indices: &[usize]) -> Batch {
        let per = self.per_image();
        let mut data = Vec::with_capacity(per * indices.len());
        for &i in indices {
            let range = i * per..(i + 1) * per;
            match &self.pixels {
                Pixels::Bytes(b) => data.extend(b[range].iter().map(|&v| f64::from(v) / 255.0)),
                Pixels::Real(r) => data.extend_from_slice(&r[range]),
            }
        }
        let [c, h, w] = self.image_shape;
        Batch {
            images: Tensor::new(vec![indices.len(), c, h, w], data).expect("indices are in range"),
            labels: Some(indices.iter().map(|&i| self.labels[i]).collect()),
        }
    }

    /// All samples in index order, split into chunks of at most `chunk`.
    pub fn sequential(&self, chunk: usize) -> impl Iterator<Item = Batch> + '_ {
        let n = self.len();
        (0..n).step_by(chunk.max(1)).map(move |s| {
            let idx: Vec<usize> = (s..(s + chunk).min(n)).collect();
            self.gather(&idx)
        })
    }
}
