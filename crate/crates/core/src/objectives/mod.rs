//! Training objectives and evaluation heads: supervised cross-entropy,
//! the NT-Xent contrastive loss with its two-view augmentation, and a
//! cosine KNN evaluator for learned representations.

mod augment;
mod cross_entropy;
mod knn;
mod ntxent;

pub use augment::{augment_images, augment_pair, AugmentPolicy, ViewPair};
pub use cross_entropy::{cross_entropy, cross_entropy_value, CrossEntropy};
pub use knn::{knn_evaluate, knn_predict};
pub use ntxent::{ntxent, ntxent_value, NtXent};

use thiserror::Error;

use crate::tensor::{Tensor, TensorError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ObjectiveError {
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },
    #[error("temperature must be positive, got {0}")]
    TemperatureNonPositive(f64),
    #[error("row {row} has norm {norm}, expected 1")]
    NotNormalized { row: usize, norm: f64 },
    #[error("k = {k} exceeds the {available} training embeddings")]
    KTooLarge { k: usize, available: usize },
    #[error("{0}")]
    Shape(String),
}

pub type Result<T> = std::result::Result<T, ObjectiveError>;

/// A mini-batch of images `[N, C, H, W]` with values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub images: Tensor,
    pub labels: Option<Vec<usize>>,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.images.shape()[0]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

fn rows(t: &Tensor, op: &str) -> Result<(usize, usize)> {
    match *t.shape() {
        [n, d] => Ok((n, d)),
        _ => Err(ObjectiveError::Shape(format!("{op} expects a [N, D] tensor, got {:?}", t.shape()))),
    }
}
