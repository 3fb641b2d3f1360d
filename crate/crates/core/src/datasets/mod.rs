//! Labeled image datasets: IDX loading, one-hot targets and the two
//! client split regimes.

mod idx;
mod split;

pub use idx::{load_idx, parse_idx_images, parse_idx_labels, read_idx_file, IDX_IMAGES_MAGIC, IDX_LABELS_MAGIC};
pub use split::{split, split_non_iid, split_quantity, SplitMode, SplitPlan};

use thiserror::Error;

use crate::bls::{BlsError, LabelMatrix};
use crate::numerics::{NumericsError, RealMatrix};

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("bad IDX magic {found:#010x}, expected {expected:#010x}")]
    BadMagic { expected: u32, found: u32 },
    #[error("IDX file truncated: need {needed} bytes, have {available}")]
    Truncated { needed: usize, available: usize },
    #[error("{images} images but {labels} labels")]
    CountMismatch { images: usize, labels: usize },
    #[error("label {label} at row {row} is out of range for {classes} classes")]
    LabelOutOfRange { row: usize, label: usize, classes: usize },
    #[error("invalid split: {0}")]
    Split(String),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error(transparent)]
    Labels(#[from] BlsError),
}

pub type Result<T, E = DatasetError> = std::result::Result<T, E>;

/// Feature rows in `[0, 1]` with one class index per row.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    pub name: String,
    features: RealMatrix,
    labels: Vec<usize>,
    classes: usize,
}

impl LabeledDataset {
    pub fn new(name: impl Into<String>, features: RealMatrix, labels: Vec<usize>, classes: usize) -> Result<Self> {
        if features.rows() != labels.len() {
            return Err(DatasetError::CountMismatch {
                images: features.rows(),
                labels: labels.len(),
            });
        }
        if let Some((row, &label)) = labels.iter().enumerate().find(|(_, l)| **l >= classes) {
            return Err(DatasetError::LabelOutOfRange { row, label, classes });
        }
        Ok(Self {
            name: name.into(),
            features,
            labels,
            classes,
        })
    }

    pub fn features(&self) -> &RealMatrix {
        &self.features
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    /// d_Y
    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.cols()
    }

    /// Rows at `indices`, in that order.
    pub fn subset(&self, name: impl Into<String>, indices: &[usize]) -> Result<Self> {
        Ok(Self {
            name: name.into(),
            features: self.features.select_rows(indices)?,
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            classes: self.classes,
        })
    }

    /// The first `n` rows (or all of them).
    pub fn head(&self, n: usize) -> Result<Self> {
        let idx: Vec<usize> = (0..n.min(self.len())).collect();
        self.subset(self.name.clone(), &idx)
    }

    /// Rows of `self` followed by rows of `other`.
    pub fn concat(&self, other: &Self) -> Result<Self> {
        if self.classes != other.classes {
            return Err(DatasetError::Split(format!(
                "cannot pool datasets with {} and {} classes",
                self.classes, other.classes
            )));
        }
        let mut labels = self.labels.clone();
        labels.extend_from_slice(&other.labels);
        Ok(Self {
            name: format!("{}+{}", self.name, other.name),
            features: self.features.vstack(&other.features)?,
            labels,
            classes: self.classes,
        })
    }

    /// Sorted list of classes that occur at least once.
    pub fn present_classes(&self) -> Vec<usize> {
        let mut seen = vec![false; self.classes];
        for &l in &self.labels {
            seen[l] = true;
        }
        (0..self.classes).filter(|&c| seen[c]).collect()
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.classes];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }

    pub fn one_hot(&self) -> Result<LabelMatrix> {
        one_hot(&self.labels, self.classes)
    }
}

pub fn one_hot(labels: &[usize], classes: usize) -> Result<LabelMatrix> {
    Ok(LabelMatrix::from_labels(labels, classes)?)
}
