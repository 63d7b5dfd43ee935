//! In-memory datasets: samples along rows, targets as class indices or values.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Targets {
    Classes { labels: Vec<usize>, num_classes: usize },
    Values(Matrix),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub x: Matrix,
    pub targets: Targets,
}

/// Train/eval partition of one task.
#[derive(Debug, Clone, PartialEq)]
pub struct Split {
    pub train: Dataset,
    pub eval: Dataset,
}

impl Dataset {
    pub fn new(x: Matrix, targets: Targets) -> Result<Self> {
        let n = match &targets {
            Targets::Classes { labels, num_classes } => {
                if let Some(&bad) = labels.iter().find(|&&l| l >= *num_classes) {
                    return Err(Error::range("label", bad, format!("0..{num_classes}")));
                }
                labels.len()
            }
            Targets::Values(y) => y.rows(),
        };
        if n != x.rows() {
            return Err(Error::shape("Dataset::new", format!("{} targets", x.rows()), n));
        }
        Ok(Self { x, targets })
    }

    pub fn len(&self) -> usize {
        self.x.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn input_dim(&self) -> usize {
        self.x.cols()
    }

    /// Number of classes, or the regression target width.
    pub fn output_dim(&self) -> usize {
        match &self.targets {
            Targets::Classes { num_classes, .. } => *num_classes,
            Targets::Values(y) => y.cols(),
        }
    }

    pub fn is_classification(&self) -> bool {
        matches!(self.targets, Targets::Classes { .. })
    }

    pub fn labels(&self) -> Option<&[usize]> {
        match &self.targets {
            Targets::Classes { labels, .. } => Some(labels),
            Targets::Values(_) => None,
        }
    }

    pub fn values(&self) -> Option<&Matrix> {
        match &self.targets {
            Targets::Values(y) => Some(y),
            Targets::Classes { .. } => None,
        }
    }

    /// Rows selected by index.
    pub fn subset(&self, idx: &[usize]) -> Dataset {
        let targets = match &self.targets {
            Targets::Classes { labels, num_classes } => Targets::Classes {
                labels: idx.iter().map(|&i| labels[i]).collect(),
                num_classes: *num_classes,
            },
            Targets::Values(y) => Targets::Values(y.select_rows(idx)),
        };
        Dataset {
            x: self.x.select_rows(idx),
            targets,
        }
    }
}
