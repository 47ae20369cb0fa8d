//! Per-pixel grid carriers shared by the losses, model, data generator,
//! and metrics: integer label maps and per-pixel class distributions.

use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Reserved label value marking pixels excluded from loss and metrics.
pub const IGNORE_LABEL: usize = 255;

/// Per-pixel integer class indices over an `h×w` grid.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelMap {
    height: usize,
    width: usize,
    labels: Vec<usize>,
}

impl LabelMap {
    pub fn new(height: usize, width: usize, labels: Vec<usize>) -> Result<Self> {
        if height == 0 || width == 0 || labels.len() != height * width {
            return Err(Error::InvalidShape {
                op: "LabelMap::new",
                detail: format!(
                    "grid {height}x{width} needs {} labels, got {}",
                    height * width,
                    labels.len()
                ),
            });
        }
        Ok(Self {
            height,
            width,
            labels,
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn n_pixels(&self) -> usize {
        self.labels.len()
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    /// Sorted list of distinct non-ignored classes present in the map.
    pub fn present_classes(&self) -> Vec<usize> {
        let mut present: Vec<usize> = Vec::new();
        for &l in &self.labels {
            if l != IGNORE_LABEL && !present.contains(&l) {
                present.push(l);
            }
        }
        present.sort_unstable();
        present
    }
}

/// Per-pixel class probability distribution over an `h×w` grid,
/// stored flat as `[h·w × n_classes]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbMap {
    height: usize,
    width: usize,
    probs: Tensor,
}

impl ProbMap {
    /// Validating constructor: rows must be distributions (entries in
    /// `[0, 1]`, each row summing to 1 within 1e-9).
    pub fn new(height: usize, width: usize, probs: Tensor) -> Result<Self> {
        let pm = Self::unnormalized(height, width, probs)?;
        for (p, row) in pm.probs.data().chunks(pm.n_classes()).enumerate() {
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > 1e-9 {
                return Err(Error::InvalidShape {
                    op: "ProbMap::new",
                    detail: format!("pixel {p} distribution sums to {sum}"),
                });
            }
        }
        Ok(pm)
    }

    /// Constructor that skips the row-sum check. Intended for gradient
    /// probing, where individual probabilities are perturbed off the
    /// simplex; entries must still be finite and in `[0, 1]`.
    pub fn unnormalized(height: usize, width: usize, probs: Tensor) -> Result<Self> {
        if probs.rank() != 2 || probs.rows() != height * width || probs.cols() < 2 {
            return Err(Error::InvalidShape {
                op: "ProbMap",
                detail: format!(
                    "expected [{}x n_classes>=2] probabilities, got {:?}",
                    height * width,
                    probs.shape()
                ),
            });
        }
        if let Some(index) = probs
            .data()
            .iter()
            .position(|v| !v.is_finite() || *v < 0.0 || *v > 1.0)
        {
            return Err(Error::NonFinite {
                op: "ProbMap",
                index,
            });
        }
        Ok(Self {
            height,
            width,
            probs,
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn n_pixels(&self) -> usize {
        self.height * self.width
    }

    pub fn n_classes(&self) -> usize {
        self.probs.cols()
    }

    /// Flat `[h·w × n_classes]` probability tensor.
    pub fn probs(&self) -> &Tensor {
        &self.probs
    }

    pub fn pixel(&self, p: usize) -> &[f64] {
        self.probs.row(p)
    }

    /// Argmax class and its probability for pixel `p`.
    pub fn argmax(&self, p: usize) -> (usize, f64) {
        let row = self.probs.row(p);
        let mut best = 0;
        for (c, &v) in row.iter().enumerate() {
            if v > row[best] {
                best = c;
            }
        }
        (best, row[best])
    }

    /// Hard prediction map (per-pixel argmax).
    pub fn to_label_map(&self) -> LabelMap {
        let labels = (0..self.n_pixels()).map(|p| self.argmax(p).0).collect();
        LabelMap {
            height: self.height,
            width: self.width,
            labels,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn probmap_validates_row_sums() {
        let ok = Tensor::matrix(2, 2, vec![0.25, 0.75, 1.0, 0.0]).unwrap();
        assert!(ProbMap::new(1, 2, ok.clone()).is_ok());
        let bad = Tensor::matrix(2, 2, vec![0.25, 0.70, 1.0, 0.0]).unwrap();
        assert!(ProbMap::new(1, 2, bad.clone()).is_err());
        // the probing constructor accepts the same rows
        assert!(ProbMap::unnormalized(1, 2, bad).is_ok());
    }

    #[test]
    fn argmax_and_hard_labels() {
        let probs = Tensor::matrix(2, 3, vec![0.1, 0.7, 0.2, 0.5, 0.2, 0.3]).unwrap();
        let pm = ProbMap::new(1, 2, probs).unwrap();
        assert_eq!(pm.argmax(0), (1, 0.7));
        assert_eq!(pm.to_label_map().labels(), &[1, 0]);
    }

    #[test]
    fn present_classes_skips_ignored() {
        let lm = LabelMap::new(2, 2, vec![3, IGNORE_LABEL, 0, 3]).unwrap();
        assert_eq!(lm.present_classes(), vec![0, 3]);
    }
}
