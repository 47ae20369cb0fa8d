//! Training objectives and their analytic gradients.
//!
//! All losses consume probabilities (the model owns its softmax) and
//! return both the scalar value and `∂L/∂p` so the gradients can be
//! verified coordinate-by-coordinate against finite differences. Class
//! probabilities below [`PROB_CLAMP`] are clamped before the log and the
//! clamp is counted in the diagnostics, never silent.

mod ce;
mod consistency;
mod contrastive;
mod dyce;
mod supervised;

pub use ce::{ce_loss, focal_loss, wce_loss};
pub use consistency::{consistency_loss, ConfidenceGate, ConsistencyResult, CtNormalization};
pub use contrastive::{contrastive_loss, ContrastiveResult};
pub use dyce::{dyce_loss, dyce_on_subset, mine_hard_subset};
pub use supervised::{flatten_pixels, supervised_loss};

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::IGNORE_LABEL;
use crate::tensor::Tensor;

/// Probabilities below this are clamped before taking the log.
pub const PROB_CLAMP: f64 = 1e-300;

/// A batch of per-instance class distributions with integer targets.
///
/// `probs` is `[S × n_classes]`; `labels` holds class indices or
/// [`IGNORE_LABEL`] for instances excluded from every computation.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchPrediction {
    probs: Tensor,
    labels: Vec<usize>,
}

impl BatchPrediction {
    /// Validating constructor: rows must sum to 1 within 1e-9.
    pub fn new(probs: Tensor, labels: Vec<usize>) -> Result<Self> {
        let batch = Self::unnormalized(probs, labels)?;
        for (i, row) in batch.probs.data().chunks(batch.n_classes()).enumerate() {
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > 1e-9 {
                return Err(Error::InvalidShape {
                    op: "BatchPrediction::new",
                    detail: format!("row {i} sums to {sum}"),
                });
            }
        }
        Ok(batch)
    }

    /// Constructor without the row-sum check, for gradient probing where
    /// probabilities are perturbed individually. Entries must still be
    /// finite values in `[0, 1]` and labels in range.
    pub fn unnormalized(probs: Tensor, labels: Vec<usize>) -> Result<Self> {
        if probs.rank() != 2 || probs.rows() < 1 || probs.cols() < 2 {
            return Err(Error::InvalidShape {
                op: "BatchPrediction",
                detail: format!("expected [S>=1 x n_classes>=2] probs, got {:?}", probs.shape()),
            });
        }
        if probs.rows() != labels.len() {
            return Err(Error::InvalidShape {
                op: "BatchPrediction",
                detail: format!("{} prob rows vs {} labels", probs.rows(), labels.len()),
            });
        }
        if let Some(index) = probs
            .data()
            .iter()
            .position(|v| !v.is_finite() || *v < 0.0 || *v > 1.0)
        {
            return Err(Error::NonFinite {
                op: "BatchPrediction",
                index,
            });
        }
        let n_classes = probs.cols();
        for &l in &labels {
            if l != IGNORE_LABEL && l >= n_classes {
                return Err(Error::LabelOutOfRange {
                    label: l,
                    n_classes,
                });
            }
        }
        Ok(Self { probs, labels })
    }

    pub fn n_instances(&self) -> usize {
        self.labels.len()
    }

    pub fn n_classes(&self) -> usize {
        self.probs.cols()
    }

    pub fn probs(&self) -> &Tensor {
        &self.probs
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn label(&self, i: usize) -> usize {
        self.labels[i]
    }

    pub fn prob(&self, i: usize, c: usize) -> f64 {
        self.probs.at(i, c)
    }

    pub fn is_ignored(&self, i: usize) -> bool {
        self.labels[i] == IGNORE_LABEL
    }

    /// Count of non-ignored instances.
    pub fn effective_size(&self) -> usize {
        self.labels.iter().filter(|&&l| l != IGNORE_LABEL).count()
    }

    /// Per-instance cross-entropy `−log p_{i,y_i}` (`None` for ignored
    /// instances), plus the number of clamped probabilities.
    pub fn per_instance_ce(&self) -> (Vec<Option<f64>>, usize) {
        let mut clamped = 0;
        let losses = (0..self.n_instances())
            .map(|i| {
                if self.is_ignored(i) {
                    None
                } else {
                    let p = self.prob(i, self.label(i));
                    let p = if p < PROB_CLAMP {
                        clamped += 1;
                        PROB_CLAMP
                    } else {
                        p
                    };
                    Some(-crate::fmath::ln(p))
                }
            })
            .collect();
        (losses, clamped)
    }
}

/// Hard-mined subset of a batch: the instances with the largest
/// per-instance loss, plus the per-class counts inside the subset.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MinedSubset {
    /// Sorted instance indices into the batch.
    pub indices: Vec<usize>,
    /// `|H|`, the number of mined instances.
    pub f_h: usize,
    /// Per-class instance counts within the subset.
    pub f_c: Vec<usize>,
}

/// Configuration of the dynamic cross-entropy loss.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DyceConfig {
    omega: f64,
    hard_fraction: f64,
}

impl DyceConfig {
    /// Strict constructor: `omega` in the open interval `(0, 1)`,
    /// `hard_fraction` in `(0, 1]`.
    pub fn new(omega: f64, hard_fraction: f64) -> Result<Self> {
        if !(omega > 0.0 && omega < 1.0) {
            return Err(Error::InvalidConfig {
                field: "omega",
                detail: format!("must lie in (0, 1), got {omega}"),
            });
        }
        Self::ablation(omega, hard_fraction)
    }

    /// Constructor permitting the boundary values `omega ∈ [0, 1]`,
    /// used by reduction tests and ablation sweeps.
    pub fn ablation(omega: f64, hard_fraction: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&omega) || !omega.is_finite() {
            return Err(Error::InvalidConfig {
                field: "omega",
                detail: format!("must lie in [0, 1], got {omega}"),
            });
        }
        if !(hard_fraction > 0.0 && hard_fraction <= 1.0) {
            return Err(Error::InvalidConfig {
                field: "hard_fraction",
                detail: format!("must lie in (0, 1], got {hard_fraction}"),
            });
        }
        Ok(Self {
            omega,
            hard_fraction,
        })
    }

    pub fn omega(&self) -> f64 {
        self.omega
    }

    pub fn hard_fraction(&self) -> f64 {
        self.hard_fraction
    }
}

/// Which supervised objective the trainer optimizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum LossMode {
    Ce,
    DyCe,
}

/// Per-evaluation diagnostics, serializable to JSON.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LossDiagnostics {
    pub value: f64,
    /// Contribution of each class to the (negated) loss sum.
    pub per_class: Vec<f64>,
    /// Number of probabilities clamped at [`PROB_CLAMP`].
    pub clamp_count: usize,
    /// Mined-subset size, when mining was involved.
    pub f_h: Option<usize>,
    /// Mined per-class counts, when mining was involved.
    pub f_c: Option<Vec<usize>>,
}

impl LossDiagnostics {
    pub(crate) fn plain(value: f64, per_class: Vec<f64>, clamp_count: usize) -> Self {
        Self {
            value,
            per_class,
            clamp_count,
            f_h: None,
            f_c: None,
        }
    }
}

/// A loss value together with `∂L/∂p_{i,c}`.
#[derive(Debug, Clone, PartialEq)]
pub struct LossResult {
    pub value: f64,
    /// `[S × n_classes]`, exactly zero wherever the loss does not touch
    /// the probability (non-target classes; unmined instances).
    pub grad_probs: Tensor,
    pub diagnostics: LossDiagnostics,
}

pub(crate) fn clamped(p: f64, count: &mut usize) -> f64 {
    if p < PROB_CLAMP {
        *count += 1;
        PROB_CLAMP
    } else {
        p
    }
}

pub(crate) fn zero_per_class(n_classes: usize) -> Vec<f64> {
    vec![0.0; n_classes]
}
