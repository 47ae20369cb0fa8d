//! Supervised segmentation loss: every pixel is one instance.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::grid::{LabelMap, ProbMap};
use crate::tensor::Tensor;

use super::{ce_loss, dyce_loss, BatchPrediction, DyceConfig, LossMode, LossResult};

/// Flatten a batch of probability maps and label maps into one
/// [`BatchPrediction`] (pixels become instances, ignored pixels keep
/// their sentinel) and dispatch to CE or DyCE.
///
/// The returned `grad_probs` is `[Σ h·w × n_classes]` with rows in batch
/// order, so per-image slices line up with the inputs.
pub fn supervised_loss(
    student: &[ProbMap],
    labels: &[LabelMap],
    mode: LossMode,
    cfg: Option<&DyceConfig>,
) -> Result<LossResult> {
    let batch = flatten_pixels(student, labels)?;
    match mode {
        LossMode::Ce => ce_loss(&batch),
        LossMode::DyCe => {
            let cfg = cfg.ok_or(Error::InvalidConfig {
                field: "dyce_cfg",
                detail: alloc::string::String::from("required when mode = DyCE"),
            })?;
            dyce_loss(&batch, cfg)
        }
    }
}

/// Pixel-flattening shared with the trainer.
pub fn flatten_pixels(student: &[ProbMap], labels: &[LabelMap]) -> Result<BatchPrediction> {
    if student.is_empty() || student.len() != labels.len() {
        return Err(Error::InvalidShape {
            op: "supervised_loss",
            detail: alloc::format!(
                "{} probability maps vs {} label maps",
                student.len(),
                labels.len()
            ),
        });
    }
    let n_classes = student[0].n_classes();
    let mut probs: Vec<f64> = Vec::new();
    let mut flat_labels: Vec<usize> = Vec::new();
    for (pm, lm) in student.iter().zip(labels) {
        if pm.n_pixels() != lm.n_pixels() || pm.n_classes() != n_classes {
            return Err(Error::ShapeMismatch {
                op: "supervised_loss",
                left: pm.probs().shape().to_vec(),
                right: alloc::vec![lm.height(), lm.width()],
            });
        }
        probs.extend_from_slice(pm.probs().data());
        flat_labels.extend_from_slice(lm.labels());
    }
    let total = flat_labels.len();
    BatchPrediction::unnormalized(Tensor::matrix(total, n_classes, probs)?, flat_labels)
}
