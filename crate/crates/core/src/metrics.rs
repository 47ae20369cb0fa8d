//! Segmentation evaluation: confusion matrix, per-class IoU/mIoU, and
//! per-class Dice. Counts are accumulated as integers before any
//! division, so results do not drift with batch order, and partial
//! matrices merge associatively.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::grid::{LabelMap, IGNORE_LABEL};

/// `n×n` counts, rows = ground truth, columns = prediction. Pixels with
/// the ignore sentinel in the ground truth are skipped.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionMatrix {
    n_classes: usize,
    counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn new(n_classes: usize) -> Self {
        Self {
            n_classes,
            counts: vec![0; n_classes * n_classes],
        }
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn count(&self, gt: usize, pred: usize) -> u64 {
        self.counts[gt * self.n_classes + pred]
    }

    pub fn record(&mut self, gt: usize, pred: usize) {
        self.counts[gt * self.n_classes + pred] += 1;
    }

    /// Total evaluated pixels.
    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn true_positives(&self, c: usize) -> u64 {
        self.count(c, c)
    }

    pub fn false_positives(&self, c: usize) -> u64 {
        (0..self.n_classes)
            .filter(|&g| g != c)
            .map(|g| self.count(g, c))
            .sum()
    }

    pub fn false_negatives(&self, c: usize) -> u64 {
        (0..self.n_classes)
            .filter(|&p| p != c)
            .map(|p| self.count(c, p))
            .sum()
    }

    /// Ground-truth pixel count of a class.
    pub fn gt_pixels(&self, c: usize) -> u64 {
        (0..self.n_classes).map(|p| self.count(c, p)).sum()
    }

    /// Associative merge of partial matrices.
    pub fn merge(&mut self, other: &ConfusionMatrix) -> Result<()> {
        if self.n_classes != other.n_classes {
            return Err(Error::ShapeMismatch {
                op: "ConfusionMatrix::merge",
                left: vec![self.n_classes, self.n_classes],
                right: vec![other.n_classes, other.n_classes],
            });
        }
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        Ok(())
    }
}

/// Accumulate a confusion matrix over prediction/ground-truth map pairs.
pub fn confusion(pred: &[LabelMap], gt: &[LabelMap], n_classes: usize) -> Result<ConfusionMatrix> {
    if pred.len() != gt.len() {
        return Err(Error::InvalidShape {
            op: "confusion",
            detail: alloc::format!("{} predictions vs {} ground truths", pred.len(), gt.len()),
        });
    }
    let mut cm = ConfusionMatrix::new(n_classes);
    for (p_map, g_map) in pred.iter().zip(gt) {
        if p_map.n_pixels() != g_map.n_pixels() {
            return Err(Error::ShapeMismatch {
                op: "confusion",
                left: vec![p_map.height(), p_map.width()],
                right: vec![g_map.height(), g_map.width()],
            });
        }
        for (&p, &g) in p_map.labels().iter().zip(g_map.labels()) {
            if g == IGNORE_LABEL {
                continue;
            }
            if g >= n_classes {
                return Err(Error::LabelOutOfRange {
                    label: g,
                    n_classes,
                });
            }
            if p >= n_classes {
                return Err(Error::LabelOutOfRange {
                    label: p,
                    n_classes,
                });
            }
            cm.record(g, p);
        }
    }
    Ok(cm)
}

/// Per-class scores with absent classes excluded from the mean.
///
/// A class is absent when it appears in neither the ground truth nor the
/// predictions (zero denominator); its entry is `None` and it does not
/// drag the mean to zero.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassScores {
    pub per_class: Vec<Option<f64>>,
    pub mean: f64,
}

fn per_class_scores(
    cm: &ConfusionMatrix,
    score: impl Fn(u64, u64, u64) -> f64,
) -> Result<ClassScores> {
    let mut per_class = Vec::with_capacity(cm.n_classes());
    let mut sum = 0.0;
    let mut present = 0usize;
    for c in 0..cm.n_classes() {
        let (tp, fp, fn_) = (
            cm.true_positives(c),
            cm.false_positives(c),
            cm.false_negatives(c),
        );
        if tp + fp + fn_ == 0 {
            per_class.push(None);
        } else {
            let s = score(tp, fp, fn_);
            per_class.push(Some(s));
            sum += s;
            present += 1;
        }
    }
    if present == 0 {
        return Err(Error::AllClassesAbsent);
    }
    Ok(ClassScores {
        per_class,
        mean: sum / present as f64,
    })
}

/// Intersection over union, `TP/(TP+FP+FN)` per class.
pub fn miou(cm: &ConfusionMatrix) -> Result<ClassScores> {
    per_class_scores(cm, |tp, fp, fn_| tp as f64 / (tp + fp + fn_) as f64)
}

/// Dice coefficient, `2TP/(2TP+FP+FN)` per class.
pub fn dsc(cm: &ConfusionMatrix) -> Result<ClassScores> {
    per_class_scores(cm, |tp, fp, fn_| {
        2.0 * tp as f64 / (2 * tp + fp + fn_) as f64
    })
}
