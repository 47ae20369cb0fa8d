//! Confidence-thresholded consistency loss between student predictions
//! and hard teacher pseudo-labels.
//!
//! A pixel contributes only when the gating confidence reaches `Th`; the
//! pseudo-label is always the teacher argmax and the teacher is treated
//! as a constant, so gradients flow to the student alone. The mask keeps
//! noisy pseudo-labels out of the objective.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::fmath;
use crate::grid::ProbMap;
use crate::tensor::Tensor;

use super::clamped;

/// Which branch's max probability is compared against the threshold.
/// `Teacher` gates on the pseudo-label source (the default); `Student`
/// gates on the prediction being trained.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConfidenceGate {
    Teacher,
    Student,
}

/// Denominator of the masked cross-entropy: the count of pixels that
/// passed the gate (default, keeps the scale stable as `Th` varies) or
/// the full unlabeled pixel count.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CtNormalization {
    MaskedMean,
    AllPixels,
}

/// Value plus per-image student gradients and mask statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct ConsistencyResult {
    pub value: f64,
    /// One `[h·w × n_classes]` gradient tensor per batch image; exactly
    /// zero at every pixel that failed the gate.
    pub grads: Vec<Tensor>,
    /// Pixels that passed the confidence gate.
    pub active_pixels: usize,
    /// Total pixels considered.
    pub total_pixels: usize,
    pub clamp_count: usize,
}

/// Masked mean of per-pixel `CE(student_p, argmax(teacher_p))`.
pub fn consistency_loss(
    student: &[ProbMap],
    teacher: &[ProbMap],
    th: f64,
    gate: ConfidenceGate,
    normalization: CtNormalization,
) -> Result<ConsistencyResult> {
    if student.len() != teacher.len() {
        return Err(Error::InvalidShape {
            op: "consistency_loss",
            detail: alloc::format!(
                "{} student maps vs {} teacher maps",
                student.len(),
                teacher.len()
            ),
        });
    }
    if !(0.0..=1.0).contains(&th) {
        return Err(Error::InvalidConfig {
            field: "th",
            detail: alloc::format!("confidence threshold must lie in [0, 1], got {th}"),
        });
    }

    // First pass: the mask, so the masked-mean denominator is known
    // before any gradient is written.
    let mut total_pixels = 0;
    let mut active = Vec::with_capacity(student.len());
    for (s, t) in student.iter().zip(teacher) {
        if s.n_pixels() != t.n_pixels() || s.n_classes() != t.n_classes() {
            return Err(Error::ShapeMismatch {
                op: "consistency_loss",
                left: s.probs().shape().to_vec(),
                right: t.probs().shape().to_vec(),
            });
        }
        total_pixels += s.n_pixels();
        let mask: Vec<bool> = (0..s.n_pixels())
            .map(|p| {
                let conf = match gate {
                    ConfidenceGate::Teacher => t.argmax(p).1,
                    ConfidenceGate::Student => s.argmax(p).1,
                };
                conf >= th
            })
            .collect();
        active.push(mask);
    }
    let active_pixels: usize = active.iter().map(|m| m.iter().filter(|&&b| b).count()).sum();

    let denom = match normalization {
        CtNormalization::MaskedMean => active_pixels,
        CtNormalization::AllPixels => total_pixels,
    };
    let mut grads: Vec<Tensor> = student
        .iter()
        .map(|s| Tensor::zeros(alloc::vec![s.n_pixels(), s.n_classes()]))
        .collect();
    if active_pixels == 0 {
        return Ok(ConsistencyResult {
            value: 0.0,
            grads,
            active_pixels,
            total_pixels,
            clamp_count: 0,
        });
    }
    let inv = 1.0 / denom as f64;

    let mut value = 0.0;
    let mut clamp_count = 0;
    for (b, (s, t)) in student.iter().zip(teacher).enumerate() {
        for (p, _) in active[b].iter().enumerate().filter(|(_, open)| **open) {
            let (pseudo, _) = t.argmax(p);
            let prob = clamped(s.probs().at(p, pseudo), &mut clamp_count);
            value -= inv * fmath::ln(prob);
            let g = grads[b].at(p, pseudo) - inv / prob;
            grads[b].set(p, pseudo, g);
        }
    }

    Ok(ConsistencyResult {
        value,
        grads,
        active_pixels,
        total_pixels,
        clamp_count,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn prob_map(rows: Vec<f64>, pixels: usize, classes: usize) -> ProbMap {
        ProbMap::new(1, pixels, Tensor::matrix(pixels, classes, rows).unwrap()).unwrap()
    }

    #[test]
    fn fully_masked_batch_is_zero_everywhere() {
        let s = prob_map(vec![0.6, 0.4, 0.5, 0.5], 2, 2);
        let t = prob_map(vec![0.7, 0.3, 0.6, 0.4], 2, 2);
        let r = consistency_loss(
            &[s],
            &[t],
            0.95,
            ConfidenceGate::Teacher,
            CtNormalization::MaskedMean,
        )
        .unwrap();
        assert_eq!(r.value, 0.0);
        assert_eq!(r.active_pixels, 0);
        assert!(r.grads[0].data().iter().all(|&g| g == 0.0));
    }

    #[test]
    fn zero_threshold_with_agreeing_one_hot_maps() {
        let m = prob_map(vec![1.0, 0.0, 0.0, 1.0], 2, 2);
        let teacher = m.clone();
        let r = consistency_loss(
            core::slice::from_ref(&m),
            core::slice::from_ref(&teacher),
            0.0,
            ConfidenceGate::Teacher,
            CtNormalization::MaskedMean,
        )
        .unwrap();
        assert_eq!(r.value, 0.0);
        assert_eq!(r.active_pixels, 2);
    }

    #[test]
    fn single_gated_pixel_hand_value() {
        // pixel 0 passes (teacher conf 0.96), pixel 1 fails; student puts
        // 0.5 on the pseudo-label → value = ln 2 under the masked mean.
        let s = prob_map(vec![0.5, 0.5, 0.9, 0.1], 2, 2);
        let t = prob_map(vec![0.96, 0.04, 0.5, 0.5], 2, 2);
        let r = consistency_loss(
            &[s],
            &[t],
            0.95,
            ConfidenceGate::Teacher,
            CtNormalization::MaskedMean,
        )
        .unwrap();
        assert!((r.value - fmath::ln(2.0)).abs() < 1e-12);
        assert_eq!(r.active_pixels, 1);
        // gradient: −1/p at the pseudo-label of the gated pixel only
        assert!((r.grads[0].at(0, 0) + 2.0).abs() < 1e-12);
        assert_eq!(r.grads[0].at(0, 1), 0.0);
        assert_eq!(r.grads[0].row(1), &[0.0, 0.0]);

        // with the all-pixels denominator the same instance halves
        let s2 = prob_map(vec![0.5, 0.5, 0.9, 0.1], 2, 2);
        let t2 = prob_map(vec![0.96, 0.04, 0.5, 0.5], 2, 2);
        let r2 = consistency_loss(
            &[s2],
            &[t2],
            0.95,
            ConfidenceGate::Teacher,
            CtNormalization::AllPixels,
        )
        .unwrap();
        assert!((r2.value - fmath::ln(2.0) / 2.0).abs() < 1e-12);
    }

    #[test]
    fn student_gate_uses_student_confidence() {
        // teacher is unsure everywhere; student is confident on pixel 0
        let s = prob_map(vec![0.97, 0.03, 0.6, 0.4], 2, 2);
        let t = prob_map(vec![0.55, 0.45, 0.5, 0.5], 2, 2);
        let teacher_gated = consistency_loss(
            core::slice::from_ref(&s),
            core::slice::from_ref(&t),
            0.9,
            ConfidenceGate::Teacher,
            CtNormalization::MaskedMean,
        )
        .unwrap();
        assert_eq!(teacher_gated.active_pixels, 0);
        let student_gated = consistency_loss(
            &[s],
            &[t],
            0.9,
            ConfidenceGate::Student,
            CtNormalization::MaskedMean,
        )
        .unwrap();
        assert_eq!(student_gated.active_pixels, 1);
    }

    #[test]
    fn shape_mismatch_is_an_error() {
        let s = prob_map(vec![0.5, 0.5], 1, 2);
        let t = prob_map(vec![0.4, 0.3, 0.3], 1, 3);
        assert!(consistency_loss(
            &[s],
            &[t],
            0.5,
            ConfidenceGate::Teacher,
            CtNormalization::MaskedMean
        )
        .is_err());
    }
}
