//! Dynamic cross-entropy: cross-entropy restricted to the hardest
//! instances of the batch, with per-class weights `1/f_c^{1−ω}` set by
//! the mined class counts and a volume weight `1/f_H^ω`.
//!
//! The gradient implemented here is the derivative of the loss,
//! `−(1/f_H^ω)(1/f_c^{1−ω})(1/p_{i,c})` on mined target entries. Since
//! `S ≥ f_H ≥ f_c`, the weight factor `1/(f_H^ω f_c^{1−ω})` is at least
//! the plain-CE factor `1/S`, so mined instances never receive weaker
//! gradients than under cross-entropy.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::fmath;
use crate::tensor::Tensor;

use super::{clamped, zero_per_class, BatchPrediction, DyceConfig, LossDiagnostics, LossResult, MinedSubset};

/// Select the `⌈hard_fraction·S⌉` non-ignored instances with the largest
/// per-instance cross-entropy. Ties are broken toward the lower instance
/// index; the returned indices are sorted ascending.
pub fn mine_hard_subset(batch: &BatchPrediction, hard_fraction: f64) -> Result<MinedSubset> {
    if !(hard_fraction > 0.0 && hard_fraction <= 1.0) {
        return Err(Error::InvalidConfig {
            field: "hard_fraction",
            detail: alloc::format!("must lie in (0, 1], got {hard_fraction}"),
        });
    }
    let (per_instance, _) = batch.per_instance_ce();
    let mut candidates: Vec<(usize, f64)> = per_instance
        .iter()
        .enumerate()
        .filter_map(|(i, l)| l.map(|v| (i, v)))
        .collect();
    if candidates.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let s_eff = candidates.len();
    // ⌈h·S⌉ with a floor of one instance.
    let take = ((fmath::ceil(hard_fraction * s_eff as f64) as usize).max(1)).min(s_eff);
    // Largest loss first; equal losses keep the lower index first.
    candidates.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    let mut indices: Vec<usize> = candidates[..take].iter().map(|(i, _)| *i).collect();
    indices.sort_unstable();

    let mut f_c = vec![0usize; batch.n_classes()];
    for &i in &indices {
        f_c[batch.label(i)] += 1;
    }
    Ok(MinedSubset {
        f_h: indices.len(),
        indices,
        f_c,
    })
}

/// Dynamic cross-entropy over the mined hard subset.
///
/// `value = −(1/f_H^ω) Σ_c (1/f_c^{1−ω}) Σ_{i∈H, y_i=c} log p_{i,c}`.
/// With `ω = 1` and `hard_fraction = 1` this reduces exactly to
/// [`super::ce_loss`].
pub fn dyce_loss(batch: &BatchPrediction, cfg: &DyceConfig) -> Result<LossResult> {
    let subset = mine_hard_subset(batch, cfg.hard_fraction())?;
    dyce_on_subset(batch, cfg, &subset)
}

/// DyCE evaluated on an already-mined subset (shared by the trainer,
/// which reports mining statistics alongside the loss).
pub fn dyce_on_subset(
    batch: &BatchPrediction,
    cfg: &DyceConfig,
    subset: &MinedSubset,
) -> Result<LossResult> {
    let omega = cfg.omega();
    let volume_weight = 1.0 / fmath::powf(subset.f_h as f64, omega);
    // Class weights only exist for classes present in the subset, so the
    // 1/f_c^{1−ω} factor is never evaluated at f_c = 0.
    let class_weight: Vec<f64> = subset
        .f_c
        .iter()
        .map(|&f| {
            if f == 0 {
                0.0
            } else {
                1.0 / fmath::powf(f as f64, 1.0 - omega)
            }
        })
        .collect();

    let mut grad = Tensor::zeros(vec![batch.n_instances(), batch.n_classes()]);
    let mut per_class = zero_per_class(batch.n_classes());
    let mut clamp_count = 0;
    let mut value = 0.0;
    for &i in &subset.indices {
        let y = batch.label(i);
        let w = volume_weight * class_weight[y];
        let p = clamped(batch.prob(i, y), &mut clamp_count);
        let term = -w * fmath::ln(p);
        value += term;
        per_class[y] += term;
        grad.set(i, y, grad.at(i, y) - w / p);
    }
    Ok(LossResult {
        value,
        grad_probs: grad,
        diagnostics: LossDiagnostics {
            value,
            per_class,
            clamp_count,
            f_h: Some(subset.f_h),
            f_c: Some(subset.f_c.clone()),
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::losses::ce_loss;

    fn batch(probs: Vec<f64>, s: usize, n_c: usize, labels: Vec<usize>) -> BatchPrediction {
        BatchPrediction::new(Tensor::matrix(s, n_c, probs).unwrap(), labels).unwrap()
    }

    /// Two-class rows with a chosen target probability.
    fn batch_from_targets(targets: &[f64], labels: &[usize]) -> BatchPrediction {
        let mut probs = Vec::new();
        for (&p, &y) in targets.iter().zip(labels) {
            if y == 0 {
                probs.extend_from_slice(&[p, 1.0 - p]);
            } else {
                probs.extend_from_slice(&[1.0 - p, p]);
            }
        }
        batch(probs, targets.len(), 2, labels.to_vec())
    }

    #[test]
    fn full_fraction_mines_everything() {
        let b = batch_from_targets(&[0.9, 0.4, 0.3], &[0, 1, 0]);
        let m = mine_hard_subset(&b, 1.0).unwrap();
        assert_eq!(m.indices, vec![0, 1, 2]);
        assert_eq!(m.f_h, 3);
        assert_eq!(m.f_c, vec![2, 1]);
    }

    #[test]
    fn mining_matches_sort_oracle() {
        // per-instance losses [0.1, 0.9, 1.2, 0.05] via p = exp(−loss)
        let targets: Vec<f64> = [0.1f64, 0.9, 1.2, 0.05]
            .iter()
            .map(|l| fmath::exp(-l))
            .collect();
        let b = batch_from_targets(&targets, &[0, 0, 1, 1]);
        let m = mine_hard_subset(&b, 0.5).unwrap();
        assert_eq!(m.indices, vec![1, 2]);
    }

    #[test]
    fn tie_break_prefers_lower_index() {
        // losses: idx5 = 3.0 is hardest; idx3 and idx7 tie at 2.0; k = 2.
        let losses = [0.1, 0.2, 0.3, 2.0, 0.4, 3.0, 0.5, 2.0];
        let targets: Vec<f64> = losses.iter().map(|l| fmath::exp(-l)).collect();
        let b = batch_from_targets(&targets, &[0; 8]);
        let m = mine_hard_subset(&b, 0.25).unwrap();
        assert_eq!(m.indices, vec![3, 5]);
    }

    #[test]
    fn reduction_to_ce_at_boundary_config() {
        let b = batch_from_targets(&[0.905, 0.407, 0.301, 0.951], &[0, 1, 0, 1]);
        let cfg = DyceConfig::ablation(1.0, 1.0).unwrap();
        let d = dyce_loss(&b, &cfg).unwrap();
        let c = ce_loss(&b).unwrap();
        assert!((d.value - c.value).abs() < 1e-12);
        for (a, b) in d.grad_probs.data().iter().zip(c.grad_probs.data()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn hand_evaluated_mined_pair() {
        let b = batch_from_targets(&[0.905, 0.407, 0.301, 0.951], &[0, 1, 0, 1]);
        let cfg = DyceConfig::new(0.5, 0.5).unwrap();
        let r = dyce_loss(&b, &cfg).unwrap();
        let expected = (-fmath::ln(0.301) - fmath::ln(0.407)) / fmath::sqrt(2.0);
        assert!((r.value - expected).abs() < 1e-12);
        assert_eq!(r.diagnostics.f_h, Some(2));
        assert_eq!(r.diagnostics.f_c, Some(vec![1, 1]));
    }

    #[test]
    fn gradient_zero_outside_subset_and_off_target() {
        let b = batch_from_targets(&[0.905, 0.407, 0.301, 0.951], &[0, 1, 0, 1]);
        let cfg = DyceConfig::new(0.5, 0.5).unwrap();
        let r = dyce_loss(&b, &cfg).unwrap();
        // instances 0 and 3 are unmined: whole rows exactly zero
        assert_eq!(r.grad_probs.row(0), &[0.0, 0.0]);
        assert_eq!(r.grad_probs.row(3), &[0.0, 0.0]);
        // mined instances: off-target entries exactly zero
        assert_eq!(r.grad_probs.at(1, 0), 0.0);
        assert_eq!(r.grad_probs.at(2, 1), 0.0);
    }

    #[test]
    fn mined_gradient_dominates_ce_gradient() {
        let b = batch_from_targets(&[0.905, 0.407, 0.301, 0.951], &[0, 1, 0, 1]);
        let cfg = DyceConfig::new(0.3, 0.5).unwrap();
        let d = dyce_loss(&b, &cfg).unwrap();
        let c = ce_loss(&b).unwrap();
        for &i in &[1usize, 2] {
            let y = b.label(i);
            assert!(d.grad_probs.at(i, y).abs() >= c.grad_probs.at(i, y).abs());
        }
    }
}
