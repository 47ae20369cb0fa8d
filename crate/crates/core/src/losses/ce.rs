//! Cross-entropy and the two static reweighting baselines (weighted CE,
//! focal loss). Gradients are the closed forms, zero off the target class.

use alloc::format;


use crate::error::{Error, Result};
use crate::fmath;
use crate::tensor::Tensor;

use super::{clamped, zero_per_class, BatchPrediction, LossDiagnostics, LossResult};

/// Mean negative log-likelihood of the target class.
///
/// `value = −(1/S) Σ_i log p_{i,y_i}` over the non-ignored instances;
/// `grad[i, y_i] = −(1/S)(1/p_{i,y_i})`, zero elsewhere.
pub fn ce_loss(batch: &BatchPrediction) -> Result<LossResult> {
    weighted_ce(batch, None)
}

/// Weighted cross-entropy with fixed positive per-class weights.
pub fn wce_loss(batch: &BatchPrediction, class_weights: &[f64]) -> Result<LossResult> {
    if class_weights.len() != batch.n_classes() {
        return Err(Error::InvalidConfig {
            field: "class_weights",
            detail: format!(
                "{} weights for {} classes",
                class_weights.len(),
                batch.n_classes()
            ),
        });
    }
    if let Some(w) = class_weights.iter().find(|w| !w.is_finite() || **w <= 0.0) {
        return Err(Error::InvalidConfig {
            field: "class_weights",
            detail: format!("weights must be positive, got {w}"),
        });
    }
    weighted_ce(batch, Some(class_weights))
}

fn weighted_ce(batch: &BatchPrediction, class_weights: Option<&[f64]>) -> Result<LossResult> {
    let s_eff = batch.effective_size();
    if s_eff == 0 {
        return Err(Error::EmptyBatch);
    }
    let inv_s = 1.0 / s_eff as f64;
    let mut grad = Tensor::zeros(alloc::vec![batch.n_instances(), batch.n_classes()]);
    let mut per_class = zero_per_class(batch.n_classes());
    let mut clamp_count = 0;
    let mut value = 0.0;
    for i in 0..batch.n_instances() {
        if batch.is_ignored(i) {
            continue;
        }
        let y = batch.label(i);
        let w = class_weights.map_or(1.0, |ws| ws[y]);
        let p = clamped(batch.prob(i, y), &mut clamp_count);
        let term = -w * fmath::ln(p) * inv_s;
        value += term;
        per_class[y] += term;
        grad.set(i, y, grad.at(i, y) - w * inv_s / p);
    }
    Ok(LossResult {
        value,
        grad_probs: grad,
        diagnostics: LossDiagnostics::plain(value, per_class, clamp_count),
    })
}

/// Focal loss `−(1/S) Σ_i (1−p_{i,y_i})^γ log p_{i,y_i}`.
///
/// `gamma = 0` reduces exactly to [`ce_loss`]; well-classified instances
/// (`p → 1`) contribute vanishing loss and gradient for `gamma > 0`.
pub fn focal_loss(batch: &BatchPrediction, gamma: f64) -> Result<LossResult> {
    if !gamma.is_finite() || gamma < 0.0 {
        return Err(Error::InvalidConfig {
            field: "gamma",
            detail: format!("must be a nonnegative real, got {gamma}"),
        });
    }
    let s_eff = batch.effective_size();
    if s_eff == 0 {
        return Err(Error::EmptyBatch);
    }
    let inv_s = 1.0 / s_eff as f64;
    let mut grad = Tensor::zeros(alloc::vec![batch.n_instances(), batch.n_classes()]);
    let mut per_class = zero_per_class(batch.n_classes());
    let mut clamp_count = 0;
    let mut value = 0.0;
    for i in 0..batch.n_instances() {
        if batch.is_ignored(i) {
            continue;
        }
        let y = batch.label(i);
        let p = clamped(batch.prob(i, y), &mut clamp_count);
        let one_minus = 1.0 - p;
        let modulator = fmath::powf(one_minus, gamma);
        let term = -modulator * fmath::ln(p) * inv_s;
        value += term;
        per_class[y] += term;
        // d/dp [−(1−p)^γ ln p] = γ(1−p)^{γ−1} ln p − (1−p)^γ / p,
        // with the limit 0 as p→1 whenever γ > 0.
        let g = if one_minus == 0.0 {
            if gamma == 0.0 {
                -1.0 / p
            } else {
                0.0
            }
        } else {
            gamma * fmath::powf(one_minus, gamma - 1.0) * fmath::ln(p) - modulator / p
        };
        grad.set(i, y, grad.at(i, y) + g * inv_s);
    }
    Ok(LossResult {
        value,
        grad_probs: grad,
        diagnostics: LossDiagnostics::plain(value, per_class, clamp_count),
    })
}
