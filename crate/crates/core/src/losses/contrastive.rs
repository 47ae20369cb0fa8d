//! Symmetric-pairing contrastive alignment over two embedding sets.
//!
//! Row `i` of the image embeddings is pulled toward row `i` of the text
//! embeddings and pushed from every other row, through a temperature-
//! scaled softmax over cosine similarities. The value is the plain sum
//! over rows as written; pass `normalize = true` for a mean instead.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::fmath;
use crate::tensor::Tensor;

/// Loss value with gradients for both embedding sets.
#[derive(Debug, Clone, PartialEq)]
pub struct ContrastiveResult {
    pub value: f64,
    pub grad_img: Tensor,
    pub grad_txt: Tensor,
}

/// `−Σ_i log[ exp(cos(v_i,t_i)/τ) / Σ_j exp(cos(v_i,t_j)/τ) ]`.
///
/// Gradients are analytic through both the softmax and the cosine.
/// Errors on a zero-norm embedding row or nonpositive temperature.
pub fn contrastive_loss(
    img_emb: &Tensor,
    txt_emb: &Tensor,
    tau: f64,
    normalize: bool,
) -> Result<ContrastiveResult> {
    if img_emb.rank() != 2 || txt_emb.rank() != 2 || img_emb.shape() != txt_emb.shape() {
        return Err(Error::ShapeMismatch {
            op: "contrastive_loss",
            left: img_emb.shape().to_vec(),
            right: txt_emb.shape().to_vec(),
        });
    }
    if !tau.is_finite() || tau <= 0.0 {
        return Err(Error::InvalidConfig {
            field: "tau",
            detail: alloc::format!("temperature must be positive, got {tau}"),
        });
    }
    let (n, d) = (img_emb.rows(), img_emb.cols());

    let norms = |t: &Tensor| -> Result<Vec<f64>> {
        (0..n)
            .map(|r| {
                let norm = fmath::sqrt(t.row(r).iter().map(|v| v * v).sum());
                if norm == 0.0 {
                    Err(Error::DegenerateEmbedding { row: r })
                } else {
                    Ok(norm)
                }
            })
            .collect()
    };
    let img_norm = norms(img_emb)?;
    let txt_norm = norms(txt_emb)?;

    // cos[i][j] = <v_i, t_j> / (|v_i||t_j|)
    let mut cos = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            let dot: f64 = img_emb
                .row(i)
                .iter()
                .zip(txt_emb.row(j))
                .map(|(a, b)| a * b)
                .sum();
            cos[i * n + j] = dot / (img_norm[i] * txt_norm[j]);
        }
    }

    // Row-wise softmax of cos/τ; G = softmax − I is ∂L/∂(cos/τ).
    let scale = if normalize { 1.0 / n as f64 } else { 1.0 };
    let mut value = 0.0;
    let mut g = vec![0.0; n * n];
    for i in 0..n {
        let row = &cos[i * n..(i + 1) * n];
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = row.iter().map(|&c| fmath::exp((c - max) / tau)).collect();
        let sum: f64 = exps.iter().sum();
        value += scale * (fmath::ln(sum) + max / tau - row[i] / tau);
        for j in 0..n {
            let softmax = exps[j] / sum;
            g[i * n + j] = scale * (softmax - if i == j { 1.0 } else { 0.0 }) / tau;
        }
    }

    // Backprop through the cosine:
    //   ∂cos_ij/∂v_i = (t̂_j − cos_ij·v̂_i)/|v_i|
    //   ∂cos_ij/∂t_j = (v̂_i − cos_ij·t̂_j)/|t_j|
    let mut grad_img = Tensor::zeros(vec![n, d]);
    let mut grad_txt = Tensor::zeros(vec![n, d]);
    for i in 0..n {
        for j in 0..n {
            let w = g[i * n + j];
            if w == 0.0 {
                continue;
            }
            let c = cos[i * n + j];
            for k in 0..d {
                let v_hat = img_emb.at(i, k) / img_norm[i];
                let t_hat = txt_emb.at(j, k) / txt_norm[j];
                grad_img.set(i, k, grad_img.at(i, k) + w * (t_hat - c * v_hat) / img_norm[i]);
                grad_txt.set(j, k, grad_txt.at(j, k) + w * (v_hat - c * t_hat) / txt_norm[j]);
            }
        }
    }

    Ok(ContrastiveResult {
        value,
        grad_img,
        grad_txt,
    })
}
