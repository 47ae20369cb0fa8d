//! Dense language-guidance fusion.
//!
//! Vision and language features are projected to key/value pairs, a
//! scaled token×pixel similarity matrix attends both modalities, and the
//! two attended maps fuse into a token×pixel multimodal feature map.
//! Both modalities contribute values, not just attention scores — the
//! point of the mechanism. A conventional single-modality comparator
//! (language used only for attention weights) is provided for ablations.
//!
//! The attention matrix is stored token-major, `[n_L × h·w]`: entry
//! `(t, p)` is the scaled dot product of language key `t` with vision
//! key `p`. Each attended output is normalized with one softmax over the
//! dimension it aggregates: over pixels for the language-attended vision
//! features, over tokens for the vision-attended language features.

use alloc::vec;

use crate::error::{Error, Result};
use crate::fmath;
use crate::tensor::{linear, matmul, softmax, Tensor};

/// Spatial feature map `[h·w × c]` with its grid dimensions.
#[derive(Debug, Clone, PartialEq)]
pub struct VisionFeatures {
    pub height: usize,
    pub width: usize,
    /// `[h·w × c]`
    pub feat: Tensor,
}

impl VisionFeatures {
    pub fn new(height: usize, width: usize, feat: Tensor) -> Result<Self> {
        if feat.rank() != 2 || feat.rows() != height * width {
            return Err(Error::InvalidShape {
                op: "VisionFeatures",
                detail: alloc::format!(
                    "expected [{} x c] features for a {height}x{width} grid, got {:?}",
                    height * width,
                    feat.shape()
                ),
            });
        }
        Ok(Self {
            height,
            width,
            feat,
        })
    }

    pub fn channels(&self) -> usize {
        self.feat.cols()
    }

    pub fn n_pixels(&self) -> usize {
        self.height * self.width
    }
}

/// Token embedding matrix `[n_L × c]`.
#[derive(Debug, Clone, PartialEq)]
pub struct LanguageFeatures {
    /// `[n_L × c]`
    pub feat: Tensor,
}

impl LanguageFeatures {
    pub fn new(feat: Tensor) -> Result<Self> {
        if feat.rank() != 2 || feat.rows() == 0 {
            return Err(Error::InvalidShape {
                op: "LanguageFeatures",
                detail: alloc::format!("expected [n_L>=1 x c] tokens, got {:?}", feat.shape()),
            });
        }
        Ok(Self { feat })
    }

    pub fn n_tokens(&self) -> usize {
        self.feat.rows()
    }

    pub fn channels(&self) -> usize {
        self.feat.cols()
    }
}

/// One affine projection (used channel-preserving `c→c` here, and with
/// free widths by the model's encoder/decoder).
#[derive(Debug, Clone, PartialEq)]
pub struct Projection {
    pub weight: Tensor,
    pub bias: Tensor,
}

impl Projection {
    pub fn new(weight: Tensor, bias: Tensor) -> Result<Self> {
        if weight.rank() != 2 || bias.rank() != 1 || weight.cols() != bias.shape()[0] {
            return Err(Error::ShapeMismatch {
                op: "Projection",
                left: weight.shape().to_vec(),
                right: bias.shape().to_vec(),
            });
        }
        Ok(Self { weight, bias })
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            weight: Tensor::identity(dim),
            bias: Tensor::zeros(vec![dim]),
        }
    }

    pub fn zeros_like(other: &Projection) -> Self {
        Self {
            weight: Tensor::zeros(other.weight.shape().to_vec()),
            bias: Tensor::zeros(other.bias.shape().to_vec()),
        }
    }

    pub fn apply(&self, x: &Tensor) -> Result<Tensor> {
        linear(x, &self.weight, &self.bias)
    }

    pub fn add_scaled_assign(&mut self, grad: &Projection, scale: f64) {
        self.weight.add_scaled_assign(&grad.weight, scale);
        self.bias.add_scaled_assign(&grad.bias, scale);
    }

    /// Backward of `y = x·W + b` given `d_y`; returns `(d_w, d_b, d_x)`.
    pub fn backward(&self, x: &Tensor, d_y: &Tensor) -> Result<(Tensor, Tensor, Tensor)> {
        let d_w = matmul(&x.transposed(), d_y)?;
        let mut d_b = Tensor::zeros(vec![self.bias.shape()[0]]);
        for row in d_y.data().chunks(d_y.cols()) {
            for (acc, v) in d_b.data_mut().iter_mut().zip(row) {
                *acc += v;
            }
        }
        let d_x = matmul(d_y, &self.weight.transposed())?;
        Ok((d_w, d_b, d_x))
    }
}

/// The four channel-preserving projections of the fusion block.
#[derive(Debug, Clone, PartialEq)]
pub struct DlgParams {
    pub vision_key: Projection,
    pub vision_value: Projection,
    pub lang_key: Projection,
    pub lang_value: Projection,
}

impl DlgParams {
    pub fn identity(channels: usize) -> Self {
        Self {
            vision_key: Projection::identity(channels),
            vision_value: Projection::identity(channels),
            lang_key: Projection::identity(channels),
            lang_value: Projection::identity(channels),
        }
    }

    pub fn zeros_like(other: &DlgParams) -> Self {
        Self {
            vision_key: Projection::zeros_like(&other.vision_key),
            vision_value: Projection::zeros_like(&other.vision_value),
            lang_key: Projection::zeros_like(&other.lang_key),
            lang_value: Projection::zeros_like(&other.lang_value),
        }
    }

    pub fn channels(&self) -> usize {
        self.vision_key.weight.rows()
    }

    pub fn add_scaled_assign(&mut self, grads: &DlgParams, scale: f64) {
        self.vision_key.add_scaled_assign(&grads.vision_key, scale);
        self.vision_value.add_scaled_assign(&grads.vision_value, scale);
        self.lang_key.add_scaled_assign(&grads.lang_key, scale);
        self.lang_value.add_scaled_assign(&grads.lang_value, scale);
    }
}

/// Token×pixel multimodal feature map, stored `[n_L × h·w]`.
#[derive(Debug, Clone, PartialEq)]
pub struct MultimodalFeatures {
    pub n_tokens: usize,
    pub height: usize,
    pub width: usize,
    /// `[n_L × h·w]`
    pub feat: Tensor,
}

/// Project both modalities to key/value pairs:
/// `(F_V^K, F_V^V, F_L^K, F_L^V)`.
pub fn project_kv(
    vision: &VisionFeatures,
    lang: &LanguageFeatures,
    params: &DlgParams,
) -> Result<(Tensor, Tensor, Tensor, Tensor)> {
    if vision.channels() != lang.channels() || vision.channels() != params.channels() {
        return Err(Error::ShapeMismatch {
            op: "project_kv",
            left: vision.feat.shape().to_vec(),
            right: lang.feat.shape().to_vec(),
        });
    }
    Ok((
        params.vision_key.apply(&vision.feat)?,
        params.vision_value.apply(&vision.feat)?,
        params.lang_key.apply(&lang.feat)?,
        params.lang_value.apply(&lang.feat)?,
    ))
}

/// Scaled similarity matrix `A[t, p] = ⟨lang_key[t], vision_key[p]⟩/√c`,
/// shape `[n_L × h·w]`.
pub fn attention_matrix(vision_key: &Tensor, lang_key: &Tensor) -> Result<Tensor> {
    if vision_key.rank() != 2 || lang_key.rank() != 2 || vision_key.cols() != lang_key.cols() {
        return Err(Error::ShapeMismatch {
            op: "attention_matrix",
            left: vision_key.shape().to_vec(),
            right: lang_key.shape().to_vec(),
        });
    }
    let c = vision_key.cols();
    if c == 0 {
        return Err(Error::InvalidShape {
            op: "attention_matrix",
            detail: alloc::string::String::from("zero channel width"),
        });
    }
    let scores = matmul(lang_key, &vision_key.transposed())?;
    Ok(scores.scaled(1.0 / fmath::sqrt(c as f64)))
}

/// Attend both modalities with one softmax per output, each over the
/// dimension being aggregated:
///
/// * `vision_attended = softmax_pixels(A) · F_V^V` — `[n_L × c]`, each
///   token aggregates pixels;
/// * `lang_attended = softmax_tokens(A)ᵀ · F_L^V` — `[h·w × c]`, each
///   pixel aggregates tokens.
pub fn attend(
    attention: &Tensor,
    vision_value: &Tensor,
    lang_value: &Tensor,
) -> Result<(Tensor, Tensor)> {
    if attention.rank() != 2
        || attention.cols() != vision_value.rows()
        || attention.rows() != lang_value.rows()
        || vision_value.cols() != lang_value.cols()
    {
        return Err(Error::ShapeMismatch {
            op: "attend",
            left: attention.shape().to_vec(),
            right: vision_value.shape().to_vec(),
        });
    }
    let over_pixels = softmax(attention, 1)?;
    let over_tokens = softmax(attention, 0)?;
    let vision_attended = matmul(&over_pixels, vision_value)?;
    let lang_attended = matmul(&over_tokens.transposed(), lang_value)?;
    Ok((vision_attended, lang_attended))
}

/// Fuse the attended maps: `F_M[t, p] = ⟨vision_attended[t], lang_attended[p]⟩`.
pub fn fuse(
    vision_attended: &Tensor,
    lang_attended: &Tensor,
    height: usize,
    width: usize,
) -> Result<MultimodalFeatures> {
    if vision_attended.cols() != lang_attended.cols() || lang_attended.rows() != height * width {
        return Err(Error::ShapeMismatch {
            op: "fuse",
            left: vision_attended.shape().to_vec(),
            right: lang_attended.shape().to_vec(),
        });
    }
    let feat = matmul(vision_attended, &lang_attended.transposed())?;
    Ok(MultimodalFeatures {
        n_tokens: vision_attended.rows(),
        height,
        width,
        feat,
    })
}

/// Everything the backward pass needs from a forward evaluation.
#[derive(Debug, Clone)]
pub struct DlgCache {
    pub vision_feat: Tensor,
    pub lang_feat: Tensor,
    pub vision_key: Tensor,
    pub vision_value: Tensor,
    pub lang_key: Tensor,
    pub lang_value: Tensor,
    pub attention: Tensor,
    pub over_pixels: Tensor,
    pub over_tokens: Tensor,
    pub vision_attended: Tensor,
    pub lang_attended: Tensor,
    params: DlgParams,
    inv_sqrt_c: f64,
}

/// Forward result: the fused map plus intermediates for the backward.
#[derive(Debug, Clone)]
pub struct DlgForward {
    pub multimodal: MultimodalFeatures,
    pub cache: DlgCache,
}

/// Full fusion pipeline: project, score, attend, fuse.
pub fn dlg_forward(
    vision: &VisionFeatures,
    lang: &LanguageFeatures,
    params: &DlgParams,
) -> Result<DlgForward> {
    let (vision_key, vision_value, lang_key, lang_value) = project_kv(vision, lang, params)?;
    let attention = attention_matrix(&vision_key, &lang_key)?;
    let over_pixels = softmax(&attention, 1)?;
    let over_tokens = softmax(&attention, 0)?;
    let vision_attended = matmul(&over_pixels, &vision_value)?;
    let lang_attended = matmul(&over_tokens.transposed(), &lang_value)?;
    let multimodal = fuse(&vision_attended, &lang_attended, vision.height, vision.width)?;
    Ok(DlgForward {
        multimodal,
        cache: DlgCache {
            vision_feat: vision.feat.clone(),
            lang_feat: lang.feat.clone(),
            vision_key,
            vision_value,
            lang_key,
            lang_value,
            attention,
            over_pixels,
            over_tokens,
            vision_attended,
            lang_attended,
            params: params.clone(),
            inv_sqrt_c: 1.0 / fmath::sqrt(vision.channels() as f64),
        },
    })
}

/// Gradients of a scalar loss with respect to the fusion parameters and
/// both input feature maps.
#[derive(Debug, Clone)]
pub struct DlgGrads {
    pub params: DlgParams,
    pub d_vision: Tensor,
    pub d_lang: Tensor,
}

/// Softmax backward along rows: `dA = s ⊙ (dS − rowdot(dS, s))`.
fn softmax_backward_rows(s: &Tensor, d_s: &Tensor) -> Tensor {
    let (rows, cols) = (s.rows(), s.cols());
    let mut out = Tensor::zeros(vec![rows, cols]);
    for r in 0..rows {
        let sr = s.row(r);
        let dr = d_s.row(r);
        let dot: f64 = sr.iter().zip(dr).map(|(a, b)| a * b).sum();
        for c in 0..cols {
            out.set(r, c, sr[c] * (dr[c] - dot));
        }
    }
    out
}

/// Softmax backward along columns.
fn softmax_backward_cols(s: &Tensor, d_s: &Tensor) -> Tensor {
    softmax_backward_rows(&s.transposed(), &d_s.transposed()).transposed()
}

/// Backward of [`dlg_forward`] given `∂L/∂F_M` (`[n_L × h·w]`).
pub fn dlg_backward(cache: &DlgCache, d_multimodal: &Tensor) -> Result<DlgGrads> {
    if d_multimodal.shape() != cache.attention.shape() {
        return Err(Error::ShapeMismatch {
            op: "dlg_backward",
            left: d_multimodal.shape().to_vec(),
            right: cache.attention.shape().to_vec(),
        });
    }
    // F_M = F_V^A · (F_L^A)ᵀ
    let d_vision_attended = matmul(d_multimodal, &cache.lang_attended)?;
    let d_lang_attended = matmul(&d_multimodal.transposed(), &cache.vision_attended)?;

    // F_V^A = softmax_pixels(A) · V_v ; F_L^A = softmax_tokens(A)ᵀ · V_l
    let d_over_pixels = matmul(&d_vision_attended, &cache.vision_value.transposed())?;
    let d_vision_value = matmul(&cache.over_pixels.transposed(), &d_vision_attended)?;
    let d_over_tokens = matmul(&cache.lang_value, &d_lang_attended.transposed())?;
    let d_lang_value = matmul(&cache.over_tokens, &d_lang_attended)?;

    let mut d_attention = softmax_backward_rows(&cache.over_pixels, &d_over_pixels);
    d_attention.add_scaled_assign(
        &softmax_backward_cols(&cache.over_tokens, &d_over_tokens),
        1.0,
    );

    // A = (1/√c)·K_l·K_vᵀ
    let d_lang_key = matmul(&d_attention, &cache.vision_key)?.scaled(cache.inv_sqrt_c);
    let d_vision_key = matmul(&d_attention.transposed(), &cache.lang_key)?.scaled(cache.inv_sqrt_c);

    let p = &cache.params;
    let (d_vk_w, d_vk_b, d_v_from_key) = p.vision_key.backward(&cache.vision_feat, &d_vision_key)?;
    let (d_vv_w, d_vv_b, d_v_from_val) =
        p.vision_value.backward(&cache.vision_feat, &d_vision_value)?;
    let (d_lk_w, d_lk_b, d_l_from_key) = p.lang_key.backward(&cache.lang_feat, &d_lang_key)?;
    let (d_lv_w, d_lv_b, d_l_from_val) = p.lang_value.backward(&cache.lang_feat, &d_lang_value)?;

    let mut d_vision = d_v_from_key;
    d_vision.add_scaled_assign(&d_v_from_val, 1.0);
    let mut d_lang = d_l_from_key;
    d_lang.add_scaled_assign(&d_l_from_val, 1.0);

    Ok(DlgGrads {
        params: DlgParams {
            vision_key: Projection {
                weight: d_vk_w,
                bias: d_vk_b,
            },
            vision_value: Projection {
                weight: d_vv_w,
                bias: d_vv_b,
            },
            lang_key: Projection {
                weight: d_lk_w,
                bias: d_lk_b,
            },
            lang_value: Projection {
                weight: d_lv_w,
                bias: d_lv_b,
            },
        },
        d_vision,
        d_lang,
    })
}

/// Conventional single-modality attention, the ablation comparator.
///
/// Language enters only through the attention scores: tokens attend over
/// pixels exactly as in the full block, but the fused map pairs the
/// attended rows against the raw vision values,
/// `F_M[t, p] = ⟨softmax_pixels(A)·F_V^V [t], F_V^V[p]⟩`, so the output
/// carries no language values at all. Shape-compatible with
/// [`dlg_forward`].
pub fn generic_attention_forward(
    vision: &VisionFeatures,
    lang: &LanguageFeatures,
    params: &DlgParams,
) -> Result<DlgForward> {
    let (vision_key, vision_value, lang_key, lang_value) = project_kv(vision, lang, params)?;
    let attention = attention_matrix(&vision_key, &lang_key)?;
    let over_pixels = softmax(&attention, 1)?;
    let over_tokens = softmax(&attention, 0)?; // cached for shape parity, unused by the fuse
    let vision_attended = matmul(&over_pixels, &vision_value)?;
    let feat = matmul(&vision_attended, &vision_value.transposed())?;
    Ok(DlgForward {
        multimodal: MultimodalFeatures {
            n_tokens: lang.n_tokens(),
            height: vision.height,
            width: vision.width,
            feat,
        },
        cache: DlgCache {
            vision_feat: vision.feat.clone(),
            lang_feat: lang.feat.clone(),
            vision_key,
            vision_value,
            lang_key,
            lang_value,
            attention,
            over_pixels,
            over_tokens,
            vision_attended,
            lang_attended: Tensor::zeros(vec![vision.n_pixels(), params.channels()]),
            params: params.clone(),
            inv_sqrt_c: 1.0 / fmath::sqrt(vision.channels() as f64),
        },
    })
}

/// Backward of [`generic_attention_forward`].
pub fn generic_attention_backward(cache: &DlgCache, d_multimodal: &Tensor) -> Result<DlgGrads> {
    // F_M = F_V^A · V_vᵀ with F_V^A = softmax_pixels(A)·V_v
    let d_vision_attended = matmul(d_multimodal, &cache.vision_value)?;
    let mut d_vision_value = matmul(&d_multimodal.transposed(), &cache.vision_attended)?;
    let d_over_pixels = matmul(&d_vision_attended, &cache.vision_value.transposed())?;
    d_vision_value.add_scaled_assign(
        &matmul(&cache.over_pixels.transposed(), &d_vision_attended)?,
        1.0,
    );

    let d_attention = softmax_backward_rows(&cache.over_pixels, &d_over_pixels);
    let d_lang_key = matmul(&d_attention, &cache.vision_key)?.scaled(cache.inv_sqrt_c);
    let d_vision_key = matmul(&d_attention.transposed(), &cache.lang_key)?.scaled(cache.inv_sqrt_c);

    let p = &cache.params;
    let (d_vk_w, d_vk_b, d_v_from_key) = p.vision_key.backward(&cache.vision_feat, &d_vision_key)?;
    let (d_vv_w, d_vv_b, d_v_from_val) =
        p.vision_value.backward(&cache.vision_feat, &d_vision_value)?;
    let (d_lk_w, d_lk_b, d_l_from_key) = p.lang_key.backward(&cache.lang_feat, &d_lang_key)?;

    let mut d_vision = d_v_from_key;
    d_vision.add_scaled_assign(&d_v_from_val, 1.0);

    Ok(DlgGrads {
        params: DlgParams {
            vision_key: Projection {
                weight: d_vk_w,
                bias: d_vk_b,
            },
            vision_value: Projection {
                weight: d_vv_w,
                bias: d_vv_b,
            },
            lang_key: Projection {
                weight: d_lk_w,
                bias: d_lk_b,
            },
            // language values never reach the output here
            lang_value: Projection {
                weight: Tensor::zeros(p.lang_value.weight.shape().to_vec()),
                bias: Tensor::zeros(p.lang_value.bias.shape().to_vec()),
            },
        },
        d_vision,
        d_lang: d_l_from_key,
    })
}
