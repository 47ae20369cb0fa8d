//! Toy end-to-end segmentation network.
//!
//! A single linear stage stands in for the vision encoder, a lookup
//! table for the language encoder, and a per-pixel linear decoder over
//! the fused token channels produces class probabilities. Those frozen
//! stand-ins keep every trainable gradient hand-derivable: the trainable
//! surface is the fusion projections plus the decoder.
//!
//! The decoder consumes the fused map's token channels, so the token
//! count is fixed per experiment by the decoder's input width.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::dlg::{
    dlg_backward, dlg_forward, generic_attention_backward, generic_attention_forward, DlgCache,
    DlgGrads, DlgParams, LanguageFeatures, MultimodalFeatures, Projection, VisionFeatures,
};
use crate::error::{Error, Result};
use crate::fmath;
use crate::grid::ProbMap;
use crate::rng::Rng;
use crate::tensor::{softmax, Tensor};

/// Which fusion block the forward pass routes through.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AttentionKind {
    /// Full dense language guidance (both modalities contribute values).
    Dlg,
    /// Single-modality comparator: language only provides attention scores.
    Generic,
}

/// Static architecture description.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModelConfig {
    /// Raw input channels per pixel.
    pub raw_channels: usize,
    /// Shared feature channel width `c`.
    pub channels: usize,
    /// Token vocabulary size.
    pub vocab: usize,
    /// Fixed caption length (decoder input width).
    pub n_tokens: usize,
    pub n_classes: usize,
}

/// The full learnable parameter set of one branch.
///
/// The vision encoder and embedding table are frozen; gradients exist
/// only for the fusion projections and the decoder.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    /// Frozen per-pixel linear stage, raw → c.
    pub vision: Projection,
    /// Frozen embedding table `[vocab × c]`.
    pub embed: Tensor,
    pub dlg: DlgParams,
    /// Per-pixel decoder, n_tokens → n_classes.
    pub decoder: Projection,
}

impl ModelParams {
    /// Fresh parameters; the seed fully determines the initialization.
    /// Biases start small but nonzero, which keeps finite-difference
    /// probes in their relative-step regime.
    pub fn init(cfg: &ModelConfig, seed: u64) -> Self {
        let mut rng = Rng::stream(seed, 0xBEEF);
        let scale = |fan_in: usize| 1.0 / fmath::sqrt(fan_in as f64);
        let mut proj = |d_in: usize, d_out: usize| Projection {
            weight: rng.normal_tensor(vec![d_in, d_out], scale(d_in)),
            bias: rng.normal_tensor(vec![d_out], 0.3),
        };
        let vision = proj(cfg.raw_channels, cfg.channels);
        let dlg = DlgParams {
            vision_key: proj(cfg.channels, cfg.channels),
            vision_value: proj(cfg.channels, cfg.channels),
            lang_key: proj(cfg.channels, cfg.channels),
            lang_value: proj(cfg.channels, cfg.channels),
        };
        let decoder = proj(cfg.n_tokens, cfg.n_classes);
        Self {
            vision,
            embed: rng.normal_tensor(vec![cfg.vocab, cfg.channels], 1.0),
            dlg,
            decoder,
        }
    }

    pub fn n_tokens(&self) -> usize {
        self.decoder.weight.rows()
    }

    pub fn n_classes(&self) -> usize {
        self.decoder.weight.cols()
    }

    pub fn vocab(&self) -> usize {
        self.embed.rows()
    }

    /// All parameter tensors with stable names, in a fixed order.
    pub fn tensors(&self) -> Vec<(&'static str, &Tensor)> {
        vec![
            ("vision_w", &self.vision.weight),
            ("vision_b", &self.vision.bias),
            ("embed", &self.embed),
            ("dlg_vision_key_w", &self.dlg.vision_key.weight),
            ("dlg_vision_key_b", &self.dlg.vision_key.bias),
            ("dlg_vision_value_w", &self.dlg.vision_value.weight),
            ("dlg_vision_value_b", &self.dlg.vision_value.bias),
            ("dlg_lang_key_w", &self.dlg.lang_key.weight),
            ("dlg_lang_key_b", &self.dlg.lang_key.bias),
            ("dlg_lang_value_w", &self.dlg.lang_value.weight),
            ("dlg_lang_value_b", &self.dlg.lang_value.bias),
            ("decoder_w", &self.decoder.weight),
            ("decoder_b", &self.decoder.bias),
        ]
    }

    pub fn tensors_mut(&mut self) -> Vec<(&'static str, &mut Tensor)> {
        vec![
            ("vision_w", &mut self.vision.weight),
            ("vision_b", &mut self.vision.bias),
            ("embed", &mut self.embed),
            ("dlg_vision_key_w", &mut self.dlg.vision_key.weight),
            ("dlg_vision_key_b", &mut self.dlg.vision_key.bias),
            ("dlg_vision_value_w", &mut self.dlg.vision_value.weight),
            ("dlg_vision_value_b", &mut self.dlg.vision_value.bias),
            ("dlg_lang_key_w", &mut self.dlg.lang_key.weight),
            ("dlg_lang_key_b", &mut self.dlg.lang_key.bias),
            ("dlg_lang_value_w", &mut self.dlg.lang_value.weight),
            ("dlg_lang_value_b", &mut self.dlg.lang_value.bias),
            ("decoder_w", &mut self.decoder.weight),
            ("decoder_b", &mut self.decoder.bias),
        ]
    }
}

/// Gradients for the trainable surface (fusion projections + decoder).
#[derive(Debug, Clone, PartialEq)]
pub struct ModelGrads {
    pub dlg: DlgParams,
    pub decoder: Projection,
}

impl ModelGrads {
    pub fn zeros_like(params: &ModelParams) -> Self {
        Self {
            dlg: DlgParams::zeros_like(&params.dlg),
            decoder: Projection::zeros_like(&params.decoder),
        }
    }

    pub fn add_scaled_assign(&mut self, other: &ModelGrads, scale: f64) {
        self.dlg.add_scaled_assign(&other.dlg, scale);
        self.decoder.add_scaled_assign(&other.decoder, scale);
    }

    pub fn tensors(&self) -> Vec<(&'static str, &Tensor)> {
        vec![
            ("dlg_vision_key_w", &self.dlg.vision_key.weight),
            ("dlg_vision_key_b", &self.dlg.vision_key.bias),
            ("dlg_vision_value_w", &self.dlg.vision_value.weight),
            ("dlg_vision_value_b", &self.dlg.vision_value.bias),
            ("dlg_lang_key_w", &self.dlg.lang_key.weight),
            ("dlg_lang_key_b", &self.dlg.lang_key.bias),
            ("dlg_lang_value_w", &self.dlg.lang_value.weight),
            ("dlg_lang_value_b", &self.dlg.lang_value.bias),
            ("decoder_w", &self.decoder.weight),
            ("decoder_b", &self.decoder.bias),
        ]
    }

    /// Name of the first non-finite gradient tensor, if any.
    pub fn first_non_finite(&self) -> Option<&'static str> {
        self.tensors()
            .into_iter()
            .find(|(_, t)| !t.all_finite())
            .map(|(name, _)| name)
    }
}

/// Frozen per-pixel linear map from raw channels to feature channels.
pub fn encode_vision(image: &Tensor, params: &ModelParams) -> Result<VisionFeatures> {
    if image.rank() != 3 || image.shape()[2] != params.vision.weight.rows() {
        return Err(Error::InvalidShape {
            op: "encode_vision",
            detail: format!(
                "expected [h x w x {}] image, got {:?}",
                params.vision.weight.rows(),
                image.shape()
            ),
        });
    }
    let (h, w, raw) = (image.shape()[0], image.shape()[1], image.shape()[2]);
    let flat = image.reshape(vec![h * w, raw])?;
    VisionFeatures::new(h, w, params.vision.apply(&flat)?)
}

/// Row lookup into the embedding table, `[n_L × c]`.
pub fn embed_caption(tokens: &[usize], params: &ModelParams) -> Result<LanguageFeatures> {
    if tokens.is_empty() {
        return Err(Error::InvalidShape {
            op: "embed_caption",
            detail: alloc::string::String::from("caption must hold at least one token"),
        });
    }
    let vocab = params.vocab();
    let c = params.embed.cols();
    let mut data = Vec::with_capacity(tokens.len() * c);
    for &t in tokens {
        if t >= vocab {
            return Err(Error::TokenOutOfRange { token: t, vocab });
        }
        data.extend_from_slice(params.embed.row(t));
    }
    LanguageFeatures::new(Tensor::matrix(tokens.len(), c, data)?)
}

/// Per-pixel linear decode of the fused token channels plus softmax.
pub fn decode(fm: &MultimodalFeatures, params: &ModelParams) -> Result<ProbMap> {
    let (probs, _, _) = decode_with_cache(fm, params)?;
    Ok(probs)
}

fn decode_with_cache(
    fm: &MultimodalFeatures,
    params: &ModelParams,
) -> Result<(ProbMap, Tensor, Tensor)> {
    if fm.n_tokens != params.n_tokens() {
        return Err(Error::InvalidShape {
            op: "decode",
            detail: format!(
                "fused map has {} token channels, decoder expects {}",
                fm.n_tokens,
                params.n_tokens()
            ),
        });
    }
    // pixels-major view of the fused map: [h·w × n_L]
    let decode_input = fm.feat.transposed();
    let logits = params.decoder.apply(&decode_input)?;
    let probs = softmax(&logits, 1)?;
    Ok((
        ProbMap::new(fm.height, fm.width, probs.clone())?,
        decode_input,
        probs,
    ))
}

/// Intermediates retained for [`backward`].
#[derive(Debug, Clone)]
pub struct ModelCache {
    pub fusion: DlgCache,
    /// `[h·w × n_L]` decoder input.
    decode_input: Tensor,
    /// `[h·w × n_classes]` output probabilities.
    probs: Tensor,
    attention: AttentionKind,
}

/// Forward result: per-pixel class distributions plus the cache.
#[derive(Debug, Clone)]
pub struct ForwardPass {
    pub probs: ProbMap,
    pub cache: ModelCache,
}

/// encode → embed → fuse → decode.
pub fn forward(
    image: &Tensor,
    tokens: &[usize],
    params: &ModelParams,
    attention: AttentionKind,
) -> Result<ForwardPass> {
    if tokens.len() != params.n_tokens() {
        return Err(Error::InvalidShape {
            op: "forward",
            detail: format!(
                "caption holds {} tokens, decoder expects {}",
                tokens.len(),
                params.n_tokens()
            ),
        });
    }
    let vision = encode_vision(image, params)?;
    let lang = embed_caption(tokens, params)?;
    let fused = match attention {
        AttentionKind::Dlg => dlg_forward(&vision, &lang, &params.dlg)?,
        AttentionKind::Generic => generic_attention_forward(&vision, &lang, &params.dlg)?,
    };
    let (probs, decode_input, prob_tensor) = decode_with_cache(&fused.multimodal, params)?;
    Ok(ForwardPass {
        probs,
        cache: ModelCache {
            fusion: fused.cache,
            decode_input,
            probs: prob_tensor,
            attention,
        },
    })
}

/// Backward through decoder softmax, decoder, and fusion, given
/// `∂L/∂probs` as `[h·w × n_classes]`.
pub fn backward(cache: &ModelCache, d_probs: &Tensor, params: &ModelParams) -> Result<ModelGrads> {
    if d_probs.shape() != cache.probs.shape() {
        return Err(Error::ShapeMismatch {
            op: "model_backward",
            left: d_probs.shape().to_vec(),
            right: cache.probs.shape().to_vec(),
        });
    }
    // Softmax jacobian per pixel: d_logit[k] = p_k (d_p[k] − Σ_j d_p[j]·p_j)
    let (pixels, n_classes) = (cache.probs.rows(), cache.probs.cols());
    let mut d_logits = Tensor::zeros(vec![pixels, n_classes]);
    for p in 0..pixels {
        let probs = cache.probs.row(p);
        let dp = d_probs.row(p);
        let dot: f64 = probs.iter().zip(dp).map(|(a, b)| a * b).sum();
        for k in 0..n_classes {
            d_logits.set(p, k, probs[k] * (dp[k] - dot));
        }
    }
    let (d_dec_w, d_dec_b, d_decode_input) = params.decoder.backward(&cache.decode_input, &d_logits)?;
    let d_fm = d_decode_input.transposed();
    let fusion_grads: DlgGrads = match cache.attention {
        AttentionKind::Dlg => dlg_backward(&cache.fusion, &d_fm)?,
        AttentionKind::Generic => generic_attention_backward(&cache.fusion, &d_fm)?,
    };
    Ok(ModelGrads {
        dlg: fusion_grads.params,
        decoder: Projection {
            weight: d_dec_w,
            bias: d_dec_b,
        },
    })
}
