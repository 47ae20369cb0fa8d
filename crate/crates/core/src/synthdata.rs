//! Deterministic generator of two-domain, long-tailed synthetic
//! segmentation tasks with captions.
//!
//! Pixels draw their class from a power law (`P(c) ∝ (c+1)^{−tail}`) and
//! their features from a class-conditional Gaussian, so the Bayes-optimal
//! segmentation is known and the task is learnable at desk scale. A
//! second domain is the same task with feature means offset and rotated
//! by a `shift` factor. Captions list the classes present in the image,
//! one token per present class, sorted ascending.
//!
//! Every image draws from its own counter-based RNG stream, so datasets
//! are bit-identical across runs and generation order.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::fmath;
use crate::grid::LabelMap;
use crate::rng::Rng;
use crate::tensor::Tensor;

/// Per-pixel feature noise around the class mean.
pub const NOISE_STD: f64 = 0.9;
/// Scale of the class-mean pattern.
pub const MEAN_AMPLITUDE: f64 = 1.6;

/// Parameters of one synthetic domain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DomainSpec {
    pub seed: u64,
    pub height: usize,
    pub width: usize,
    pub raw_channels: usize,
    pub n_classes: usize,
    /// Class `c` occupies an expected pixel share ∝ `(c+1)^{−tail_exponent}`.
    pub tail_exponent: f64,
    /// 0 reproduces the canonical domain exactly; larger values move the
    /// class means further from it.
    pub shift: f64,
    /// Images per generated split.
    pub n_images: usize,
}

impl DomainSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_classes < 2 {
            return Err(Error::InvalidConfig {
                field: "n_classes",
                detail: alloc::format!("need at least 2 classes, got {}", self.n_classes),
            });
        }
        if self.height == 0 || self.width == 0 || self.raw_channels == 0 {
            return Err(Error::InvalidConfig {
                field: "grid",
                detail: String::from("height, width and raw_channels must be positive"),
            });
        }
        if !self.tail_exponent.is_finite()
            || self.tail_exponent <= 0.0
            || !self.shift.is_finite()
            || self.shift < 0.0
        {
            return Err(Error::InvalidConfig {
                field: "tail_exponent/shift",
                detail: String::from("tail_exponent must be positive and shift nonnegative"),
            });
        }
        Ok(())
    }

    /// Normalized expected class shares under the power law.
    pub fn class_frequencies(&self) -> Vec<f64> {
        let raw: Vec<f64> = (0..self.n_classes)
            .map(|c| fmath::powf((c + 1) as f64, -self.tail_exponent))
            .collect();
        let total: f64 = raw.iter().sum();
        raw.iter().map(|v| v / total).collect()
    }

    /// Class-conditional feature mean. The canonical pattern depends only
    /// on the class and channel; `shift` adds a fixed orthogonal offset,
    /// so both domains share the same label geometry.
    pub fn class_mean(&self, class: usize, channel: usize) -> f64 {
        let theta = core::f64::consts::PI * (class + 1) as f64 / (self.n_classes + 1) as f64;
        let canonical = MEAN_AMPLITUDE * fmath::cos(theta * (channel + 1) as f64);
        let offset = fmath::sin(theta * (channel + 1) as f64) + 0.25;
        canonical + self.shift * offset
    }
}

/// One generated image: features, dense labels, caption tokens.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthImage {
    /// `[h × w × raw_channels]`
    pub image: Tensor,
    pub labels: LabelMap,
    /// Sorted list of distinct classes present in the label map.
    pub caption: Vec<usize>,
}

/// Generate `spec.n_images` labeled images, one RNG stream per image
/// starting at `stream_offset`.
fn generate_streams(spec: &DomainSpec, stream_offset: u64, count: usize) -> Vec<SynthImage> {
    let freqs = spec.class_frequencies();
    // cumulative distribution for inverse-CDF sampling
    let mut cdf = Vec::with_capacity(freqs.len());
    let mut acc = 0.0;
    for f in &freqs {
        acc += f;
        cdf.push(acc);
    }
    let pixels = spec.height * spec.width;

    (0..count)
        .map(|i| {
            let mut rng = Rng::stream(spec.seed, stream_offset + i as u64);
            let mut labels = Vec::with_capacity(pixels);
            for _ in 0..pixels {
                let u = rng.next_f64();
                let class = cdf.iter().position(|&c| u < c).unwrap_or(spec.n_classes - 1);
                labels.push(class);
            }
            let mut image = Tensor::zeros(vec![spec.height, spec.width, spec.raw_channels]);
            {
                let data = image.data_mut();
                for (p, &class) in labels.iter().enumerate() {
                    for ch in 0..spec.raw_channels {
                        data[p * spec.raw_channels + ch] =
                            spec.class_mean(class, ch) + NOISE_STD * rng.normal();
                    }
                }
            }
            let labels = LabelMap::new(spec.height, spec.width, labels).expect("valid grid");
            let caption = labels.present_classes();
            SynthImage {
                image,
                labels,
                caption,
            }
        })
        .collect()
}

/// Generate the labeled image set of one domain.
pub fn generate(spec: &DomainSpec) -> Result<Vec<SynthImage>> {
    spec.validate()?;
    Ok(generate_streams(spec, 0, spec.n_images))
}

/// Source split, target-labeled split, target-unlabeled split.
///
/// The unlabeled split keeps its ground-truth maps so evaluation can
/// score predictions on it; the trainer never reads them.
#[derive(Debug, Clone)]
pub struct SsdaDataset {
    pub source: Vec<SynthImage>,
    pub target_labeled: Vec<SynthImage>,
    pub target_unlabeled: Vec<SynthImage>,
    /// Expected class shares of the target domain.
    pub class_frequencies: Vec<f64>,
}

/// Assemble the three training streams. The source split takes
/// `source_spec.n_images` images; the target-unlabeled split takes
/// `target_spec.n_images`; the target-labeled split takes
/// `labeled_target_count` (0 is the fully unsupervised regime). Splits
/// are disjoint by construction: each draws from distinct RNG streams.
pub fn make_ssda(
    source_spec: &DomainSpec,
    target_spec: &DomainSpec,
    labeled_target_count: usize,
) -> Result<SsdaDataset> {
    source_spec.validate()?;
    target_spec.validate()?;
    if source_spec.n_classes != target_spec.n_classes {
        return Err(Error::Infeasible {
            detail: alloc::format!(
                "class counts differ: source {} vs target {}",
                source_spec.n_classes,
                target_spec.n_classes
            ),
        });
    }
    if source_spec.n_images == 0 && labeled_target_count == 0 {
        return Err(Error::Infeasible {
            detail: String::from("no labeled stream: source split and labeled target are both empty"),
        });
    }
    let source = generate_streams(source_spec, 0, source_spec.n_images);
    let target_labeled = generate_streams(target_spec, 0, labeled_target_count);
    let target_unlabeled = generate_streams(
        target_spec,
        labeled_target_count as u64,
        target_spec.n_images,
    );
    Ok(SsdaDataset {
        source,
        target_labeled,
        target_unlabeled,
        class_frequencies: target_spec.class_frequencies(),
    })
}
