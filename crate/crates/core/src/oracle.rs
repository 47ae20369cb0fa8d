//! Independent verification machinery.
//!
//! Two kinds of oracle keep the main implementations honest: a central
//! finite-difference gradient estimate checked against every analytic
//! gradient, and scalar-loop re-implementations of the vectorized
//! losses and the fusion forward. Nothing here shares code with the
//! paths it validates.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::dlg::{dlg_backward, dlg_forward, DlgParams, LanguageFeatures, Projection, VisionFeatures};
use crate::error::{Error, Result};
use crate::fmath;
use crate::grid::ProbMap;
use crate::losses::{
    ce_loss, consistency_loss, contrastive_loss, dyce_loss, focal_loss, wce_loss,
    BatchPrediction, ConfidenceGate, CtNormalization, DyceConfig,
};
use crate::model::{self, AttentionKind, ModelConfig, ModelParams};
use crate::rng::Rng;
use crate::tensor::Tensor;

/// Default relative step of the central difference.
pub const DEFAULT_EPS_REL: f64 = 1e-6;
/// Absolute floor of the step for near-zero coordinates.
pub const EPS_FLOOR: f64 = 1e-8;

/// Central finite differences `(f(x+εe) − f(x−εe)) / 2ε` per coordinate,
/// with `ε = max(eps_rel·|x_i|, EPS_FLOOR)`.
///
/// Errors when an evaluation comes back non-finite, naming the
/// coordinate that was being probed.
pub fn finite_diff(
    f: &mut dyn FnMut(&Tensor) -> Result<f64>,
    x: &Tensor,
    eps_rel: f64,
) -> Result<Tensor> {
    let mut grad = Tensor::zeros(x.shape().to_vec());
    let mut probe = x.clone();
    for i in 0..x.len() {
        let base = x.data()[i];
        let eps = (eps_rel * base.abs()).max(EPS_FLOOR);

        probe.data_mut()[i] = base + eps;
        let plus = f(&probe)?;
        probe.data_mut()[i] = base - eps;
        let minus = f(&probe)?;
        probe.data_mut()[i] = base;

        if !plus.is_finite() || !minus.is_finite() {
            return Err(Error::NonFinite {
                op: "finite_diff",
                index: i,
            });
        }
        grad.data_mut()[i] = (plus - minus) / (2.0 * eps);
    }
    Ok(grad)
}

/// `‖a − b‖₂ / (0.1 + max(‖a‖₂, ‖b‖₂))` — the error measure used by
/// every gradient check in the crate.
///
/// The additive offset absorbs the absolute roundoff floor of a central
/// difference (~1e-9 per coordinate at f64): structurally-zero or
/// near-zero gradients compare as agreeing instead of dividing noise by
/// noise, while a wrong gradient of any magnitude still reads as a large
/// error.
pub fn relative_error(a: &Tensor, b: &Tensor) -> f64 {
    let mut diff = 0.0;
    for (x, y) in a.data().iter().zip(b.data()) {
        diff += (x - y) * (x - y);
    }
    fmath::sqrt(diff) / (0.1 + a.norm().max(b.norm()))
}

// ---------------------------------------------------------------------------
// Scalar-loop re-implementations
// ---------------------------------------------------------------------------

/// Cross-entropy evaluated with nothing but scalar loops.
pub fn brute_force_ce(batch: &BatchPrediction) -> Result<f64> {
    let mut sum = 0.0;
    let mut count = 0usize;
    for i in 0..batch.n_instances() {
        if batch.is_ignored(i) {
            continue;
        }
        let p = batch.prob(i, batch.label(i)).max(crate::losses::PROB_CLAMP);
        sum += -fmath::ln(p);
        count += 1;
    }
    if count == 0 {
        return Err(Error::EmptyBatch);
    }
    Ok(sum / count as f64)
}

/// The literal four-step dynamic-CE procedure: per-sample CE, subset
/// selection, dynamic class weights, volume weight. No vectorization.
pub fn brute_force_dyce(batch: &BatchPrediction, cfg: &DyceConfig) -> Result<f64> {
    // (1) per-sample CE
    let mut losses: Vec<(usize, f64)> = Vec::new();
    for i in 0..batch.n_instances() {
        if batch.is_ignored(i) {
            continue;
        }
        let p = batch.prob(i, batch.label(i)).max(crate::losses::PROB_CLAMP);
        losses.push((i, -fmath::ln(p)));
    }
    if losses.is_empty() {
        return Err(Error::EmptyBatch);
    }
    // (2) the subset of hardest samples, ties toward the lower index
    let take = (fmath::ceil(cfg.hard_fraction() * losses.len() as f64) as usize)
        .max(1)
        .min(losses.len());
    let mut order = losses.clone();
    order.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    let subset: Vec<usize> = order[..take].iter().map(|(i, _)| *i).collect();
    // (3) dynamic class weights from the mined counts
    let mut f_c = vec![0usize; batch.n_classes()];
    for &i in &subset {
        f_c[batch.label(i)] += 1;
    }
    // (4) volume weight and accumulation
    let f_h = subset.len() as f64;
    let mut total = 0.0;
    for &i in &subset {
        let y = batch.label(i);
        let class_weight = 1.0 / fmath::powf(f_c[y] as f64, 1.0 - cfg.omega());
        let p = batch.prob(i, y).max(crate::losses::PROB_CLAMP);
        total += -class_weight * fmath::ln(p);
    }
    Ok(total / fmath::powf(f_h, cfg.omega()))
}

/// Contrastive alignment evaluated with scalar loops.
pub fn brute_force_contrastive(
    img_emb: &Tensor,
    txt_emb: &Tensor,
    tau: f64,
    normalize: bool,
) -> Result<f64> {
    let n = img_emb.rows();
    let d = img_emb.cols();
    let cosine = |a: &[f64], b: &[f64]| -> f64 {
        let mut dot = 0.0;
        let mut na = 0.0;
        let mut nb = 0.0;
        for k in 0..d {
            dot += a[k] * b[k];
            na += a[k] * a[k];
            nb += b[k] * b[k];
        }
        dot / (fmath::sqrt(na) * fmath::sqrt(nb))
    };
    let mut total = 0.0;
    for i in 0..n {
        let mut denom = 0.0;
        for j in 0..n {
            denom += fmath::exp(cosine(img_emb.row(i), txt_emb.row(j)) / tau);
        }
        let numer = fmath::exp(cosine(img_emb.row(i), txt_emb.row(i)) / tau);
        total += -fmath::ln(numer / denom);
    }
    Ok(if normalize { total / n as f64 } else { total })
}

/// Fusion forward composed of nothing but index arithmetic: explicit
/// loops for the projections, scores, both softmaxes, both attended
/// maps, and the final fusion.
pub fn brute_force_dlg(
    vision: &VisionFeatures,
    lang: &LanguageFeatures,
    params: &DlgParams,
) -> Result<Tensor> {
    let p = vision.n_pixels();
    let t = lang.n_tokens();
    let c = vision.channels();

    let project = |x: &Tensor, proj: &Projection| -> Vec<f64> {
        let rows = x.rows();
        let mut out = vec![0.0; rows * c];
        for r in 0..rows {
            for j in 0..c {
                let mut acc = proj.bias.data()[j];
                for k in 0..c {
                    acc += x.at(r, k) * proj.weight.at(k, j);
                }
                out[r * c + j] = acc;
            }
        }
        out
    };
    let vk = project(&vision.feat, &params.vision_key);
    let vv = project(&vision.feat, &params.vision_value);
    let lk = project(&lang.feat, &params.lang_key);
    let lv = project(&lang.feat, &params.lang_value);

    // scores
    let inv_sqrt_c = 1.0 / fmath::sqrt(c as f64);
    let mut a = vec![0.0; t * p];
    for ti in 0..t {
        for pi in 0..p {
            let mut acc = 0.0;
            for k in 0..c {
                acc += lk[ti * c + k] * vk[pi * c + k];
            }
            a[ti * p + pi] = acc * inv_sqrt_c;
        }
    }

    // softmax over pixels (per token row)
    let mut over_pixels = vec![0.0; t * p];
    for ti in 0..t {
        let mut max = f64::NEG_INFINITY;
        for pi in 0..p {
            max = max.max(a[ti * p + pi]);
        }
        let mut sum = 0.0;
        for pi in 0..p {
            let e = fmath::exp(a[ti * p + pi] - max);
            over_pixels[ti * p + pi] = e;
            sum += e;
        }
        for pi in 0..p {
            over_pixels[ti * p + pi] /= sum;
        }
    }
    // softmax over tokens (per pixel column)
    let mut over_tokens = vec![0.0; t * p];
    for pi in 0..p {
        let mut max = f64::NEG_INFINITY;
        for ti in 0..t {
            max = max.max(a[ti * p + pi]);
        }
        let mut sum = 0.0;
        for ti in 0..t {
            let e = fmath::exp(a[ti * p + pi] - max);
            over_tokens[ti * p + pi] = e;
            sum += e;
        }
        for ti in 0..t {
            over_tokens[ti * p + pi] /= sum;
        }
    }

    // attended maps
    let mut vision_attended = vec![0.0; t * c]; // token aggregates pixels
    for ti in 0..t {
        for k in 0..c {
            let mut acc = 0.0;
            for pi in 0..p {
                acc += over_pixels[ti * p + pi] * vv[pi * c + k];
            }
            vision_attended[ti * c + k] = acc;
        }
    }
    let mut lang_attended = vec![0.0; p * c]; // pixel aggregates tokens
    for pi in 0..p {
        for k in 0..c {
            let mut acc = 0.0;
            for ti in 0..t {
                acc += over_tokens[ti * p + pi] * lv[ti * c + k];
            }
            lang_attended[pi * c + k] = acc;
        }
    }

    // fuse
    let mut fm = vec![0.0; t * p];
    for ti in 0..t {
        for pi in 0..p {
            let mut acc = 0.0;
            for k in 0..c {
                acc += vision_attended[ti * c + k] * lang_attended[pi * c + k];
            }
            fm[ti * p + pi] = acc;
        }
    }
    Tensor::matrix(t, p, fm)
}

// ---------------------------------------------------------------------------
// Random desk-scale instances
// ---------------------------------------------------------------------------

/// Random batch with target probabilities bounded away from 0 and 1
/// (each entry lands in roughly `[0.04, 0.86]`), suitable for
/// finite-difference probing.
pub fn random_batch(rng: &mut Rng, s: usize, n_classes: usize) -> BatchPrediction {
    let mut probs = Vec::with_capacity(s * n_classes);
    let mut labels = Vec::with_capacity(s);
    for _ in 0..s {
        let raw: Vec<f64> = (0..n_classes).map(|_| 0.2 + rng.next_f64()).collect();
        let total: f64 = raw.iter().sum();
        probs.extend(raw.iter().map(|v| v / total));
        labels.push(rng.index(n_classes));
    }
    BatchPrediction::new(Tensor::matrix(s, n_classes, probs).unwrap(), labels).unwrap()
}

/// Random probability map with the same bounded entries.
pub fn random_prob_map(rng: &mut Rng, height: usize, width: usize, n_classes: usize) -> ProbMap {
    let pixels = height * width;
    let mut probs = Vec::with_capacity(pixels * n_classes);
    for _ in 0..pixels {
        let raw: Vec<f64> = (0..n_classes).map(|_| 0.2 + rng.next_f64()).collect();
        let total: f64 = raw.iter().sum();
        probs.extend(raw.iter().map(|v| v / total));
    }
    ProbMap::new(height, width, Tensor::matrix(pixels, n_classes, probs).unwrap()).unwrap()
}

/// Random fusion inputs and parameters at desk scale. Biases sit at
/// O(1) so relative-step probes never drop to the absolute floor, and
/// weights stay moderate so probe values remain well conditioned
/// against their gradients.
pub fn random_dlg_setup(
    rng: &mut Rng,
    h: usize,
    w: usize,
    n_tokens: usize,
    channels: usize,
) -> (VisionFeatures, LanguageFeatures, DlgParams) {
    let proj = |rng: &mut Rng| Projection {
        weight: rng.normal_tensor(vec![channels, channels], 0.4),
        bias: rng.normal_tensor(vec![channels], 0.5),
    };
    (
        VisionFeatures::new(h, w, rng.normal_tensor(vec![h * w, channels], 1.0)).unwrap(),
        LanguageFeatures::new(rng.normal_tensor(vec![n_tokens, channels], 1.0)).unwrap(),
        DlgParams {
            vision_key: proj(rng),
            vision_value: proj(rng),
            lang_key: proj(rng),
            lang_value: proj(rng),
        },
    )
}

// ---------------------------------------------------------------------------
// The gradient-oracle suite
// ---------------------------------------------------------------------------

/// Worst-case relative error of one checked component.
#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub component: &'static str,
    pub instances: usize,
    pub worst_rel: f64,
    pub tolerance: f64,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.worst_rel <= self.tolerance
    }
}

/// Deliberate defects for exercising the failure path of the suite.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Fault {
    /// Flip the sign of the dynamic-CE analytic gradient.
    DyceSignFlip,
}

/// Loss-level tolerance of the suite.
pub const LOSS_TOLERANCE: f64 = 1e-6;
/// End-to-end (full model) tolerance of the suite.
pub const MODEL_TOLERANCE: f64 = 1e-5;

/// Names of every component the suite checks, in report order.
pub const CHECKED_COMPONENTS: [&str; 8] = [
    "ce",
    "wce",
    "focal",
    "dyce",
    "contrastive",
    "consistency",
    "dlg_forward",
    "model_forward",
];

/// Run the full gradient-oracle suite: for each component, `instances`
/// random desk-scale problems, analytic gradient against central finite
/// differences. Returns one report per component, in
/// [`CHECKED_COMPONENTS`] order.
pub fn run_gradcheck_suite(
    seed: u64,
    instances: usize,
    inject: Option<Fault>,
) -> Result<Vec<GradCheckReport>> {
    let mut reports = Vec::new();
    let mut rng = Rng::stream(seed, 0x0AC1E);

    // -- probability-space losses ------------------------------------------
    let check_prob_loss = |name: &'static str,
                               rng: &mut Rng,
                               eval: &dyn Fn(&BatchPrediction) -> Result<(f64, Tensor)>|
     -> Result<GradCheckReport> {
        let mut worst: f64 = 0.0;
        for _ in 0..instances {
            let s = 2 + rng.index(7); // S ≤ 8
            let n_classes = 2 + rng.index(4); // N_C ≤ 5
            let batch = random_batch(rng, s, n_classes);
            let (_, analytic) = eval(&batch)?;
            let labels = batch.labels().to_vec();
            let mut f = |probs: &Tensor| -> Result<f64> {
                let perturbed = BatchPrediction::unnormalized(probs.clone(), labels.clone())?;
                eval(&perturbed).map(|(v, _)| v)
            };
            let numeric = finite_diff(&mut f, batch.probs(), DEFAULT_EPS_REL)?;
            worst = worst.max(relative_error(&analytic, &numeric));
        }
        Ok(GradCheckReport {
            component: name,
            instances,
            worst_rel: worst,
            tolerance: LOSS_TOLERANCE,
        })
    };

    reports.push(check_prob_loss("ce", &mut rng, &|b| {
        ce_loss(b).map(|r| (r.value, r.grad_probs))
    })?);

    let wce_weights_seed = rng.next_u64();
    reports.push(check_prob_loss("wce", &mut rng, &move |b| {
        let mut wrng = Rng::stream(wce_weights_seed, b.n_classes() as u64);
        let weights: Vec<f64> = (0..b.n_classes()).map(|_| 0.5 + 2.0 * wrng.next_f64()).collect();
        wce_loss(b, &weights).map(|r| (r.value, r.grad_probs))
    })?);

    let gamma_seed = rng.next_u64();
    reports.push(check_prob_loss("focal", &mut rng, &move |b| {
        let mut grng = Rng::stream(gamma_seed, (b.n_instances() * 31 + b.n_classes()) as u64);
        let gamma = [0.0, 0.5, 1.0, 2.0, 5.0][grng.index(5)];
        focal_loss(b, gamma).map(|r| (r.value, r.grad_probs))
    })?);

    let dyce_seed = rng.next_u64();
    let flip = if inject == Some(Fault::DyceSignFlip) { -1.0 } else { 1.0 };
    reports.push(check_prob_loss("dyce", &mut rng, &move |b| {
        let mut drng = Rng::stream(dyce_seed, (b.n_instances() * 17 + b.n_classes()) as u64);
        let omega = 0.1 + 0.8 * drng.next_f64();
        let hard_fraction = 0.3 + 0.7 * drng.next_f64();
        let cfg = DyceConfig::new(omega, hard_fraction).expect("in range");
        dyce_loss(b, &cfg).map(|r| (r.value, r.grad_probs.scaled(flip)))
    })?);

    // -- contrastive: gradients w.r.t. both embedding sets ------------------
    {
        let mut worst: f64 = 0.0;
        for _ in 0..instances {
            let n = 2 + rng.index(3);
            let d = 2 + rng.index(4);
            let img = rng.normal_tensor(vec![n, d], 1.0);
            let txt = rng.normal_tensor(vec![n, d], 1.0);
            let tau = 0.3 + rng.next_f64();
            let result = contrastive_loss(&img, &txt, tau, false)?;

            let txt_fixed = txt.clone();
            let mut f_img = |x: &Tensor| -> Result<f64> {
                contrastive_loss(x, &txt_fixed, tau, false).map(|r| r.value)
            };
            let numeric_img = finite_diff(&mut f_img, &img, DEFAULT_EPS_REL)?;
            worst = worst.max(relative_error(&result.grad_img, &numeric_img));

            let img_fixed = img.clone();
            let mut f_txt = |x: &Tensor| -> Result<f64> {
                contrastive_loss(&img_fixed, x, tau, false).map(|r| r.value)
            };
            let numeric_txt = finite_diff(&mut f_txt, &txt, DEFAULT_EPS_REL)?;
            worst = worst.max(relative_error(&result.grad_txt, &numeric_txt));
        }
        reports.push(GradCheckReport {
            component: "contrastive",
            instances,
            worst_rel: worst,
            tolerance: LOSS_TOLERANCE,
        });
    }

    // -- consistency: gradient w.r.t. student probabilities -----------------
    {
        let mut worst: f64 = 0.0;
        let mut checked = 0;
        while checked < instances {
            let h = 1 + rng.index(3);
            let w = 1 + rng.index(3);
            let n_classes = 2 + rng.index(3);
            let student = random_prob_map(&mut rng, h, w, n_classes);
            let teacher = random_prob_map(&mut rng, h, w, n_classes);
            // a threshold low enough that some pixels pass the teacher gate
            let th = 0.2 + 0.3 * rng.next_f64();
            let result = consistency_loss(
                core::slice::from_ref(&student),
                core::slice::from_ref(&teacher),
                th,
                ConfidenceGate::Teacher,
                CtNormalization::MaskedMean,
            )?;
            if result.active_pixels == 0 {
                continue;
            }
            checked += 1;
            let teacher_fixed = teacher.clone();
            let (sh, sw) = (student.height(), student.width());
            let mut f = |probs: &Tensor| -> Result<f64> {
                let pm = ProbMap::unnormalized(sh, sw, probs.clone())?;
                consistency_loss(
                    core::slice::from_ref(&pm),
                    core::slice::from_ref(&teacher_fixed),
                    th,
                    ConfidenceGate::Teacher,
                    CtNormalization::MaskedMean,
                )
                .map(|r| r.value)
            };
            let numeric = finite_diff(&mut f, student.probs(), DEFAULT_EPS_REL)?;
            worst = worst.max(relative_error(&result.grads[0], &numeric));
        }
        reports.push(GradCheckReport {
            component: "consistency",
            instances,
            worst_rel: worst,
            tolerance: LOSS_TOLERANCE,
        });
    }

    // -- fusion backward: all parameters and both inputs --------------------
    // Composite forwards accumulate enough arithmetic that probe-value
    // roundoff dominates a 1e-6 step; 1e-5 keeps truncation negligible
    // (O(h^2)) while cutting the roundoff term tenfold.
    let composite_eps = 1e-5;
    {
        let mut worst: f64 = 0.0;
        for _ in 0..instances {
            let h = 1 + rng.index(3);
            let w = 1 + rng.index(3);
            let n_tokens = 1 + rng.index(4);
            let channels = 2 + rng.index(5);
            let (vision, lang, params) = random_dlg_setup(&mut rng, h, w, n_tokens, channels);
            // scalar probe: fixed random linear functional of the fused map
            let probe = rng.normal_tensor(vec![n_tokens, h * w], 1.0);
            let fwd = dlg_forward(&vision, &lang, &params)?;
            let analytic = dlg_backward(&fwd.cache, &probe)?;

            let objective = |v: &VisionFeatures, l: &LanguageFeatures, p: &DlgParams| -> Result<f64> {
                let out = dlg_forward(v, l, p)?;
                Ok(out
                    .multimodal
                    .feat
                    .data()
                    .iter()
                    .zip(probe.data())
                    .map(|(a, b)| a * b)
                    .sum())
            };

            // inputs
            let mut f_vision = |x: &Tensor| {
                objective(
                    &VisionFeatures::new(h, w, x.clone())?,
                    &lang,
                    &params,
                )
            };
            let numeric = finite_diff(&mut f_vision, &vision.feat, composite_eps)?;
            worst = worst.max(relative_error(&analytic.d_vision, &numeric));

            let mut f_lang = |x: &Tensor| {
                objective(&vision, &LanguageFeatures::new(x.clone())?, &params)
            };
            let numeric = finite_diff(&mut f_lang, &lang.feat, composite_eps)?;
            worst = worst.max(relative_error(&analytic.d_lang, &numeric));

            // every projection weight and bias
            type Access = (
                fn(&DlgParams) -> &Projection,
                fn(&mut DlgParams) -> &mut Projection,
            );
            let accessors: [Access; 4] = [
                (|p| &p.vision_key, |p| &mut p.vision_key),
                (|p| &p.vision_value, |p| &mut p.vision_value),
                (|p| &p.lang_key, |p| &mut p.lang_key),
                (|p| &p.lang_value, |p| &mut p.lang_value),
            ];
            for (get, get_mut) in accessors {
                for weight_part in [true, false] {
                    let base = get(&params);
                    let target = if weight_part { &base.weight } else { &base.bias };
                    let mut f = |x: &Tensor| {
                        let mut p = params.clone();
                        let proj = get_mut(&mut p);
                        if weight_part {
                            proj.weight = x.clone();
                        } else {
                            proj.bias = x.clone();
                        }
                        objective(&vision, &lang, &p)
                    };
                    let numeric = finite_diff(&mut f, target, composite_eps)?;
                    let grads = get(&analytic.params);
                    let analytic_part = if weight_part { &grads.weight } else { &grads.bias };
                    worst = worst.max(relative_error(analytic_part, &numeric));
                }
            }
        }
        reports.push(GradCheckReport {
            component: "dlg_forward",
            instances,
            worst_rel: worst,
            tolerance: LOSS_TOLERANCE,
        });
    }

    // -- full model: CE-of-forward against every trainable tensor -----------
    {
        let mut worst: f64 = 0.0;
        for _ in 0..instances {
            let cfg = ModelConfig {
                raw_channels: 1 + rng.index(3),
                channels: 2 + rng.index(4),
                vocab: 4,
                n_tokens: 1 + rng.index(3),
                n_classes: 2 + rng.index(3),
            };
            let h = 1 + rng.index(3);
            let w = 1 + rng.index(2);
            let params = ModelParams::init(&cfg, rng.next_u64());
            let image = rng.normal_tensor(vec![h, w, cfg.raw_channels], 1.0);
            let tokens: Vec<usize> = (0..cfg.n_tokens).map(|_| rng.index(cfg.vocab)).collect();
            let labels: Vec<usize> = (0..h * w).map(|_| rng.index(cfg.n_classes)).collect();

            let objective = |p: &ModelParams| -> Result<f64> {
                let pass = model::forward(&image, &tokens, p, AttentionKind::Dlg)?;
                let batch =
                    BatchPrediction::new(pass.probs.probs().clone(), labels.clone())?;
                ce_loss(&batch).map(|r| r.value)
            };

            let pass = model::forward(&image, &tokens, &params, AttentionKind::Dlg)?;
            let batch = BatchPrediction::new(pass.probs.probs().clone(), labels.clone())?;
            let loss = ce_loss(&batch)?;
            let analytic = model::backward(&pass.cache, &loss.grad_probs, &params)?;

            for (name, analytic_tensor) in analytic.tensors() {
                let mut f = |x: &Tensor| -> Result<f64> {
                    let mut p = params.clone();
                    for (n, t) in p.tensors_mut() {
                        if n == name {
                            *t = x.clone();
                        }
                    }
                    objective(&p)
                };
                let base = params
                    .tensors()
                    .into_iter()
                    .find(|(n, _)| *n == name)
                    .map(|(_, t)| t.clone())
                    .expect("trainable tensor exists on the model");
                let numeric = finite_diff(&mut f, &base, composite_eps)?;
                worst = worst.max(relative_error(analytic_tensor, &numeric));
            }
        }
        reports.push(GradCheckReport {
            component: "model_forward",
            instances,
            worst_rel: worst,
            tolerance: MODEL_TOLERANCE,
        });
    }

    Ok(reports)
}

/// Render one line per component, as the CLI prints it.
pub fn format_report_line(r: &GradCheckReport) -> String {
    format!(
        "{} {:<14} worst_rel {:>12.3e}  (tol {:.0e}, {} instances)",
        if r.passed() { "PASS" } else { "FAIL" },
        r.component,
        r.worst_rel,
        r.tolerance,
        r.instances
    )
}
