//! Student-teacher training loop for semi-supervised domain adaptation.
//!
//! Each step takes a supervised loss (CE or DyCE) on the labeled batch
//! drawn from source ∪ labeled-target, plus a weighted consistency loss
//! against confidence-gated teacher pseudo-labels on the unlabeled
//! batch. The student descends its gradient; the teacher follows the
//! student through an exponential moving average and never receives
//! gradients of its own.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::fmath;
use crate::grid::{LabelMap, ProbMap};
use crate::losses::{
    consistency_loss, dyce_on_subset, flatten_pixels, mine_hard_subset, ConfidenceGate,
    CtNormalization, DyceConfig, LossMode,
};
use crate::metrics::{confusion, ConfusionMatrix};
use crate::model::{backward, forward, AttentionKind, ModelConfig, ModelGrads, ModelParams};
use crate::rng::Rng;
use crate::synthdata::{SsdaDataset, SynthImage};
use crate::tensor::Tensor;

/// Hyperparameters of the loop. `alpha` and `th` default to the usual
/// mean-teacher settings (0.999, 0.95); `omega`, `hard_fraction` and
/// `lambda_ct` have no reference values and are tuning knobs.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainerConfig {
    /// EMA momentum of the teacher.
    pub alpha: f64,
    /// Confidence threshold of the consistency gate.
    pub th: f64,
    pub base_lr: f64,
    /// Steps over which the learning rate decays by one factor of 0.9.
    pub decay_interval: u64,
    /// Weight of the consistency term in the combined objective.
    pub lambda_ct: f64,
    pub mode: LossMode,
    pub dyce: DyceConfig,
    pub gate: ConfidenceGate,
    pub ct_normalization: CtNormalization,
    /// Plain SGD by default; set nonzero to enable the optional extras.
    pub momentum: f64,
    pub weight_decay: f64,
    pub attention: AttentionKind,
}

impl Default for TrainerConfig {
    fn default() -> Self {
        Self {
            alpha: 0.999,
            th: 0.95,
            base_lr: 1e-4,
            decay_interval: 1000,
            lambda_ct: 1.0,
            mode: LossMode::DyCe,
            dyce: DyceConfig::new(0.5, 0.5).expect("valid defaults"),
            gate: ConfidenceGate::Teacher,
            ct_normalization: CtNormalization::MaskedMean,
            momentum: 0.0,
            weight_decay: 0.0,
            attention: AttentionKind::Dlg,
        }
    }
}

impl TrainerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::InvalidConfig {
                field: "alpha",
                detail: alloc::format!("must lie in [0, 1], got {}", self.alpha),
            });
        }
        if !(self.th > 0.0 && self.th < 1.0) {
            return Err(Error::InvalidConfig {
                field: "th",
                detail: alloc::format!("must lie in (0, 1), got {}", self.th),
            });
        }
        if !self.base_lr.is_finite()
            || self.base_lr < 0.0
            || !self.lambda_ct.is_finite()
            || self.lambda_ct < 0.0
        {
            return Err(Error::InvalidConfig {
                field: "base_lr/lambda_ct",
                detail: String::from("learning rate and lambda_ct must be nonnegative"),
            });
        }
        if self.decay_interval == 0 {
            return Err(Error::InvalidConfig {
                field: "decay_interval",
                detail: String::from("must be positive"),
            });
        }
        Ok(())
    }
}

/// Student and teacher parameters plus the step counter.
#[derive(Debug, Clone)]
pub struct TrainerState {
    pub student: ModelParams,
    pub teacher: ModelParams,
    pub step: u64,
    pub cfg: TrainerConfig,
    velocity: Option<ModelGrads>,
}

impl TrainerState {
    /// Student and teacher share an architecture but are initialized from
    /// two distinct seeds.
    pub fn init(model_cfg: &ModelConfig, cfg: TrainerConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            student: ModelParams::init(model_cfg, seed),
            teacher: ModelParams::init(model_cfg, seed ^ 0x5EED_7EAC_4E12_0001),
            step: 0,
            cfg,
            velocity: None,
        })
    }
}

/// One labeled sample: image, caption tokens, dense labels.
#[derive(Debug, Clone)]
pub struct LabeledSample<'a> {
    pub image: &'a Tensor,
    pub tokens: Vec<usize>,
    pub labels: &'a LabelMap,
}

/// One unlabeled sample: image and caption tokens only.
#[derive(Debug, Clone)]
pub struct UnlabeledSample<'a> {
    pub image: &'a Tensor,
    pub tokens: Vec<usize>,
}

/// The two streams of one step. Either side may be empty, not both.
#[derive(Debug, Clone, Default)]
pub struct SsdaBatch<'a> {
    pub labeled: Vec<LabeledSample<'a>>,
    pub unlabeled: Vec<UnlabeledSample<'a>>,
}

/// Per-step record for the run log.
#[derive(Debug, Clone, Serialize)]
pub struct StepReport {
    pub step: u64,
    pub lr: f64,
    pub total: f64,
    pub supervised: f64,
    pub consistency: f64,
    /// Mined-subset size under DyCE.
    pub f_h: Option<usize>,
    /// Mined per-class counts under DyCE.
    pub f_c: Option<Vec<usize>>,
    pub clamp_count: usize,
    /// Unlabeled pixels that passed the confidence gate.
    pub ct_active_pixels: usize,
}

/// Exponentially decayed learning rate: `base_lr · 0.9^(step/interval)`.
pub fn lr_schedule(step: u64, base_lr: f64, decay_interval: u64) -> f64 {
    base_lr * fmath::powf(0.9, step as f64 / decay_interval as f64)
}

/// Teacher update: `θ_T ← α·θ_T + (1−α)·θ_S`, elementwise over every
/// parameter tensor. The boundary values are exact: `α = 1` leaves the
/// teacher bitwise unchanged, `α = 0` copies the student.
pub fn ema_update(teacher: &mut ModelParams, student: &ModelParams, alpha: f64) {
    if alpha == 1.0 {
        return;
    }
    if alpha == 0.0 {
        *teacher = student.clone();
        return;
    }
    let student_tensors = student.tensors();
    for ((_, t), (_, s)) in teacher.tensors_mut().into_iter().zip(student_tensors) {
        t.lerp_assign(s, alpha);
    }
}

/// One optimization step over an assembled batch.
///
/// `total = supervised + λ_ct · consistency`; the teacher forward runs
/// without gradient tracking, the student takes a (momentum/weight-decay
/// optional) SGD step, then the teacher EMA fires and the counter
/// advances.
pub fn train_step(state: &mut TrainerState, batch: &SsdaBatch) -> Result<StepReport> {
    if batch.labeled.is_empty() && batch.unlabeled.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let lr = lr_schedule(state.step, state.cfg.base_lr, state.cfg.decay_interval);
    let mut grads = ModelGrads::zeros_like(&state.student);
    let mut supervised = 0.0;
    let mut consistency = 0.0;
    let mut clamp_count = 0;
    let mut f_h = None;
    let mut f_c = None;
    let mut ct_active = 0;

    // Supervised term over the labeled stream: every pixel of the batch
    // is one instance, mined jointly under DyCE.
    if !batch.labeled.is_empty() {
        let mut passes = Vec::with_capacity(batch.labeled.len());
        let mut prob_maps = Vec::with_capacity(batch.labeled.len());
        let mut label_maps = Vec::with_capacity(batch.labeled.len());
        for sample in &batch.labeled {
            let pass = forward(sample.image, &sample.tokens, &state.student, state.cfg.attention)?;
            prob_maps.push(pass.probs.clone());
            label_maps.push(sample.labels.clone());
            passes.push(pass);
        }
        let flat = flatten_pixels(&prob_maps, &label_maps)?;
        let loss = match state.cfg.mode {
            LossMode::Ce => crate::losses::ce_loss(&flat)?,
            LossMode::DyCe => {
                let subset = mine_hard_subset(&flat, state.cfg.dyce.hard_fraction())?;
                dyce_on_subset(&flat, &state.cfg.dyce, &subset)?
            }
        };
        supervised = loss.value;
        clamp_count += loss.diagnostics.clamp_count;
        f_h = loss.diagnostics.f_h;
        f_c = loss.diagnostics.f_c.clone();

        let mut row = 0;
        for (pass, pm) in passes.iter().zip(&prob_maps) {
            let pixels = pm.n_pixels();
            let n_classes = pm.n_classes();
            let mut d_probs = Tensor::zeros(vec![pixels, n_classes]);
            d_probs
                .data_mut()
                .copy_from_slice(
                    &loss.grad_probs.data()[row * n_classes..(row + pixels) * n_classes],
                );
            row += pixels;
            let sample_grads = backward(&pass.cache, &d_probs, &state.student)?;
            grads.add_scaled_assign(&sample_grads, 1.0);
        }
    }

    // Consistency term over the unlabeled stream; the teacher forward is
    // detached (no cache is kept, nothing propagates back).
    if !batch.unlabeled.is_empty() && state.cfg.lambda_ct > 0.0 {
        let mut student_passes = Vec::with_capacity(batch.unlabeled.len());
        let mut student_maps = Vec::with_capacity(batch.unlabeled.len());
        let mut teacher_maps = Vec::with_capacity(batch.unlabeled.len());
        for sample in &batch.unlabeled {
            let s_pass = forward(sample.image, &sample.tokens, &state.student, state.cfg.attention)?;
            let t_pass = forward(sample.image, &sample.tokens, &state.teacher, state.cfg.attention)?;
            student_maps.push(s_pass.probs.clone());
            teacher_maps.push(t_pass.probs);
            student_passes.push(s_pass);
        }
        let ct = consistency_loss(
            &student_maps,
            &teacher_maps,
            state.cfg.th,
            state.cfg.gate,
            state.cfg.ct_normalization,
        )?;
        consistency = ct.value;
        clamp_count += ct.clamp_count;
        ct_active = ct.active_pixels;
        for (pass, d_probs) in student_passes.iter().zip(&ct.grads) {
            let sample_grads = backward(&pass.cache, d_probs, &state.student)?;
            grads.add_scaled_assign(&sample_grads, state.cfg.lambda_ct);
        }
    }

    if let Some(name) = grads.first_non_finite() {
        return Err(Error::NonFiniteGradient { tensor: name });
    }

    // Student descent. Weight decay and momentum are off by default.
    if state.cfg.weight_decay > 0.0 {
        grads.dlg.add_scaled_assign(&state.student.dlg, state.cfg.weight_decay);
        grads
            .decoder
            .add_scaled_assign(&state.student.decoder, state.cfg.weight_decay);
    }
    apply_sgd(state, grads);

    ema_update(&mut state.teacher, &state.student, state.cfg.alpha);
    state.step += 1;

    Ok(StepReport {
        step: state.step,
        lr,
        total: supervised + state.cfg.lambda_ct * consistency,
        supervised,
        consistency,
        f_h,
        f_c,
        clamp_count,
        ct_active_pixels: ct_active,
    })
}

fn apply_sgd(state: &mut TrainerState, grads: ModelGrads) {
    let lr = lr_schedule(state.step, state.cfg.base_lr, state.cfg.decay_interval);
    if state.cfg.momentum > 0.0 {
        // v ← m·v + g ; θ ← θ − lr·v
        let velocity = state
            .velocity
            .get_or_insert_with(|| ModelGrads::zeros_like(&state.student));
        let decayed = velocity.clone();
        *velocity = grads;
        velocity.add_scaled_assign(&decayed, state.cfg.momentum);
        let v = velocity.clone();
        state.student.dlg.add_scaled_assign(&v.dlg, -lr);
        state.student.decoder.add_scaled_assign(&v.decoder, -lr);
    } else {
        state.student.dlg.add_scaled_assign(&grads.dlg, -lr);
        state.student.decoder.add_scaled_assign(&grads.decoder, -lr);
    }
}

/// Deterministic batch assembly: labeled indices draw uniformly from the
/// concatenation of source and labeled-target, unlabeled indices from
/// the unlabeled split.
pub struct BatchSampler {
    rng: Rng,
    n_source: usize,
    n_target_labeled: usize,
    n_unlabeled: usize,
    pub batch_labeled: usize,
    pub batch_unlabeled: usize,
}

impl BatchSampler {
    pub fn new(
        dataset: &SsdaDataset,
        batch_labeled: usize,
        batch_unlabeled: usize,
        seed: u64,
    ) -> Self {
        Self {
            rng: Rng::stream(seed, 0x5A3F),
            n_source: dataset.source.len(),
            n_target_labeled: dataset.target_labeled.len(),
            n_unlabeled: dataset.target_unlabeled.len(),
            batch_labeled,
            batch_unlabeled,
        }
    }

    /// Index pairs for the next step: `(labeled, unlabeled)` where a
    /// labeled index below `n_source` points into the source split.
    pub fn next_indices(&mut self) -> (Vec<usize>, Vec<usize>) {
        let pool = self.n_source + self.n_target_labeled;
        let labeled = if pool == 0 {
            Vec::new()
        } else {
            (0..self.batch_labeled).map(|_| self.rng.index(pool)).collect()
        };
        let unlabeled = if self.n_unlabeled == 0 {
            Vec::new()
        } else {
            (0..self.batch_unlabeled)
                .map(|_| self.rng.index(self.n_unlabeled))
                .collect()
        };
        (labeled, unlabeled)
    }
}

/// Pad or truncate a caption to the model's fixed token count by cycling
/// the present classes; an empty caption falls back to token 0.
pub fn fixed_length_caption(caption: &[usize], n_tokens: usize) -> Vec<usize> {
    if caption.is_empty() {
        return vec![0; n_tokens];
    }
    (0..n_tokens).map(|i| caption[i % caption.len()]).collect()
}

/// Assemble the step batch from sampled indices.
pub fn assemble_batch<'a>(
    dataset: &'a SsdaDataset,
    labeled_idx: &[usize],
    unlabeled_idx: &[usize],
    n_tokens: usize,
    language_on: bool,
) -> SsdaBatch<'a> {
    let caption_of = |img: &SynthImage| -> Vec<usize> {
        if language_on {
            fixed_length_caption(&img.caption, n_tokens)
        } else {
            vec![0; n_tokens]
        }
    };
    let labeled = labeled_idx
        .iter()
        .map(|&i| {
            let img = if i < dataset.source.len() {
                &dataset.source[i]
            } else {
                &dataset.target_labeled[i - dataset.source.len()]
            };
            LabeledSample {
                image: &img.image,
                tokens: caption_of(img),
                labels: &img.labels,
            }
        })
        .collect();
    let unlabeled = unlabeled_idx
        .iter()
        .map(|&i| {
            let img = &dataset.target_unlabeled[i];
            UnlabeledSample {
                image: &img.image,
                tokens: caption_of(img),
            }
        })
        .collect();
    SsdaBatch { labeled, unlabeled }
}

/// Everything a full run needs beyond the trainer config.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub steps: u64,
    pub batch_labeled: usize,
    pub batch_unlabeled: usize,
    pub seed: u64,
    /// Replace captions with a constant token (ablation of the language
    /// input) when false.
    pub language_on: bool,
}

/// Run the loop over a dataset, reporting each step to the callback.
pub fn run_training(
    dataset: &SsdaDataset,
    model_cfg: &ModelConfig,
    trainer_cfg: TrainerConfig,
    run: &RunConfig,
    mut on_step: impl FnMut(&StepReport),
) -> Result<TrainerState> {
    let mut state = TrainerState::init(model_cfg, trainer_cfg, run.seed)?;
    let mut sampler = BatchSampler::new(dataset, run.batch_labeled, run.batch_unlabeled, run.seed);
    for _ in 0..run.steps {
        let (labeled_idx, unlabeled_idx) = sampler.next_indices();
        let batch = assemble_batch(
            dataset,
            &labeled_idx,
            &unlabeled_idx,
            model_cfg.n_tokens,
            run.language_on,
        );
        let report = train_step(&mut state, &batch)?;
        on_step(&report);
    }
    Ok(state)
}

/// Hard-prediction confusion matrix of `params` over labeled images.
pub fn evaluate(
    params: &ModelParams,
    images: &[SynthImage],
    model_cfg: &ModelConfig,
    attention: AttentionKind,
    language_on: bool,
) -> Result<ConfusionMatrix> {
    let mut preds: Vec<LabelMap> = Vec::with_capacity(images.len());
    let mut gts: Vec<LabelMap> = Vec::with_capacity(images.len());
    for img in images {
        let tokens = if language_on {
            fixed_length_caption(&img.caption, model_cfg.n_tokens)
        } else {
            vec![0; model_cfg.n_tokens]
        };
        let pass = forward(&img.image, &tokens, params, attention)?;
        preds.push(pass.probs.to_label_map());
        gts.push(img.labels.clone());
    }
    confusion(&preds, &gts, model_cfg.n_classes)
}

/// Teacher evaluation is the common default at test time; the student is
/// available for ablation.
pub fn evaluate_probmaps(
    params: &ModelParams,
    images: &[SynthImage],
    model_cfg: &ModelConfig,
    attention: AttentionKind,
) -> Result<Vec<ProbMap>> {
    images
        .iter()
        .map(|img| {
            let tokens = fixed_length_caption(&img.caption, model_cfg.n_tokens);
            forward(&img.image, &tokens, params, attention).map(|p| p.probs)
        })
        .collect()
}
