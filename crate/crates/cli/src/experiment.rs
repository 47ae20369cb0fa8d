//! Shared experiment driver: dataset assembly, the training run, and
//! student evaluation on the held-back labels of the unlabeled target
//! split.

use dyce_core::metrics::{dsc, miou, ClassScores, ConfusionMatrix};
use dyce_core::synthdata::{make_ssda, SsdaDataset};
use dyce_core::trainer::{evaluate, run_training, StepReport, TrainerState};

use crate::config::ExperimentConfig;

pub struct ExperimentOutcome {
    pub state: TrainerState,
    pub confusion: ConfusionMatrix,
    pub iou: ClassScores,
    pub dice: ClassScores,
    pub first_supervised: f64,
    pub final_supervised: f64,
    pub final_consistency: f64,
    pub final_total: f64,
}

impl ExperimentOutcome {
    /// Mean IoU over the two rarest classes (the two highest class
    /// indices under the power-law frequency ordering).
    pub fn tail_miou(&self) -> f64 {
        let n = self.iou.per_class.len();
        let tail: Vec<f64> = self.iou.per_class[n.saturating_sub(2)..]
            .iter()
            .flatten()
            .copied()
            .collect();
        if tail.is_empty() {
            0.0
        } else {
            tail.iter().sum::<f64>() / tail.len() as f64
        }
    }
}

pub fn build_dataset(cfg: &ExperimentConfig) -> dyce_core::Result<SsdaDataset> {
    make_ssda(&cfg.source_spec(), &cfg.target_spec(), cfg.labeled_target)
}

/// Run the configured experiment, forwarding every step report.
pub fn run_experiment(
    cfg: &ExperimentConfig,
    dataset: &SsdaDataset,
    mut on_step: impl FnMut(&StepReport),
) -> Result<ExperimentOutcome, dyce_core::Error> {
    let model_cfg = cfg.model_config();
    let trainer_cfg = cfg
        .trainer_config()
        .expect("validated configs always map to trainer configs");
    let run = cfg.run_config();

    let mut first_supervised = None;
    let mut final_supervised = 0.0;
    let mut final_consistency = 0.0;
    let mut final_total = 0.0;
    let state = run_training(dataset, &model_cfg, trainer_cfg, &run, |report| {
        if first_supervised.is_none() {
            first_supervised = Some(report.supervised);
        }
        final_supervised = report.supervised;
        final_consistency = report.consistency;
        final_total = report.total;
        on_step(report);
    })?;

    let confusion = evaluate(
        &state.student,
        &dataset.target_unlabeled,
        &model_cfg,
        cfg.attention,
        cfg.language,
    )?;
    let iou = miou(&confusion)?;
    let dice = dsc(&confusion)?;
    Ok(ExperimentOutcome {
        state,
        confusion,
        iou,
        dice,
        first_supervised: first_supervised.unwrap_or(0.0),
        final_supervised,
        final_consistency,
        final_total,
    })
}
