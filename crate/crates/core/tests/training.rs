//! End-to-end behavior of the training loop on small synthetic tasks.

use dyce_core::losses::LossMode;
use dyce_core::model::ModelConfig;
use dyce_core::synthdata::{make_ssda, DomainSpec};
use dyce_core::trainer::{
    evaluate_probmaps, run_training, RunConfig, TrainerConfig,
};
use dyce_core::model::AttentionKind;

fn task() -> (dyce_core::synthdata::SsdaDataset, ModelConfig) {
    let src = DomainSpec {
        seed: 11,
        height: 4,
        width: 4,
        raw_channels: 3,
        n_classes: 3,
        tail_exponent: 1.0,
        shift: 0.0,
        n_images: 12,
    };
    let tgt = DomainSpec {
        seed: 12,
        shift: 0.3,
        n_images: 12,
        ..src
    };
    let dataset = make_ssda(&src, &tgt, 4).unwrap();
    let cfg = ModelConfig {
        raw_channels: 3,
        channels: 6,
        vocab: 3,
        n_tokens: 3,
        n_classes: 3,
    };
    (dataset, cfg)
}

#[test]
fn two_hundred_steps_halve_the_supervised_loss() {
    let (dataset, model_cfg) = task();
    let trainer_cfg = TrainerConfig {
        base_lr: 0.25,
        mode: LossMode::Ce,
        lambda_ct: 0.0,
        ..TrainerConfig::default()
    };
    let run = RunConfig {
        steps: 200,
        batch_labeled: 6,
        batch_unlabeled: 0,
        seed: 5,
        language_on: true,
    };
    let mut first = None;
    let mut last = 0.0;
    run_training(&dataset, &model_cfg, trainer_cfg, &run, |report| {
        if first.is_none() {
            first = Some(report.supervised);
        }
        last = report.supervised;
    })
    .unwrap();
    let first = first.unwrap();
    assert!(
        last <= 0.5 * first,
        "supervised loss went {first} -> {last}, expected at least a 50% drop"
    );
}

#[test]
fn probability_maps_stay_normalized_through_training() {
    let (dataset, model_cfg) = task();
    let trainer_cfg = TrainerConfig {
        base_lr: 0.3,
        ..TrainerConfig::default()
    };
    let run = RunConfig {
        steps: 50,
        batch_labeled: 4,
        batch_unlabeled: 4,
        seed: 9,
        language_on: true,
    };
    let state = run_training(&dataset, &model_cfg, trainer_cfg, &run, |_| {}).unwrap();
    let maps = evaluate_probmaps(
        &state.student,
        &dataset.target_unlabeled,
        &model_cfg,
        AttentionKind::Dlg,
    )
    .unwrap();
    for pm in maps {
        for p in 0..pm.n_pixels() {
            let sum: f64 = pm.pixel(p).iter().sum();
            assert!((sum - 1.0).abs() < 1e-12);
        }
    }
}

#[test]
fn frozen_teacher_never_receives_gradients() {
    let (dataset, model_cfg) = task();
    let trainer_cfg = TrainerConfig {
        base_lr: 0.5,
        alpha: 1.0, // EMA freeze: any teacher movement would be a gradient leak
        ..TrainerConfig::default()
    };
    let run = RunConfig {
        steps: 20,
        batch_labeled: 4,
        batch_unlabeled: 4,
        seed: 13,
        language_on: true,
    };
    let mut state =
        dyce_core::trainer::TrainerState::init(&model_cfg, trainer_cfg, run.seed).unwrap();
    let teacher_initial = state.teacher.clone();
    let mut sampler =
        dyce_core::trainer::BatchSampler::new(&dataset, run.batch_labeled, run.batch_unlabeled, run.seed);
    for _ in 0..run.steps {
        let (l, u) = sampler.next_indices();
        let batch = dyce_core::trainer::assemble_batch(&dataset, &l, &u, model_cfg.n_tokens, true);
        dyce_core::trainer::train_step(&mut state, &batch).unwrap();
    }
    assert_ne!(state.student, teacher_initial); // the student did move
    assert_eq!(state.teacher, teacher_initial); // the teacher did not, bitwise
}
