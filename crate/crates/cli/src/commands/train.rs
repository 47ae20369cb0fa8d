//! `dyce train`: one experiment, three artifacts — a JSON-lines run log,
//! a final checkpoint, and a metrics CSV.

use std::path::Path;
use std::process::ExitCode;
use std::time::Instant;

use crate::config::{resolved_pairs, ExperimentConfig};
use crate::experiment::{build_dataset, run_experiment};
use crate::io::{export_dataset, save_checkpoint, write_metrics_csv, RunLog};
use crate::AppError;

pub fn run(config_path: &Path, seed_override: Option<u64>) -> Result<ExitCode, AppError> {
    let mut cfg = ExperimentConfig::from_file(config_path)?;
    if let Some(seed) = seed_override {
        cfg.seed = seed;
    }
    cfg.validate()?;

    let out_dir = Path::new(&cfg.out_dir);
    std::fs::create_dir_all(out_dir)?;
    std::fs::write(
        out_dir.join("config_resolved.json"),
        serde_json::to_string_pretty(&resolved_pairs(&cfg))?,
    )?;

    let dataset = build_dataset(&cfg)?;
    if cfg.export_data {
        export_dataset(
            &out_dir.join("dataset"),
            &dataset,
            &cfg.source_spec(),
            &cfg.target_spec(),
        )?;
    }

    let mut log = RunLog::create(&out_dir.join("runlog.jsonl"))?;
    let started = Instant::now();
    let mut log_error = None;
    let outcome = run_experiment(&cfg, &dataset, |report| {
        if log_error.is_none() {
            if let Err(e) = log.record(report, started.elapsed().as_millis()) {
                log_error = Some(e);
            }
        }
    })?;
    if let Some(e) = log_error {
        return Err(e.into());
    }
    log.finish()?;

    save_checkpoint(
        &out_dir.join("checkpoint"),
        &outcome.state.student,
        &outcome.state.teacher,
        cfg.seed,
        outcome.state.step,
    )?;
    write_metrics_csv(
        &out_dir.join("metrics.csv"),
        &outcome.confusion,
        &outcome.iou,
        &outcome.dice,
    )?;

    println!(
        "run complete: {} steps in {:.1}s  supervised {:.4} -> {:.4}  mIoU {:.4}  tail mIoU {:.4}",
        outcome.state.step,
        started.elapsed().as_secs_f64(),
        outcome.first_supervised,
        outcome.final_supervised,
        outcome.iou.mean,
        outcome.tail_miou(),
    );
    Ok(ExitCode::SUCCESS)
}
