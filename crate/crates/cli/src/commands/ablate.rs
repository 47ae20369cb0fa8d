//! `dyce ablate`: run every sweep configuration and write one CSV row
//! per configuration. Rows run in parallel, capped by `DYCE_THREADS`;
//! each row is single-threaded, so results do not depend on scheduling.

use std::path::Path;
use std::process::ExitCode;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use crate::config::{parse_sweep, ExperimentConfig};
use crate::experiment::{build_dataset, run_experiment};
use crate::AppError;

pub const CSV_HEADER: &str =
    "config,miou,tail_miou,mean_dice,first_supervised,final_supervised,final_consistency\n";

fn csv_quote(field: &str) -> String {
    if field.contains(',') || field.contains('"') {
        format!("\"{}\"", field.replace('"', "\"\""))
    } else {
        field.to_string()
    }
}

fn sweep_threads(rows: usize) -> usize {
    let available = std::thread::available_parallelism().map_or(1, |n| n.get());
    let cap = std::env::var("DYCE_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or(available);
    cap.min(rows).max(1)
}

pub fn run(config_path: &Path, sweep_path: &Path, out_path: &Path) -> Result<ExitCode, AppError> {
    let base = ExperimentConfig::from_file(config_path)?;
    let sweep_text = std::fs::read_to_string(sweep_path)?;
    let rows = parse_sweep(&sweep_text)?;

    // Resolve every configuration up front so a bad row fails fast.
    let mut configs = Vec::with_capacity(rows.len());
    for row in &rows {
        let mut cfg = base.clone();
        for (key, value) in &row.overrides {
            cfg.apply_override(key, value)?;
        }
        cfg.validate()?;
        configs.push(cfg);
    }

    let results: Mutex<Vec<Option<Result<String, String>>>> =
        Mutex::new(vec![None; configs.len()]);
    if !configs.is_empty() {
        let next = AtomicUsize::new(0);
        let workers = sweep_threads(configs.len());
        std::thread::scope(|scope| {
            for _ in 0..workers {
                scope.spawn(|| loop {
                    let i = next.fetch_add(1, Ordering::Relaxed);
                    if i >= configs.len() {
                        break;
                    }
                    let outcome = build_dataset(&configs[i])
                        .and_then(|dataset| run_experiment(&configs[i], &dataset, |_| {}));
                    let rendered = match outcome {
                        Ok(o) => Ok(format!(
                            "{},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6}\n",
                            csv_quote(&rows[i].label),
                            o.iou.mean,
                            o.tail_miou(),
                            o.dice.mean,
                            o.first_supervised,
                            o.final_supervised,
                            o.final_consistency,
                        )),
                        Err(e) => Err(format!("sweep row `{}`: {e}", rows[i].label)),
                    };
                    results.lock().unwrap()[i] = Some(rendered);
                });
            }
        });
    }

    let mut csv = String::from(CSV_HEADER);
    for slot in results.into_inner().unwrap() {
        match slot.expect("every row was processed") {
            Ok(line) => csv.push_str(&line),
            Err(e) => return Err(AppError::Numeric(e)),
        }
    }
    std::fs::write(out_path, csv)?;
    println!("wrote {} sweep rows to {}", rows.len(), out_path.display());
    Ok(ExitCode::SUCCESS)
}
