//! `dyce report`: fold the metrics of finished runs into one CSV.

use std::path::Path;
use std::process::ExitCode;

use crate::io::{discover_runs, read_metrics_csv};
use crate::AppError;

pub fn run(runs_dir: &Path, out_path: &Path) -> Result<ExitCode, AppError> {
    let runs = discover_runs(runs_dir)?;
    let mut csv = String::from("run,miou,mean_dice\n");
    for run in &runs {
        let (_, mean) = read_metrics_csv(&run.join("metrics.csv"))?;
        let name = run
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default();
        match mean {
            Some((miou, dice)) => csv.push_str(&format!("{name},{miou:.6},{dice:.6}\n")),
            None => csv.push_str(&format!("{name},-,-\n")),
        }
    }
    std::fs::write(out_path, csv)?;
    println!("aggregated {} runs into {}", runs.len(), out_path.display());
    Ok(ExitCode::SUCCESS)
}
