//! `dyce gradcheck`: the full gradient-oracle suite, one line per
//! component, nonzero exit when any tolerance is missed.

use std::process::ExitCode;

use dyce_core::oracle::{format_report_line, run_gradcheck_suite, Fault};

use crate::AppError;

pub const SUITE_SEED: u64 = 0xD1CE;

pub fn run(instances: usize, inject: Option<String>) -> Result<ExitCode, AppError> {
    let fault = match inject.as_deref() {
        Some("dyce-sign-flip") => Some(Fault::DyceSignFlip),
        Some(other) => {
            return Err(AppError::Config(crate::config::ConfigError {
                field: "inject".to_string(),
                message: format!("unknown fault `{other}`"),
            }))
        }
        None => None,
    };
    let reports = run_gradcheck_suite(SUITE_SEED, instances, fault)?;
    let mut all_passed = true;
    for report in &reports {
        println!("{}", format_report_line(report));
        all_passed &= report.passed();
    }
    if all_passed {
        Ok(ExitCode::SUCCESS)
    } else {
        let failed: Vec<&str> = reports
            .iter()
            .filter(|r| !r.passed())
            .map(|r| r.component)
            .collect();
        Err(AppError::Numeric(format!(
            "gradient check failed for: {}",
            failed.join(", ")
        )))
    }
}
