//! Config-driven experiment suites, report files and plot data.
//!
//! [`run`] validates a config, runs every requested suite and writes into
//! the output directory:
//!
//! * `report.json`: config echo, verdicts, failure counts and file lists.
//!   It is fully determined by the config.
//! * `timings.json`: wall-clock seconds per suite.
//! * `verdicts_<suite>.json`: the suite's verdicts.
//! * data files named in each suite's `files` list (error, variance,
//!   limit and oracle CSVs).
//!
//! [`emit_plotdata`] turns those files into plot-ready CSVs.

mod config;
mod plot;
mod report;
mod suites;

use std::collections::BTreeMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::time::Instant;

pub use config::{ExperimentConfig, Suite, Thresholds, DEFAULT_SEED};
pub use plot::emit_plotdata;
pub use report::{
    read_csv, ErrorRow, ExperimentReport, IntegrandRow, KalmanRow, LimitRow, SuiteOutcome, VarianceRow,
    Verdict,
};
pub use suites::{reference_factor, voc_residuals, SignRow};

use report::write_json;
use suites::{LevelData, Setup, SuiteState};

use crate::Result;

fn panic_message(p: Box<dyn std::any::Any + Send>) -> String {
    p.downcast_ref::<&str>()
        .map(|s| s.to_string())
        .or_else(|| p.downcast_ref::<String>().cloned())
        .unwrap_or_else(|| "suite panicked".into())
}

/// Runs every suite of `cfg` and writes reports into `out`. An invalid
/// config is rejected before anything is written. A suite that fails
/// leaves an error record and the verdicts gathered before the failure.
pub fn run(cfg: &ExperimentConfig, out: &Path) -> Result<ExperimentReport> {
    cfg.validate()?;
    let setup = Setup::new(cfg)?;
    std::fs::create_dir_all(out)?;

    let mut level: Option<std::result::Result<LevelData, String>> = None;
    let mut suites = Vec::with_capacity(cfg.suites.len());
    let mut timings = BTreeMap::new();
    for &suite in &cfg.suites {
        let start = Instant::now();
        let mut state = SuiteState::default();
        let outcome = catch_unwind(AssertUnwindSafe(|| -> std::result::Result<(), String> {
            let mut level_data = || -> std::result::Result<LevelData, String> {
                level
                    .get_or_insert_with(|| suites::level_data(cfg, &setup).map_err(|e| e.to_string()))
                    .clone()
            };
            match suite {
                Suite::Rate => suites::run_rate(cfg, &setup, out, &mut state),
                Suite::MixedNormal => suites::run_mixed_normal(cfg, &setup, &level_data()?, out, &mut state),
                Suite::VarianceCrosscheck => {
                    suites::run_variance_crosscheck(cfg, &setup, &level_data()?, out, &mut state)
                }
                Suite::LimitLab => suites::run_limit_lab(cfg, out, &mut state),
                Suite::OracleKalman => suites::run_oracle_kalman(cfg, out, &mut state),
            }
            .map_err(|e| e.to_string())
        }));
        let error = match outcome {
            Ok(Ok(())) => None,
            Ok(Err(e)) => Some(e),
            Err(p) => Some(panic_message(p)),
        };
        let name = format!("verdicts_{}.json", suite.id());
        write_json(&out.join(&name), &state.verdicts)?;
        state.files.push(name);
        suites.push(SuiteOutcome {
            suite: suite.id().into(),
            verdicts: state.verdicts,
            error,
            failures: state.failures,
            files: state.files,
        });
        timings.insert(suite.id().to_string(), start.elapsed().as_secs_f64());
    }
    let pass = suites.iter().all(SuiteOutcome::pass);
    let report = ExperimentReport { config: cfg.clone(), suites, pass, timings };
    write_json(&out.join("report.json"), &report)?;
    write_json(&out.join("timings.json"), &report.timings)?;
    Ok(report)
}

/// Reads `report.json`, and `timings.json` when present, from a run
/// directory.
pub fn load_report(dir: &Path) -> Result<ExperimentReport> {
    let mut report: ExperimentReport = serde_json::from_str(&std::fs::read_to_string(dir.join("report.json"))?)?;
    let timings = dir.join("timings.json");
    if timings.exists() {
        report.timings = serde_json::from_str(&std::fs::read_to_string(timings)?)?;
    }
    Ok(report)
}
