//! Command-line front end of the experiment runner.

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};
use filterlab::experiment::{emit_plotdata, run, ExperimentConfig, Suite};
use filterlab::sde::{model_by_id, MODEL_IDS};

#[derive(Parser)]
#[command(name = "filterlab", version, about = "Monte Carlo checks of Euler-discretized nonlinear filters")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the suites of a config and write reports.
    Run {
        /// TOML experiment config.
        #[arg(long)]
        config: PathBuf,
        /// Override the master seed of the config.
        #[arg(long)]
        seed: Option<u64>,
        /// Worker threads; results do not depend on this.
        #[arg(long)]
        threads: Option<usize>,
        /// Output directory.
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// List the model catalog.
    ListModels,
    /// List the available suites.
    ListSuites,
    /// Write plot-ready CSVs from the data files of a finished run.
    EmitPlotdata {
        /// Directory of a finished run.
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
}

/// Exit status for runs whose verdicts did not all pass.
const VERDICT_FAILURE: u8 = 1;
/// Exit status for invalid input, as used by the argument parser.
const USAGE_ERROR: u8 = 2;

fn run_command(config: PathBuf, seed: Option<u64>, threads: Option<usize>, out: PathBuf) -> anyhow::Result<bool> {
    let mut cfg = ExperimentConfig::load(&config).with_context(|| format!("reading {}", config.display()))?;
    if let Some(seed) = seed {
        cfg.seed = seed;
    }
    if let Some(threads) = threads {
        rayon::ThreadPoolBuilder::new().num_threads(threads).build_global()?;
    }
    let report = run(&cfg, &out)?;
    for suite in &report.suites {
        let secs = report.timings.get(&suite.suite).copied().unwrap_or(0.0);
        println!("{} ({secs:.1} s, {} failures)", suite.suite, suite.failures);
        for v in &suite.verdicts {
            let predicted = v.predicted.map_or("bound".to_string(), |p| format!("{p:.6}"));
            let mark = if v.pass { "pass" } else { "FAIL" };
            println!("  [{mark}] {}: {:.6} (predicted {predicted}, tolerance {:.6})", v.statistic, v.value, v.tolerance);
        }
        if let Some(e) = &suite.error {
            println!("  [ERROR] {e}");
        }
    }
    println!("{}", if report.pass { "all verdicts pass" } else { "some verdicts failed" });
    Ok(report.pass)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run { config, seed, threads, out } => run_command(config, seed, threads, out),
        Command::ListModels => {
            for id in MODEL_IDS {
                let m = model_by_id(id).expect("catalog ids resolve");
                println!("{id}\tsignal dim {}, observation dim {}", m.signal_dim(), m.obs_dim());
            }
            Ok(true)
        }
        Command::ListSuites => {
            for s in Suite::ALL {
                println!("{}\t{}", s.id(), s.describe());
            }
            Ok(true)
        }
        Command::EmitPlotdata { out } => emit_plotdata(&out).map(|files| {
            for f in files {
                println!("{}", out.join(f).display());
            }
            true
        }).map_err(Into::into),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(VERDICT_FAILURE),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(USAGE_ERROR)
        }
    }
}
