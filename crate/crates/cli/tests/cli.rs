use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use filterlab::experiment::{load_report, ExperimentConfig};

fn bin(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_filterlab")).args(args).output().unwrap()
}

fn configs_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn write_config(dir: &Path, text: &str) -> PathBuf {
    let p = dir.join("cfg.toml");
    std::fs::write(&p, text).unwrap();
    p
}

const SMALL: &str = "n_fine = 512\nladder = [8, 16, 32, 64]\nlevel = 32\npaths = 100\nparticles = 300\nlimit_lattices = 2000\ninner_samples = 50\n";

#[test]
fn shipped_configs_are_valid() {
    let mut count = 0;
    for entry in std::fs::read_dir(configs_dir()).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "toml") {
            ExperimentConfig::load(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
            count += 1;
        }
    }
    assert!(count >= 5);
}

#[test]
fn listings() {
    let out = bin(&["list-suites"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    for id in ["rate", "mixed_normal", "limit_lab", "variance_crosscheck", "oracle_kalman"] {
        assert!(text.lines().any(|l| l.starts_with(id)), "{id} missing");
    }
    let out = bin(&["list-models"]);
    assert!(String::from_utf8(out.stdout).unwrap().contains("linear-gaussian"));
}

#[test]
fn invalid_config_is_a_usage_error_and_writes_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "suites = []\n");
    let out_dir = dir.path().join("out");
    let out = bin(&["run", "--config", cfg.to_str().unwrap(), "--out", out_dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!out_dir.exists());

    let cfg = write_config(dir.path(), "suites = [\"rate\"]\nparticle = 5\n");
    let out = bin(&["run", "--config", cfg.to_str().unwrap(), "--out", out_dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8(out.stderr).unwrap().contains("particle"));
}

#[test]
fn oracle_run_passes_with_seed_override() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        &format!("suites = [\"oracle_kalman\"]\nmodel = \"linear-gaussian\"\ng = \"coord:0\"\n{SMALL}"),
    );
    let out_dir = dir.path().join("out");
    let out = bin(&[
        "run", "--config", cfg.to_str().unwrap(), "--out", out_dir.to_str().unwrap(), "--seed", "12345", "--threads", "2",
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
    let report = load_report(&out_dir).unwrap();
    assert_eq!(report.config.seed, 12345);
    assert!(report.pass);
    assert!(report.timings.contains_key("oracle_kalman"));
}

#[test]
fn exit_status_matches_report_and_plotdata_follows() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &format!("suites = [\"rate\", \"limit_lab\"]\n{SMALL}"));
    let out_dir = dir.path().join("out");
    let out = bin(&["run", "--config", cfg.to_str().unwrap(), "--out", out_dir.to_str().unwrap()]);
    let report = load_report(&out_dir).unwrap();
    assert_eq!(out.status.code(), Some(if report.pass { 0 } else { 1 }));
    let unit = report.verdicts().find(|v| v.statistic == "unit_variance").unwrap();
    assert!(unit.pass);
    for s in &report.suites {
        for f in &s.files {
            assert!(out_dir.join(f).exists(), "{f}");
        }
    }

    let out = bin(&["emit-plotdata", "--out", out_dir.to_str().unwrap()]);
    assert!(out.status.success());
    let curve = std::fs::read_to_string(out_dir.join("rate_curve.csv")).unwrap();
    assert_eq!(curve.lines().count(), 5);
}
