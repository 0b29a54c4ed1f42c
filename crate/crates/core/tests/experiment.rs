use std::path::Path;

use filterlab::experiment::{emit_plotdata, load_report, read_csv, run, ExperimentConfig, LimitRow, Suite, Verdict};

fn small(suites: Vec<Suite>) -> ExperimentConfig {
    let mut c = ExperimentConfig::with_suites(suites);
    c.n_fine = 512;
    c.ladder = vec![8, 16, 32, 64];
    c.level = 32;
    c.paths = 100;
    c.particles = 200;
    c.limit_lattices = 2000;
    c.inner_samples = 50;
    c
}

fn verdict<'a>(report: &'a filterlab::experiment::ExperimentReport, statistic: &str) -> &'a Verdict {
    report.verdicts().find(|v| v.statistic == statistic).unwrap_or_else(|| panic!("no verdict {statistic}"))
}

fn read_lines(path: &Path) -> Vec<String> {
    std::fs::read_to_string(path).unwrap().lines().map(String::from).collect()
}

#[test]
fn empty_suite_list_writes_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let cfg = small(Vec::new());
    assert!(run(&cfg, &out).is_err());
    assert!(!out.exists());
}

#[test]
fn limit_lab_unit_variance_passes() {
    let dir = tempfile::tempdir().unwrap();
    let report = run(&small(vec![Suite::LimitLab]), dir.path()).unwrap();
    let v = verdict(&report, "unit_variance");
    assert!(v.pass, "{v:?}");
    assert_eq!(v.predicted, Some(0.5));
    let text = std::fs::read_to_string(dir.path().join("verdicts_limit_lab.json")).unwrap();
    let parsed: Vec<Verdict> = serde_json::from_str(&text).unwrap();
    assert!(parsed.iter().any(|v| v.statistic == "unit_variance" && v.pass));
    let rows: Vec<LimitRow> = read_csv(&dir.path().join("limits.csv")).unwrap();
    assert!(rows.iter().any(|r| r.case_id == "unit" && r.statistic == "variance"));
    for name in ["qv_same_mean", "qv_cross_mean", "brownian_product_variance", "terminal_b_l1_slope"] {
        assert!(verdict(&report, name).pass, "{:?}", verdict(&report, name));
    }
}

#[test]
fn kalman_oracle_passes_on_linear_gaussian() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small(vec![Suite::OracleKalman]);
    cfg.model = "linear-gaussian".into();
    cfg.g = "coord:0".into();
    cfg.particles = 500;
    let report = run(&cfg, dir.path()).unwrap();
    assert!(report.pass, "{:?}", report.suites);
    assert_eq!(read_lines(&dir.path().join("kalman.csv")).len(), 101);
}

#[test]
fn suite_error_leaves_a_record() {
    let dir = tempfile::tempdir().unwrap();
    let report = run(&small(vec![Suite::OracleKalman]), dir.path()).unwrap();
    let s = &report.suites[0];
    assert!(s.error.as_deref().unwrap().contains("linear-gaussian"));
    assert!(!report.pass);
    assert!(dir.path().join("report.json").exists());
    assert_eq!(load_report(dir.path()).unwrap(), report);
}

#[test]
fn reports_do_not_depend_on_threads_or_reruns() {
    let mut cfg = small(vec![Suite::Rate, Suite::MixedNormal]);
    cfg.particles = 50;
    let mut texts = Vec::new();
    for threads in [1, 3, 3] {
        let dir = tempfile::tempdir().unwrap();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| run(&cfg, dir.path())).unwrap();
        let report = std::fs::read(dir.path().join("report.json")).unwrap();
        let errors = std::fs::read(dir.path().join("errors_rate.csv")).unwrap();
        texts.push((report, errors));
    }
    assert!(texts.windows(2).all(|w| w[0] == w[1]));
}

#[test]
fn plotdata_files_follow_their_contracts() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small(vec![Suite::Rate, Suite::MixedNormal]);
    cfg.particles = 50;
    run(&cfg, dir.path()).unwrap();
    let files = emit_plotdata(dir.path()).unwrap();
    assert_eq!(files, vec!["rate_curve.csv", "ecdf.csv", "u_grid.csv"]);

    let rate = read_lines(&dir.path().join("rate_curve.csv"));
    assert_eq!(rate[0], "n,mean_abs_err,stderr");
    let levels: Vec<usize> = rate[1..].iter().map(|l| l.split(',').next().unwrap().parse().unwrap()).collect();
    assert_eq!(levels, cfg.ladder);

    let ecdf = read_lines(&dir.path().join("ecdf.csv"));
    assert_eq!(ecdf[0], "z_value,ecdf,normal_cdf");
    let z: Vec<f64> = ecdf[1..].iter().map(|l| l.split(',').next().unwrap().parse().unwrap()).collect();
    assert!(z.windows(2).all(|w| w[0] < w[1]));
    let last: Vec<f64> = ecdf.last().unwrap().split(',').map(|v| v.parse().unwrap()).collect();
    assert!((last[1] - 1.0).abs() < 1e-12);
}

#[test]
fn degenerate_model_gives_zero_integrands() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small(vec![Suite::MixedNormal]);
    cfg.model = "standard".into();
    cfg.particles = 50;
    let report = run(&cfg, dir.path()).unwrap();
    let v = verdict(&report, "degenerate_limit");
    assert!(v.pass, "{v:?}");
    emit_plotdata(dir.path()).unwrap();
    let grid = read_lines(&dir.path().join("u_grid.csv"));
    assert_eq!(grid.len(), 1 + cfg.n_fine + 1);
    assert!(grid[1..].iter().all(|l| l.split(',').nth(3).unwrap().parse::<f64>().unwrap() == 0.0));
    assert_eq!(read_lines(&dir.path().join("ecdf.csv")).len(), 1);
}
