//! Acceptance criteria, one pass/fail line each.
//!
//! Run all with `cargo test --release -p filterlab --test acceptance`, or a
//! subset by number: `... --test acceptance -- 1 4 10`. The process exits
//! with status 0 after reporting unless `ACCEPTANCE_STRICT=1` is set, in
//! which case any failed criterion makes it exit with status 1.

use std::time::{Duration, Instant};

use filterlab::experiment::{self, read_csv, voc_residuals, ExperimentConfig, ExperimentReport, SignRow, Suite};
use filterlab::filter::Scheme;
use filterlab::limits::{
    conditional_double_integral, fubini_check, qv_limit_check, zero_limit_check, Adapted, FubiniCase,
    LatticeStream, LimitCase, ZeroCase,
};
use filterlab::stats::{
    ks_test, loglog_slope, moments, normal_cdf, predict_independent, weighted_limit_check, SampleSet, TestFn,
    Weight,
};
use statrs::distribution::{ChiSquared, ContinuousCDF};

const SEED: u64 = experiment::DEFAULT_SEED;

struct Outcome {
    pass: bool,
    detail: String,
}

type Check = fn() -> filterlab::Result<Outcome>;

fn unit_double_integral() -> filterlab::Result<Outcome> {
    let n = 256;
    let lattices = LatticeStream::new(1, 1, 4096, SEED, 100_000);
    let samples = lattices.map(|lat| conditional_double_integral(LimitCase::Unit, lat, n))?;
    let v = moments(&samples).variance;
    let var_ok = (v.value - 0.5).abs() <= 3.0 * v.std_error;
    let set = SampleSet::new(samples, "unit")?;
    let ks = ks_test(&set, |x| normal_cdf(x / 0.5f64.sqrt()))?;
    // Not part of the criterion: the same samples against their exact
    // finite-n law (χ²_n − n) / (2√n).
    let chi = ChiSquared::new(n as f64).expect("positive degrees of freedom");
    let root = (n as f64).sqrt();
    let exact = ks_test(&set, |x| chi.cdf((n as f64 + 2.0 * root * x).max(0.0)))?;
    Ok(Outcome {
        pass: var_ok && ks.p_value > 0.01,
        detail: format!(
            "variance {:.5} ± {:.5} (target 0.5), KS vs N(0,1/2) p = {:.3e} (D = {:.4}); exact-law KS p = {:.3}",
            v.value, v.std_error, ks.p_value, ks.statistic, exact.p_value
        ),
    })
}

fn quadratic_variation() -> filterlab::Result<Outcome> {
    let lattices = LatticeStream::new(1, 2, 4096, SEED ^ 2, 1000);
    let same = qv_limit_check(&lattices, Adapted::Const(1.0), Adapted::Const(1.0), 0, 0, &[512])?;
    let cross = qv_limit_check(&lattices, Adapted::Const(1.0), Adapted::Const(1.0), 0, 1, &[512])?;
    let (s, c) = (same[0].value, cross[0].value);
    Ok(Outcome {
        pass: (s - 0.5).abs() <= 0.02 && c.abs() <= 0.02,
        detail: format!("i = j mean {s:.5} (target 0.5 ± 0.02), i ≠ j mean {c:.5} (target 0 ± 0.02)"),
    })
}

fn brownian_product() -> filterlab::Result<Outcome> {
    let lattices = LatticeStream::new(1, 1, 4096, SEED ^ 3, 10_000);
    let pairs =
        lattices.map(|lat| Ok((conditional_double_integral(LimitCase::BrownianProduct, lat, 256)?, lat.w1()[0])))?;
    let (samples, w1): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
    let v = moments(&samples).variance;
    let var_ok = (v.value - 1.0 / 6.0).abs() <= 3.0 * v.std_error;
    let mut passed = 0;
    let mut worst: f64 = 0.0;
    for w in Weight::ALL {
        for f in TestFn::ALL {
            let c = weighted_limit_check(&samples, &w1, f, w, predict_independent(f, w, 1.0 / 6.0), 3.0)?;
            passed += c.pass as usize;
            worst = worst.max((c.observed.value - c.predicted).abs() / c.observed.std_error);
        }
    }
    Ok(Outcome {
        pass: var_ok && passed == 9,
        detail: format!(
            "variance {:.5} ± {:.5} (target 1/6); weighted checks {passed}/9 within 3σ (worst {worst:.2}σ)",
            v.value, v.std_error
        ),
    })
}

fn vanishing_projection() -> filterlab::Result<Outcome> {
    let ladder = [16, 32, 64, 128, 256, 512];
    let lattices = LatticeStream::new(1, 1, 4096, SEED ^ 4, 10_000);
    let rows = zero_limit_check(&lattices, ZeroCase::TerminalB, &ladder)?;
    let values: Vec<f64> = rows.iter().map(|r| r.value).collect();
    let slope = loglog_slope(&ladder, &values)?;
    Ok(Outcome {
        pass: slope <= -0.3,
        detail: format!(
            "L1 slope {slope:.3} (bound -0.3); L1 at n = 16: {:.4}, n = 512: {:.4}",
            values[0],
            values[values.len() - 1]
        ),
    })
}

fn run_config(cfg: &ExperimentConfig) -> filterlab::Result<(ExperimentReport, tempfile::TempDir)> {
    let dir = tempfile::tempdir()?;
    let report = experiment::run(cfg, dir.path())?;
    Ok((report, dir))
}

fn level_config(scheme: Scheme) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::with_suites(vec![Suite::MixedNormal, Suite::VarianceCrosscheck]);
    cfg.model = "coupled".into();
    cfg.g = "shifted-tanh".into();
    cfg.scheme = scheme;
    cfg.level = 256;
    cfg.paths = 500;
    cfg.particles = 2000;
    cfg
}

fn describe(report: &ExperimentReport, names: &[&str]) -> (bool, String) {
    let mut pass = true;
    let mut parts = Vec::new();
    for name in names {
        match report.verdicts().find(|v| v.statistic == *name) {
            Some(v) => {
                pass &= v.pass;
                parts.push(format!("{name} {:.4}{}", v.value, if v.pass { "" } else { " (fail)" }));
            }
            None => {
                pass = false;
                parts.push(format!("{name} missing"));
            }
        }
    }
    for s in &report.suites {
        if let Some(e) = &s.error {
            pass = false;
            parts.push(format!("{} error: {e}", s.suite));
        }
    }
    (pass, parts.join(", "))
}

const LEVEL_VERDICTS: [&str; 4] = ["error_variance_ratio", "ks_p", "z_mean", "z_variance"];

fn scheme_i_crosscheck() -> filterlab::Result<Outcome> {
    let (report, _dir) = run_config(&level_config(Scheme::I))?;
    let (pass, detail) = describe(&report, &LEVEL_VERDICTS);
    Ok(Outcome { pass, detail })
}

fn scheme_ii_crosscheck() -> filterlab::Result<Outcome> {
    let (report, dir) = run_config(&level_config(Scheme::II))?;
    let (mut pass, mut detail) = describe(&report, &LEVEL_VERDICTS);
    let signs: Vec<SignRow> = read_csv(&dir.path().join("sign_check.csv"))?;
    let passing: Vec<&str> = signs.iter().filter(|r| r.pass).map(|r| r.sign_convention.as_str()).collect();
    pass &= passing.len() == 1;
    for r in &signs {
        detail += &format!(
            "; sign {}: KS p {:.3e}, z mean {:.3}, z var {:.3}",
            r.sign_convention, r.ks_p, r.z_mean, r.z_variance
        );
    }
    detail += &format!("; passing sign(s): [{}]", passing.join(", "));
    Ok(Outcome { pass, detail })
}

fn rate_laws() -> filterlab::Result<Outcome> {
    let mut pass = true;
    let mut parts = Vec::new();
    for (model, particles) in [("coupled", 1000), ("standard", 4000)] {
        let mut cfg = ExperimentConfig::with_suites(vec![Suite::Rate]);
        cfg.model = model.into();
        cfg.paths = 100;
        cfg.particles = particles;
        let (report, _dir) = run_config(&cfg)?;
        let (ok, d) = describe(&report, &["slope[I]", "slope[II]"]);
        pass &= ok;
        parts.push(format!("{model} (M = {particles}): {d}"));
    }
    Ok(Outcome { pass, detail: parts.join("; ") })
}

fn kalman_oracle() -> filterlab::Result<Outcome> {
    let mut cfg = ExperimentConfig::with_suites(vec![Suite::OracleKalman]);
    cfg.model = "linear-gaussian".into();
    cfg.g = "coord:0".into();
    cfg.paths = 200;
    cfg.particles = 2000;
    let (report, _dir) = run_config(&cfg)?;
    let (pass, detail) = describe(&report, &["coverage"]);
    Ok(Outcome { pass, detail: format!("{detail} of 200 paths (bound 0.95)") })
}

fn variation_of_constants() -> filterlab::Result<Outcome> {
    let grids = [256, 512, 1024, 2048, 4096];
    let residuals = voc_residuals(SEED, &grids, 200)?;
    let slope = loglog_slope(&grids, &residuals)?;
    Ok(Outcome {
        pass: slope <= -0.4,
        detail: format!(
            "residual L2 slope {slope:.3} (bound -0.4); residuals {}",
            residuals.iter().map(|r| format!("{r:.3e}")).collect::<Vec<_>>().join(", ")
        ),
    })
}

fn projection_exchange() -> filterlab::Result<Outcome> {
    let mut pass = true;
    let mut parts = Vec::new();
    for (k, case) in FubiniCase::ALL.into_iter().enumerate() {
        let lattices = LatticeStream::new(1, 1, 256, SEED ^ (10 + k as u64), 1000);
        let r = fubini_check(case, &lattices, 200)?;
        let ok = r.within(3.0);
        pass &= ok;
        parts.push(format!(
            "{}: {:.2e} ± {:.2e}{}",
            case.id(),
            r.discrepancy.value,
            r.discrepancy.std_error,
            if ok { "" } else { " (fail)" }
        ));
    }
    Ok(Outcome { pass, detail: parts.join(", ") })
}

fn main() {
    let criteria: [(u32, &str, u64, Check); 10] = [
        (1, "double-integral variance and law", 120, unit_double_integral),
        (2, "quadratic-variation limit", 60, quadratic_variation),
        (3, "mixed case with signal-noise integrand", 180, brownian_product),
        (4, "vanishing projection rate", 180, vanishing_projection),
        (5, "scheme I variance cross-check", 900, scheme_i_crosscheck),
        (6, "scheme II variance cross-check and sign", 1200, scheme_ii_crosscheck),
        (7, "rate laws", 900, rate_laws),
        (8, "Kalman-Bucy oracle", 300, kalman_oracle),
        (9, "variation-of-constants residual", 120, variation_of_constants),
        (10, "projection exchange", 120, projection_exchange),
    ];
    let selected: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let strict = std::env::var("ACCEPTANCE_STRICT").is_ok_and(|v| v == "1");
    let mut failed = 0;
    let mut ran = 0;
    for (id, name, budget, check) in criteria {
        if !selected.is_empty() && !selected.contains(&id) {
            continue;
        }
        ran += 1;
        let start = Instant::now();
        let result = check();
        let elapsed = start.elapsed();
        let in_time = elapsed <= Duration::from_secs(budget);
        let (pass, detail) = match result {
            Ok(o) => (o.pass && in_time, o.detail),
            Err(e) => (false, format!("error: {e}")),
        };
        failed += !pass as usize;
        println!(
            "[{}] {id}. {name}: {detail} ({:.1} s, budget {budget} s{})",
            if pass { "PASS" } else { "FAIL" },
            elapsed.as_secs_f64(),
            if in_time { "" } else { ", exceeded" }
        );
    }
    println!("acceptance: {}/{ran} criteria pass", ran - failed);
    if strict && failed > 0 {
        std::process::exit(1);
    }
}
