use rand::Rng;
use serde::Serialize;

use super::summary::{mean, mean_se, variance_about};
use crate::rng::{stream, Purpose};
use crate::{Error, Result};

pub const RATE_MIN_LEVELS: usize = 4;
pub const RATE_MIN_SAMPLES: usize = 100;
pub const BOOTSTRAP_RESAMPLES: usize = 200;

/// Least-squares fit of `log₂ E|err|` against `log₂ n`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateFit {
    pub levels: Vec<usize>,
    pub mean_abs_errors: Vec<f64>,
    pub mean_abs_std_errors: Vec<f64>,
    pub slope: f64,
    pub slope_std_error: f64,
    pub intercept: f64,
}

fn ols(x: &[f64], y: &[f64]) -> (f64, f64) {
    let (mx, my) = (mean(x), mean(y));
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

fn log_mae(values: &[f64]) -> Result<f64> {
    let m = values.iter().map(|v| v.abs()).sum::<f64>() / values.len() as f64;
    if m > 0.0 && m.is_finite() {
        Ok(m.log2())
    } else {
        Err(Error::Estimation(format!("mean absolute error {m} has no logarithm")))
    }
}

/// Least-squares slope of `log₂ value` against `log₂ level`, for summaries
/// that are already aggregated per level.
pub fn loglog_slope(levels: &[usize], values: &[f64]) -> Result<f64> {
    if levels.len() != values.len() || levels.len() < 2 {
        return Err(Error::Dimension(format!("{} levels, {} values", levels.len(), values.len())));
    }
    if let Some(v) = values.iter().find(|v| !(**v > 0.0 && v.is_finite())) {
        return Err(Error::Estimation(format!("value {v} has no logarithm")));
    }
    let x: Vec<f64> = levels.iter().map(|&n| (n as f64).log2()).collect();
    let y: Vec<f64> = values.iter().map(|v| v.log2()).collect();
    Ok(ols(&x, &y).0)
}

/// Fits the convergence rate of error samples across levels. The slope
/// standard error comes from a bootstrap that resamples each level's errors
/// independently, drawn from the `Bootstrap` stream of `seed`.
pub fn rate_regression(levels: &[usize], errors: &[Vec<f64>], seed: u64) -> Result<RateFit> {
    if levels.len() != errors.len() {
        return Err(Error::Dimension(format!("{} levels, {} error sets", levels.len(), errors.len())));
    }
    if levels.len() < RATE_MIN_LEVELS {
        return Err(Error::Estimation(format!("rate fit needs at least {RATE_MIN_LEVELS} levels")));
    }
    if let Some(e) = errors.iter().find(|e| e.len() < RATE_MIN_SAMPLES) {
        return Err(Error::Estimation(format!(
            "rate fit needs {RATE_MIN_SAMPLES} samples per level, got {}",
            e.len()
        )));
    }
    if levels.contains(&0) {
        return Err(Error::Config("level 0 in rate fit".into()));
    }
    let x: Vec<f64> = levels.iter().map(|&n| (n as f64).log2()).collect();
    let y = errors.iter().map(|e| log_mae(e)).collect::<Result<Vec<f64>>>()?;
    let (slope, intercept) = ols(&x, &y);

    let mut rng = stream(seed, Purpose::Bootstrap, 0);
    let mut slopes = Vec::with_capacity(BOOTSTRAP_RESAMPLES);
    let mut buf = Vec::new();
    for _ in 0..BOOTSTRAP_RESAMPLES {
        let yb = errors
            .iter()
            .map(|e| {
                buf.clear();
                buf.extend((0..e.len()).map(|_| e[rng.random_range(0..e.len())]));
                log_mae(&buf)
            })
            .collect::<Result<Vec<f64>>>()?;
        slopes.push(ols(&x, &yb).0);
    }
    let slope_std_error = variance_about(&slopes, mean(&slopes)).sqrt();

    let (mean_abs_errors, mean_abs_std_errors) = errors
        .iter()
        .map(|e| mean_se(&e.iter().map(|v| v.abs()).collect::<Vec<f64>>()))
        .unzip();
    Ok(RateFit { levels: levels.to_vec(), mean_abs_errors, mean_abs_std_errors, slope, slope_std_error, intercept })
}
