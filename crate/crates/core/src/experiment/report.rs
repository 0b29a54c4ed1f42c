use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use crate::Result;

/// One pass/fail comparison of a statistic with its prediction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub suite: String,
    pub statistic: String,
    #[serde(with = "nan_as_null")]
    pub value: f64,
    /// Predicted value; `None` when the check is a one-sided bound.
    pub predicted: Option<f64>,
    /// Allowed deviation from the prediction, or the bound itself.
    #[serde(with = "nan_as_null")]
    pub tolerance: f64,
    pub pass: bool,
    pub seed: u64,
}

/// Outcome of one suite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteOutcome {
    pub suite: String,
    pub verdicts: Vec<Verdict>,
    /// Set when the suite stopped with an error; verdicts gathered before
    /// the error are kept.
    pub error: Option<String>,
    /// Failed particles or paths over the whole suite.
    pub failures: usize,
    /// Data files written by the suite, relative to the output directory.
    pub files: Vec<String>,
}

impl SuiteOutcome {
    pub fn pass(&self) -> bool {
        self.error.is_none() && !self.verdicts.is_empty() && self.verdicts.iter().all(|v| v.pass)
    }
}

/// Everything a run produced. Timings are kept out of the serialized
/// report so that identical configs give byte-identical `report.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub config: ExperimentConfig,
    pub suites: Vec<SuiteOutcome>,
    pub pass: bool,
    #[serde(skip)]
    pub timings: BTreeMap<String, f64>,
}

impl ExperimentReport {
    pub fn verdicts(&self) -> impl Iterator<Item = &Verdict> {
        self.suites.iter().flat_map(|s| s.verdicts.iter())
    }
}

/// Row of an error CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorRow {
    pub path_index: u64,
    pub n: usize,
    pub scheme: String,
    pub g_id: String,
    pub raw_error: f64,
    pub rescaled_error: f64,
    /// `(1 − n/N)·V̂` when a variance estimate exists for the row.
    pub variance_estimate: Option<f64>,
    pub std_error: f64,
    pub failures: usize,
}

/// Row of the variance CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarianceRow {
    pub path_index: u64,
    pub scheme: String,
    pub g_id: String,
    #[serde(rename = "V_hat")]
    pub v_hat: f64,
    #[serde(rename = "V_hat_stderr")]
    pub v_hat_stderr: f64,
    pub excluded_particles: usize,
    /// `none` for the unnormalized filter, else the sign of the centering term.
    pub sign_convention: String,
}

/// Row of the limit CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LimitRow {
    pub case_id: String,
    pub n: usize,
    pub statistic: String,
    pub value: f64,
    pub std_error: f64,
    pub predicted: f64,
    pub pass: bool,
}

/// Row of the Kalman oracle CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KalmanRow {
    pub path_index: u64,
    pub filter_mean: f64,
    pub filter_std_error: f64,
    pub kalman_mean: f64,
    pub kalman_variance: f64,
    pub pass: bool,
}

/// Row of the integrand grid file: `u^{ij}` at `s`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntegrandRow {
    pub path_index: u64,
    pub scheme: String,
    pub s: f64,
    pub i: usize,
    pub j: usize,
    pub u: f64,
}

pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize().map(|row| row.map_err(Into::into)).collect()
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

/// JSON has no NaN, so undefined statistics are written as `null`.
mod nan_as_null {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else {
            s.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NAN))
    }
}
