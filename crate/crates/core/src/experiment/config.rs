use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::filter::Scheme;
use crate::sde::{is_power_of_two, model_by_id, TestFunction};
use crate::tangent::{SignConvention, TangentConvention};
use crate::{Error, Result};

/// Master seed used when a config does not set one.
pub const DEFAULT_SEED: u64 = 0x2F6E_A1C3_9B5D_0847;

/// Experiment suites selectable from a config.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Suite {
    Rate,
    MixedNormal,
    LimitLab,
    VarianceCrosscheck,
    OracleKalman,
}

impl Suite {
    pub const ALL: [Suite; 5] =
        [Self::Rate, Self::MixedNormal, Self::LimitLab, Self::VarianceCrosscheck, Self::OracleKalman];

    pub fn id(self) -> &'static str {
        match self {
            Self::Rate => "rate",
            Self::MixedNormal => "mixed_normal",
            Self::LimitLab => "limit_lab",
            Self::VarianceCrosscheck => "variance_crosscheck",
            Self::OracleKalman => "oracle_kalman",
        }
    }

    pub fn describe(self) -> &'static str {
        match self {
            Self::Rate => "log-log slope of mean absolute filter errors across the level ladder",
            Self::MixedNormal => "errors standardized by the particle variance estimate against N(0, 1)",
            Self::LimitLab => "double stochastic integrals, their projections and quadratic-variation limits",
            Self::VarianceCrosscheck => "empirical error variance against the mean variance estimate",
            Self::OracleKalman => "reference particle filter against the Kalman-Bucy mean",
        }
    }
}

/// Pass thresholds. Every field can be overridden in the `[thresholds]`
/// table of a config.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Thresholds {
    /// Minimum KS p-value of distributional tests.
    pub ks_p: f64,
    /// Width of moment tests in standard errors.
    pub sigmas: f64,
    /// Allowed deviation of a rate slope from −½.
    pub slope_tol: f64,
    /// Slope bound for models whose limit variance vanishes.
    pub fast_slope: f64,
    /// Relative tolerance of the variance cross-check.
    pub variance_rel: f64,
    /// Bound on the mean of standardized errors.
    pub z_mean: f64,
    pub z_var_lo: f64,
    pub z_var_hi: f64,
    /// Fraction of observation paths on which the oracle must agree.
    pub coverage: f64,
    /// Absolute tolerance of quadratic-variation limits.
    pub qv_tol: f64,
    /// Slope bound for vanishing conditional projections.
    pub zero_slope: f64,
    /// Slope bound for lagged-increment integrals.
    pub lag_slope: f64,
    /// Slope bound for the variation-of-constants residual across grids.
    pub voc_slope: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self {
            ks_p: 0.01,
            sigmas: 3.0,
            slope_tol: 0.15,
            fast_slope: -0.75,
            variance_rel: 0.25,
            z_mean: 0.05,
            z_var_lo: 0.8,
            z_var_hi: 1.2,
            coverage: 0.95,
            qv_tol: 0.02,
            zero_slope: -0.3,
            lag_slope: -0.4,
            voc_slope: -0.4,
        }
    }
}

fn default_model() -> String {
    "coupled".into()
}
fn default_g() -> String {
    "shifted-tanh".into()
}
fn default_n_fine() -> usize {
    4096
}
fn default_ladder() -> Vec<usize> {
    vec![16, 32, 64, 128, 256, 512]
}
fn default_level() -> usize {
    256
}
fn default_paths() -> usize {
    500
}
fn default_particles() -> usize {
    2000
}
fn default_seed() -> u64 {
    DEFAULT_SEED
}
fn default_limit_lattices() -> usize {
    10_000
}
fn default_inner() -> usize {
    200
}

/// One experiment, read from a TOML file. Unknown keys are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_model")]
    pub model: String,
    #[serde(default = "default_scheme")]
    pub scheme: Scheme,
    #[serde(default = "default_g")]
    pub g: String,
    #[serde(default = "default_n_fine")]
    pub n_fine: usize,
    /// Levels of the rate suite and of the vanishing-projection checks.
    #[serde(default = "default_ladder")]
    pub ladder: Vec<usize>,
    /// Single level of the mixed-normal and variance suites.
    #[serde(default = "default_level")]
    pub level: usize,
    /// Outer observation paths.
    #[serde(default = "default_paths")]
    pub paths: usize,
    /// Particles per observation path.
    #[serde(default = "default_particles")]
    pub particles: usize,
    #[serde(default = "default_seed")]
    pub seed: u64,
    pub suites: Vec<Suite>,
    #[serde(default)]
    pub sign_convention: SignConvention,
    #[serde(default)]
    pub tangent_convention: TangentConvention,
    /// Lattices per limit-lab check.
    #[serde(default = "default_limit_lattices")]
    pub limit_lattices: usize,
    /// Inner samples of the nested projection check.
    #[serde(default = "default_inner")]
    pub inner_samples: usize,
    #[serde(default)]
    pub thresholds: Thresholds,
}

fn default_scheme() -> Scheme {
    Scheme::I
}

impl ExperimentConfig {
    /// Defaults with the given suites.
    pub fn with_suites(suites: Vec<Suite>) -> Self {
        Self {
            model: default_model(),
            scheme: default_scheme(),
            g: default_g(),
            n_fine: default_n_fine(),
            ladder: default_ladder(),
            level: default_level(),
            paths: default_paths(),
            particles: default_particles(),
            seed: DEFAULT_SEED,
            suites,
            sign_convention: SignConvention::default(),
            tangent_convention: TangentConvention::default(),
            limit_lattices: default_limit_lattices(),
            inner_samples: default_inner(),
            thresholds: Thresholds::default(),
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    /// TOML text of the config. Fails for seeds above `i64::MAX`, which
    /// TOML integers cannot hold.
    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn test_function(&self) -> Result<TestFunction> {
        TestFunction::parse(&self.g)
    }

    pub fn validate(&self) -> Result<()> {
        if self.suites.is_empty() {
            return Err(Error::Config("the suite list is empty".into()));
        }
        let mut seen = self.suites.clone();
        seen.sort();
        seen.dedup();
        if seen.len() != self.suites.len() {
            return Err(Error::Config("a suite is listed twice".into()));
        }
        let model = model_by_id(&self.model)?;
        self.test_function()?.check_dim(model.signal_dim())?;
        if !is_power_of_two(self.n_fine) {
            return Err(Error::Config(format!("n_fine = {} is not a power of two", self.n_fine)));
        }
        if self.ladder.is_empty() {
            return Err(Error::Config("the level ladder is empty".into()));
        }
        for &n in self.ladder.iter().chain([&self.level]) {
            if !is_power_of_two(n) || n > self.n_fine / 8 {
                return Err(Error::Config(format!(
                    "level {n} must be a power of two at most n_fine / 8 = {}",
                    self.n_fine / 8
                )));
            }
        }
        if !self.ladder.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::Config("the ladder must be strictly increasing".into()));
        }
        for (name, v) in [
            ("paths", self.paths),
            ("particles", self.particles),
            ("limit_lattices", self.limit_lattices),
            ("inner_samples", self.inner_samples),
        ] {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        Ok(())
    }
}
