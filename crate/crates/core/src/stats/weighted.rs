use serde::Serialize;

use super::summary::{mean_se, Estimate};
use crate::{Error, Result};

/// Bounded Lipschitz test functions of the stable-limit check.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum TestFn {
    Cos,
    Gaussian,
    Sigmoid,
}

impl TestFn {
    pub const ALL: [TestFn; 3] = [Self::Cos, Self::Gaussian, Self::Sigmoid];

    pub fn eval(self, x: f64) -> f64 {
        match self {
            Self::Cos => x.cos(),
            Self::Gaussian => (-0.5 * x * x).exp(),
            Self::Sigmoid => 1.0 / (1.0 + (-x).exp()),
        }
    }

    pub fn id(self) -> &'static str {
        match self {
            Self::Cos => "cos",
            Self::Gaussian => "gaussian",
            Self::Sigmoid => "sigmoid",
        }
    }
}

/// Weights built from the terminal observation noise `W₁`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Weight {
    One,
    /// `1_{W₁ > 0}`.
    Positive,
    /// `exp(W₁ − ½)`, mean one.
    Exponential,
}

impl Weight {
    pub const ALL: [Weight; 3] = [Self::One, Self::Positive, Self::Exponential];

    pub fn eval(self, w1: f64) -> f64 {
        match self {
            Self::One => 1.0,
            Self::Positive => {
                if w1 > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Self::Exponential => (w1 - 0.5).exp(),
        }
    }

    /// `E[Y]` for `W₁ ~ N(0, 1)`.
    pub fn mean(self) -> f64 {
        match self {
            Self::One | Self::Exponential => 1.0,
            Self::Positive => 0.5,
        }
    }

    pub fn id(self) -> &'static str {
        match self {
            Self::One => "one",
            Self::Positive => "positive",
            Self::Exponential => "exponential",
        }
    }
}

/// Gauss–Hermite nodes and weights for `∫ e^{−x²} f(x) dx`, by Newton
/// iteration on the orthonormal Hermite recurrence.
pub fn gauss_hermite(n: usize) -> Vec<(f64, f64)> {
    let pim4 = std::f64::consts::PI.powf(-0.25);
    let mut out = vec![(0.0, 0.0); n];
    let m = n.div_ceil(2);
    let nf = n as f64;
    let mut z = 0.0;
    for i in 0..m {
        z = match i {
            0 => (2.0 * nf + 1.0).sqrt() - 1.85575 * (2.0 * nf + 1.0).powf(-1.0 / 6.0),
            1 => z - 1.14 * nf.powf(0.426) / z,
            2 => 1.86 * z - 0.86 * out[0].0,
            3 => 1.91 * z - 0.91 * out[1].0,
            _ => 2.0 * z - out[i - 2].0,
        };
        let mut pp = 0.0;
        for _ in 0..100 {
            let (mut p1, mut p2) = (pim4, 0.0);
            for j in 0..n {
                let p3 = p2;
                p2 = p1;
                let jf = j as f64;
                p1 = z * (2.0 / (jf + 1.0)).sqrt() * p2 - (jf / (jf + 1.0)).sqrt() * p3;
            }
            pp = (2.0 * nf).sqrt() * p2;
            let dz = p1 / pp;
            z -= dz;
            if dz.abs() <= 1e-14 {
                break;
            }
        }
        out[i] = (z, 2.0 / (pp * pp));
        out[n - 1 - i] = (-z, 2.0 / (pp * pp));
    }
    out
}

/// `E[f(σξ)]` for `ξ ~ N(0, 1)` by Gauss–Hermite quadrature.
fn gaussian_expectation(nodes: &[(f64, f64)], f: TestFn, sd: f64) -> f64 {
    let s2 = std::f64::consts::SQRT_2;
    nodes.iter().map(|&(x, w)| w * f.eval(s2 * sd * x)).sum::<f64>() / std::f64::consts::PI.sqrt()
}

fn simpson(a: f64, b: f64, intervals: usize, g: impl Fn(f64) -> f64) -> f64 {
    let n = intervals + intervals % 2;
    let h = (b - a) / n as f64;
    let inner: f64 = (1..n).map(|k| g(a + k as f64 * h) * if k % 2 == 1 { 4.0 } else { 2.0 }).sum();
    h / 3.0 * (g(a) + g(b) + inner)
}

const HERMITE_NODES: usize = 48;
const OUTER_HALF_WIDTH: f64 = 12.0;
const OUTER_INTERVALS: usize = 2000;

/// Predicted `Ê[f(X) Y]` when the limit `X ~ N(0, v)` is independent of `W`:
/// `E[f(N(0, v))] E[Y]`.
pub fn predict_independent(f: TestFn, weight: Weight, variance: f64) -> f64 {
    gaussian_expectation(&gauss_hermite(HERMITE_NODES), f, variance.sqrt()) * weight.mean()
}

/// Predicted `Ê[f(X) Y]` for a mixed-normal limit with conditional variance
/// `v(W₁)`: the inner Gaussian expectation by Gauss–Hermite, the outer
/// integral over `W₁` by composite Simpson split at 0.
pub fn predict_mixed(f: TestFn, weight: Weight, variance: impl Fn(f64) -> f64) -> f64 {
    let nodes = gauss_hermite(HERMITE_NODES);
    let phi = |w: f64| (-0.5 * w * w).exp() / (2.0 * std::f64::consts::PI).sqrt();
    let g = |w: f64| phi(w) * gaussian_expectation(&nodes, f, variance(w).max(0.0).sqrt());
    // The indicator jumps at 0, so each half uses the one-sided weight.
    let left = simpson(-OUTER_HALF_WIDTH, 0.0, OUTER_INTERVALS, |w| g(w) * weight.eval(w));
    let right = simpson(0.0, OUTER_HALF_WIDTH, OUTER_INTERVALS, |w| g(w) * weight.eval(w.max(f64::MIN_POSITIVE)));
    left + right
}

/// Outcome of one weighted stable-limit comparison.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WeightedCheck {
    pub f: TestFn,
    pub weight: Weight,
    pub observed: Estimate,
    pub predicted: f64,
    pub pass: bool,
}

/// Compares the sample mean of `f(sample)·Y(W₁)` with `predicted` within
/// `sigmas` standard errors of the sample mean (the quadrature prediction
/// carries no Monte Carlo error).
pub fn weighted_limit_check(
    samples: &[f64],
    w1: &[f64],
    f: TestFn,
    weight: Weight,
    predicted: f64,
    sigmas: f64,
) -> Result<WeightedCheck> {
    if samples.len() != w1.len() || samples.len() < 2 {
        return Err(Error::Dimension(format!("{} samples with {} weights", samples.len(), w1.len())));
    }
    let prods: Vec<f64> = samples.iter().zip(w1).map(|(&x, &w)| f.eval(x) * weight.eval(w)).collect();
    let (value, std_error) = mean_se(&prods);
    let pass = (value - predicted).abs() <= sigmas * std_error;
    Ok(WeightedCheck { f, weight, observed: Estimate { value, std_error }, predicted, pass })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hermite_rule_integrates_moments() {
        let nodes = gauss_hermite(20);
        let sp = std::f64::consts::PI.sqrt();
        let m0: f64 = nodes.iter().map(|p| p.1).sum();
        let m2: f64 = nodes.iter().map(|p| p.1 * p.0 * p.0).sum();
        let m4: f64 = nodes.iter().map(|p| p.1 * p.0.powi(4)).sum();
        assert!((m0 - sp).abs() < 1e-12);
        assert!((m2 - sp / 2.0).abs() < 1e-12);
        assert!((m4 - 3.0 * sp / 4.0).abs() < 1e-12);
    }

    #[test]
    fn closed_form_gaussian_expectations() {
        let v: f64 = 1.0 / 6.0;
        assert!((predict_independent(TestFn::Cos, Weight::One, v) - (-v / 2.0).exp()).abs() < 1e-12);
        assert!((predict_independent(TestFn::Gaussian, Weight::One, v) - 1.0 / (1.0 + v).sqrt()).abs() < 1e-12);
        assert!((predict_independent(TestFn::Sigmoid, Weight::Positive, v) - 0.25).abs() < 1e-12);
    }

    #[test]
    fn mixed_prediction_with_constant_variance_factorizes() {
        for f in TestFn::ALL {
            for w in Weight::ALL {
                let a = predict_mixed(f, w, |_| 0.5);
                let b = predict_independent(f, w, 0.5);
                assert!((a - b).abs() < 1e-9, "{f:?} {w:?}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn mixed_cos_prediction_matches_closed_form() {
        // E[cos(|W|ξ/√2)] = E[exp(−W²/4)] = (1 + 1/2)^{-1/2}.
        let a = predict_mixed(TestFn::Cos, Weight::One, |w| 0.5 * w * w);
        assert!((a - (1.5f64).powf(-0.5)).abs() < 1e-9, "{a}");
        let p = predict_mixed(TestFn::Cos, Weight::Positive, |w| 0.5 * w * w);
        assert!((p - 0.5 * (1.5f64).powf(-0.5)).abs() < 1e-9);
    }

    #[test]
    fn one_weight_is_plain_mean() {
        let s = [0.1, -0.4, 0.7, 1.3];
        let c = weighted_limit_check(&s, &[5.0, -2.0, 0.3, 0.0], TestFn::Cos, Weight::One, 0.0, 3.0).unwrap();
        let m = s.iter().map(|x| x.cos()).sum::<f64>() / 4.0;
        assert!((c.observed.value - m).abs() < 1e-15);
    }
}
