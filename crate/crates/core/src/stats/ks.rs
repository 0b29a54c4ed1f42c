use serde::Serialize;

use crate::{Error, Result};

/// Minimum sample size for the asymptotic KS p-value.
pub const KS_MIN_SAMPLES: usize = 50;

const SERIES_TERMS: usize = 100;
const SERIES_TOL: f64 = 1e-10;

/// A labelled sample with optional nonnegative weights.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SampleSet {
    pub values: Vec<f64>,
    pub weights: Option<Vec<f64>>,
    pub label: String,
}

impl SampleSet {
    pub fn new(values: Vec<f64>, label: impl Into<String>) -> Result<Self> {
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Estimation(format!("non-finite sample at index {i}")));
        }
        Ok(Self { values, weights: None, label: label.into() })
    }

    pub fn with_weights(mut self, weights: Vec<f64>) -> Result<Self> {
        if weights.len() != self.values.len() {
            return Err(Error::Dimension(format!(
                "{} weights for {} samples",
                weights.len(),
                self.values.len()
            )));
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::Estimation("weights must be finite and nonnegative".into()));
        }
        if weights.iter().sum::<f64>() <= 0.0 {
            return Err(Error::Estimation("weights sum to zero".into()));
        }
        self.weights = Some(weights);
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Kish effective sample size `(Σw)² / Σw²`; the plain size when
    /// unweighted.
    pub fn effective_size(&self) -> f64 {
        match &self.weights {
            None => self.values.len() as f64,
            Some(w) => {
                let s: f64 = w.iter().sum();
                s * s / w.iter().map(|x| x * x).sum::<f64>()
            }
        }
    }

    /// Sorted `(value, cumulative weight fraction)` at every distinct value.
    pub fn ecdf(&self) -> Vec<(f64, f64)> {
        let n = self.values.len();
        let weight = |i: usize| self.weights.as_ref().map_or(1.0, |w| w[i]);
        let mut idx: Vec<usize> = (0..n).collect();
        idx.sort_by(|&a, &b| self.values[a].total_cmp(&self.values[b]).then(a.cmp(&b)));
        let total: f64 = (0..n).map(weight).sum();
        let mut out: Vec<(f64, f64)> = Vec::with_capacity(n);
        let mut acc = 0.0;
        for &i in &idx {
            acc += weight(i);
            let x = self.values[i];
            match out.last_mut() {
                Some(last) if last.0 == x => last.1 = acc / total,
                _ => out.push((x, acc / total)),
            }
        }
        out
    }
}

/// Two-sided KS statistic and its asymptotic p-value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KsResult {
    pub statistic: f64,
    pub p_value: f64,
    pub effective_size: f64,
}

/// Survival function of the Kolmogorov distribution, `P(K > λ)`.
pub fn kolmogorov_survival(lambda: f64) -> f64 {
    if lambda <= 0.0 {
        return 1.0;
    }
    if lambda < 1.0 {
        // Theta-function form, fast for small λ.
        let c = std::f64::consts::PI.powi(2) / (8.0 * lambda * lambda);
        let mut sum = 0.0;
        for k in 1..=SERIES_TERMS {
            let j = (2 * k - 1) as f64;
            let term = (-j * j * c).exp();
            sum += term;
            if term < SERIES_TOL * sum {
                break;
            }
        }
        return (1.0 - (2.0 * std::f64::consts::PI).sqrt() / lambda * sum).clamp(0.0, 1.0);
    }
    let mut sum = 0.0;
    for k in 1..=SERIES_TERMS {
        let kf = k as f64;
        let term = (-2.0 * kf * kf * lambda * lambda).exp();
        sum += if k % 2 == 1 { term } else { -term };
        if term < SERIES_TOL {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// Two-sided Kolmogorov–Smirnov test of a (weighted) sample against a
/// continuous CDF. Weighted samples use the weighted ECDF and the effective
/// sample size in the asymptotic p-value.
pub fn ks_test(samples: &SampleSet, cdf: impl Fn(f64) -> f64) -> Result<KsResult> {
    if samples.len() < KS_MIN_SAMPLES {
        return Err(Error::Estimation(format!(
            "KS test needs at least {KS_MIN_SAMPLES} samples, got {}",
            samples.len()
        )));
    }
    let mut below = 0.0;
    let mut d: f64 = 0.0;
    for (x, f) in samples.ecdf() {
        let c = cdf(x);
        d = d.max((f - c).abs()).max((c - below).abs());
        below = f;
    }
    let n_eff = samples.effective_size();
    Ok(KsResult { statistic: d, p_value: kolmogorov_survival(n_eff.sqrt() * d), effective_size: n_eff })
}

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * statrs::function::erf::erfc(-x / std::f64::consts::SQRT_2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{fill_normal, stream, Purpose};

    #[test]
    fn kolmogorov_known_values() {
        // Standard critical values of the Kolmogorov distribution.
        assert!((kolmogorov_survival(1.3581) - 0.05).abs() < 2e-4);
        assert!((kolmogorov_survival(1.6276) - 0.01).abs() < 1e-4);
        assert!((kolmogorov_survival(0.8276) - 0.5).abs() < 1e-3);
        assert_eq!(kolmogorov_survival(0.0), 1.0);
        assert!(kolmogorov_survival(10.0) < 1e-80);
    }

    #[test]
    fn series_forms_agree_at_switch() {
        let a = kolmogorov_survival(1.0 - 1e-12);
        let b = kolmogorov_survival(1.0);
        assert!((a - b).abs() < 1e-9, "{a} vs {b}");
    }

    #[test]
    fn constant_samples_fail() {
        let s = SampleSet::new(vec![0.3; 100], "c").unwrap();
        let r = ks_test(&s, normal_cdf).unwrap();
        assert!(r.statistic >= 0.5);
        assert!(r.p_value < 1e-10);
    }

    #[test]
    fn unit_weights_match_unweighted() {
        let mut v = vec![0.0; 500];
        fill_normal(&mut stream(1, Purpose::Synthetic, 0), &mut v, 1.0);
        let plain = SampleSet::new(v.clone(), "p").unwrap();
        let weighted = plain.clone().with_weights(vec![2.5; 500]).unwrap();
        let a = ks_test(&plain, normal_cdf).unwrap();
        let b = ks_test(&weighted, normal_cdf).unwrap();
        assert!((a.statistic - b.statistic).abs() < 1e-14);
        assert!((a.p_value - b.p_value).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(SampleSet::new(vec![f64::NAN], "x").is_err());
        let s = SampleSet::new(vec![0.0; 60], "x").unwrap();
        assert!(s.clone().with_weights(vec![1.0; 59]).is_err());
        assert!(s.clone().with_weights(vec![-1.0; 60]).is_err());
        assert!(ks_test(&SampleSet::new(vec![0.0; 10], "x").unwrap(), normal_cdf).is_err());
    }

    #[test]
    fn normal_cdf_values() {
        assert_eq!(normal_cdf(0.0), 0.5);
        assert!((normal_cdf(1.959963984540054) - 0.975).abs() < 1e-10);
    }
}
