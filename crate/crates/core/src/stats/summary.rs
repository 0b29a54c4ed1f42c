use serde::Serialize;

/// Neumaier-compensated sum.
pub fn compensated_sum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

pub fn mean(values: &[f64]) -> f64 {
    compensated_sum(values.iter().copied()) / values.len() as f64
}

/// Unbiased sample variance around a given mean.
pub fn variance_about(values: &[f64], m: f64) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    compensated_sum(values.iter().map(|v| (v - m) * (v - m))) / (values.len() - 1) as f64
}

/// Mean and its standard error `sd / √N`.
pub fn mean_se(values: &[f64]) -> (f64, f64) {
    let m = mean(values);
    (m, (variance_about(values, m) / values.len() as f64).sqrt())
}

/// A statistic together with its Monte Carlo standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Estimate {
    pub value: f64,
    pub std_error: f64,
}

/// Moments of a sample with standard errors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Moments {
    pub n: usize,
    pub mean: Estimate,
    pub variance: Estimate,
}

/// Sample mean and unbiased variance. The variance standard error uses
/// the fourth central moment: `sqrt((m4 - s⁴) / N)`.
pub fn moments(values: &[f64]) -> Moments {
    let n = values.len();
    let m = mean(values);
    let var = variance_about(values, m);
    let m4 = compensated_sum(values.iter().map(|v| (v - m).powi(4))) / n as f64;
    let var_se = ((m4 - var * var).max(0.0) / n as f64).sqrt();
    Moments {
        n,
        mean: Estimate { value: m, std_error: (var / n as f64).sqrt() },
        variance: Estimate { value: var, std_error: var_se },
    }
}

/// Sample covariance of two aligned samples with a standard error from the
/// products' spread.
pub fn covariance(a: &[f64], b: &[f64]) -> Estimate {
    let (ma, mb) = (mean(a), mean(b));
    let prods: Vec<f64> = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).collect();
    let (c, se) = mean_se(&prods);
    let n = a.len() as f64;
    Estimate { value: c * n / (n - 1.0), std_error: se }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn compensation_recovers_small_terms() {
        let v = [1e16, 1.0, -1e16, 1.0];
        assert_eq!(compensated_sum(v), 2.0);
    }

    #[test]
    fn moments_of_known_sample() {
        let m = moments(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m.mean.value, 2.5);
        assert!((m.variance.value - 5.0 / 3.0).abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn permutation_invariant(mut v in proptest::collection::vec(-1e3f64..1e3, 2..60), seed in 0u64..1000) {
            let a = moments(&v);
            let n = v.len();
            let shift = (seed as usize) % n;
            v.rotate_left(shift);
            v.reverse();
            let b = moments(&v);
            prop_assert!((a.mean.value - b.mean.value).abs() <= 1e-12 * (1.0 + a.mean.value.abs()));
            prop_assert!((a.variance.value - b.variance.value).abs() <= 1e-9 * (1.0 + a.variance.value));
        }
    }
}
