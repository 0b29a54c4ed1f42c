use serde::Serialize;

use super::ks::SampleSet;
use crate::{Error, Result};

/// Default lower bound on a usable variance estimate.
pub const VARIANCE_FLOOR: f64 = 1e-12;

/// Errors divided by the square root of their per-sample variance.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Standardized {
    pub samples: SampleSet,
    /// Positions in the input that were kept, in input order.
    pub kept: Vec<usize>,
    /// Samples whose variance estimate was at or below the floor.
    pub excluded: usize,
}

impl Standardized {
    /// True when every sample was excluded, which is the expected outcome
    /// for a model whose limit variance vanishes.
    pub fn is_degenerate(&self) -> bool {
        self.kept.is_empty()
    }
}

/// `Z = error / √V̂` per sample. Errors and variances must be aligned, i.e.
/// both ordered by path index. Samples with `V̂ ≤ floor` (or non-finite)
/// are excluded and counted rather than standardized.
pub fn standardize_mixed_normal(errors: &SampleSet, variances: &[f64], floor: f64) -> Result<Standardized> {
    if variances.len() != errors.len() {
        return Err(Error::Dimension(format!(
            "{} variances for {} errors",
            variances.len(),
            errors.len()
        )));
    }
    let kept: Vec<usize> = (0..errors.len()).filter(|&i| variances[i].is_finite() && variances[i] > floor).collect();
    let values = kept.iter().map(|&i| errors.values[i] / variances[i].sqrt()).collect();
    let mut samples = SampleSet::new(values, format!("{} standardized", errors.label))?;
    if let Some(w) = &errors.weights {
        let w: Vec<f64> = kept.iter().map(|&i| w[i]).collect();
        if w.iter().sum::<f64>() > 0.0 {
            samples = samples.with_weights(w)?;
        }
    }
    Ok(Standardized { excluded: errors.len() - kept.len(), kept, samples })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_errors_stay_zero() {
        let e = SampleSet::new(vec![0.0; 5], "e").unwrap();
        let s = standardize_mixed_normal(&e, &[1.0, 2.0, 3.0, 4.0, 5.0], VARIANCE_FLOOR).unwrap();
        assert!(s.samples.values.iter().all(|&z| z == 0.0));
        assert_eq!(s.excluded, 0);
    }

    #[test]
    fn zero_variances_are_all_excluded() {
        let e = SampleSet::new(vec![0.1, -0.2, 0.3], "e").unwrap();
        let s = standardize_mixed_normal(&e, &[0.0; 3], VARIANCE_FLOOR).unwrap();
        assert!(s.is_degenerate());
        assert_eq!(s.excluded, 3);
    }

    #[test]
    fn partial_exclusion_keeps_alignment() {
        let e = SampleSet::new(vec![2.0, 5.0, 3.0], "e").unwrap();
        let s = standardize_mixed_normal(&e, &[4.0, 0.0, 9.0], VARIANCE_FLOOR).unwrap();
        assert_eq!(s.kept, vec![0, 2]);
        assert_eq!(s.samples.values, vec![1.0, 1.0]);
        assert!(standardize_mixed_normal(&e, &[1.0], VARIANCE_FLOOR).is_err());
    }
}
