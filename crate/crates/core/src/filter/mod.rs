//! Girsanov weights and particle estimates of the filter.

mod estimate;
mod kalman;
mod sweep;

use serde::{Deserialize, Serialize};

pub use estimate::{
    error_sample, log_weight, normalized_error_sample, particle_seed, rho_estimate, ErrorSample,
    ParticleEstimate,
};
pub(crate) use estimate::sample_from;
pub use kalman::{kalman_bucy, KalmanState};
pub use sweep::{run_sweep, Contributions, SweepOutput, SweepSpec};

/// Discretization scheme of a level-`n` estimator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Scheme {
    /// Density frozen on the coarse grid, signal at reference resolution.
    I,
    /// Signal and density both on the coarse grid.
    II,
}

impl Scheme {
    pub fn label(self) -> &'static str {
        match self {
            Scheme::I => "I",
            Scheme::II => "II",
        }
    }
}

/// Which density an estimate uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WeightScheme {
    Reference,
    Level(Scheme, usize),
}
