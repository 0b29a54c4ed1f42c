//! Models, driving noise and Euler–Maruyama integration.

mod euler;
mod lattice;
mod model;
mod models;

pub use euler::{
    euler_step, integrate_euler, integrate_euler_checked, log_weight_increment, integrate_reference, simulate_observation, BoundCheck,
    EulerTrajectory, YSource,
};
pub use lattice::{coarsen_increments, sample_lattice, BrownianLattice, ObservationPath};
pub use model::{Coefficients, FilterModel, Partials, TestFunction};
pub use models::{model_by_id, AffineModel, CoupledModel, MODEL_IDS};

/// Grid projector `floor(t n) / n`.
pub fn eta(n: usize, t: f64) -> f64 {
    (t * n as f64).floor() / n as f64
}

/// Index of the last grid point at or before `t` on an `n`-step grid.
pub fn eta_index(n: usize, t: f64) -> usize {
    ((t * n as f64).floor() as usize).min(n)
}

pub fn is_power_of_two(n: usize) -> bool {
    n > 0 && n & (n - 1) == 0
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eta_examples() {
        assert_eq!(eta(4, 0.3), 0.25);
        assert_eq!(eta(8, 1.0), 1.0);
        assert_eq!(eta(5, 0.2), 0.2);
        assert_eq!(eta_index(4, 0.3), 1);
        for k in 0..=16 {
            let t = k as f64 / 16.0;
            assert_eq!(eta(16, eta(16, t)), eta(16, t));
        }
    }
}
