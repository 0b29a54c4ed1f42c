//! Double stochastic integrals on a Brownian lattice and Monte Carlo checks
//! of their limits: quadratic variation, stable limits with closed-form
//! conditional projections, vanishing projections, and the exchange of
//! conditional expectation with stochastic integration.

mod cases;
mod checks;
mod double;

pub use cases::{conditional_double_integral, FubiniCase, LimitCase, ZeroCase};
pub use checks::{
    fubini_check, lag_integral_check, qv_limit_check, zero_limit_check, FubiniResult, LagForm, LevelRow,
};
pub use double::{double_integral, double_integral_weighted};

use rayon::prelude::*;
use serde::Serialize;

use crate::sde::{sample_lattice, BrownianLattice};
use crate::{Error, Result};

/// A reproducible family of lattices sharing dimensions and a master seed.
/// Lattice `k` is keyed by path index `start + k`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct LatticeStream {
    pub e: usize,
    pub d: usize,
    pub n_fine: usize,
    pub seed: u64,
    pub start: u64,
    pub count: usize,
}

impl LatticeStream {
    pub fn new(e: usize, d: usize, n_fine: usize, seed: u64, count: usize) -> Self {
        Self { e, d, n_fine, seed, start: 0, count }
    }

    pub fn lattice(&self, k: usize) -> Result<BrownianLattice> {
        if k >= self.count {
            return Err(Error::Config(format!("lattice {k} of a stream of {}", self.count)));
        }
        sample_lattice(self.e, self.d, self.n_fine, self.seed, self.start + k as u64)
    }

    /// Applies `f` to every lattice in parallel; results keep stream order,
    /// so the output does not depend on the thread count.
    pub fn map<T, F>(&self, f: F) -> Result<Vec<T>>
    where
        T: Send,
        F: Fn(&BrownianLattice) -> Result<T> + Sync,
    {
        (0..self.count).into_par_iter().map(|k| f(&self.lattice(k)?)).collect()
    }
}

/// Adapted integrands evaluated at the left end of each fine step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum Adapted {
    Const(f64),
    Time,
    /// Coordinate of the observation noise.
    W(usize),
    /// Coordinate of the signal noise.
    B(usize),
}

impl Adapted {
    pub fn sample(&self, lattice: &BrownianLattice) -> Result<Vec<f64>> {
        let n = lattice.n_fine;
        let running = |inc: &[f64], dim: usize, c: usize, name: &str| -> Result<Vec<f64>> {
            if c >= dim {
                return Err(Error::Dimension(format!("{name} coordinate {c} of a {dim}-dimensional noise")));
            }
            let mut acc = 0.0;
            Ok((0..n)
                .map(|m| {
                    let left = acc;
                    acc += inc[m * dim + c];
                    left
                })
                .collect())
        };
        match *self {
            Self::Const(c) => Ok(vec![c; n]),
            Self::Time => Ok((0..n).map(|m| m as f64 / n as f64).collect()),
            Self::W(c) => running(&lattice.dw, lattice.d, c, "W"),
            Self::B(c) => running(&lattice.db, lattice.e, c, "B"),
        }
    }
}
