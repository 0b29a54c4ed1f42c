use super::is_power_of_two;
use crate::rng::{fill_normal, stream, Purpose};
use crate::{Error, Result};

/// Fine-grid Brownian increments of the signal noise `B` (e-dim) and the
/// observation noise `W` (d-dim). Row-major: `db[k * e + l]`.
#[derive(Debug, Clone)]
pub struct BrownianLattice {
    pub e: usize,
    pub d: usize,
    pub n_fine: usize,
    pub seed: u64,
    pub path_index: u64,
    pub db: Vec<f64>,
    pub dw: Vec<f64>,
}

pub fn sample_lattice(
    e: usize,
    d: usize,
    n_fine: usize,
    seed: u64,
    path_index: u64,
) -> Result<BrownianLattice> {
    if !is_power_of_two(n_fine) {
        return Err(Error::Config(format!("n_fine = {n_fine} is not a power of two")));
    }
    let scale = (1.0 / n_fine as f64).sqrt();
    let mut db = vec![0.0; n_fine * e];
    let mut dw = vec![0.0; n_fine * d];
    fill_normal(&mut stream(seed, Purpose::SignalNoise, path_index), &mut db, scale);
    fill_normal(&mut stream(seed, Purpose::ObservationNoise, path_index), &mut dw, scale);
    Ok(BrownianLattice { e, d, n_fine, seed, path_index, db, dw })
}

impl BrownianLattice {
    pub fn coarse_db(&self, n: usize) -> Result<Vec<f64>> {
        coarsen_increments(&self.db, self.e, n)
    }

    pub fn coarse_dw(&self, n: usize) -> Result<Vec<f64>> {
        coarsen_increments(&self.dw, self.d, n)
    }

    /// Terminal value `W_1` (fine sum, accumulated left to right).
    pub fn w1(&self) -> Vec<f64> {
        terminal(&self.dw, self.d)
    }

    pub fn b1(&self) -> Vec<f64> {
        terminal(&self.db, self.e)
    }
}

fn terminal(inc: &[f64], dim: usize) -> Vec<f64> {
    let mut out = vec![0.0; dim];
    for row in inc.chunks_exact(dim) {
        for (o, v) in out.iter_mut().zip(row) {
            *o += v;
        }
    }
    out
}

/// Block sums of `dim`-dimensional fine increments onto an `n`-step grid.
///
/// Sums are formed by pairwise halving, so the level-`n` increment is
/// bit-for-bit the sum of the two corresponding level-`2n` increments.
pub fn coarsen_increments(fine: &[f64], dim: usize, n: usize) -> Result<Vec<f64>> {
    let n_fine = fine.len() / dim;
    if n == 0 || n > n_fine || !n_fine.is_multiple_of(n) || !is_power_of_two(n_fine / n) {
        return Err(Error::Config(format!("level {n} does not divide n_fine = {n_fine}")));
    }
    let mut cur = fine.to_vec();
    let mut steps = n_fine;
    while steps > n {
        let half = steps / 2;
        let mut next = vec![0.0; half * dim];
        for k in 0..half {
            for c in 0..dim {
                next[k * dim + c] = cur[2 * k * dim + c] + cur[(2 * k + 1) * dim + c];
            }
        }
        cur = next;
        steps = half;
    }
    Ok(cur)
}

/// A fine-grid observation path: increments `dy[k * d + j]` and values
/// `y[k * d + j]` at `k / n_fine` with `Y_0 = 0`.
#[derive(Debug, Clone)]
pub struct ObservationPath {
    pub d: usize,
    pub n_fine: usize,
    pub dy: Vec<f64>,
    pub y: Vec<f64>,
}

impl ObservationPath {
    pub fn from_increments(dy: Vec<f64>, d: usize) -> Result<Self> {
        if d == 0 || !dy.len().is_multiple_of(d) {
            return Err(Error::Dimension(format!("{} increments for d = {d}", dy.len())));
        }
        let n_fine = dy.len() / d;
        if !is_power_of_two(n_fine) {
            return Err(Error::Config(format!("n_fine = {n_fine} is not a power of two")));
        }
        let mut y = vec![0.0; (n_fine + 1) * d];
        for k in 0..n_fine {
            for j in 0..d {
                y[(k + 1) * d + j] = y[k * d + j] + dy[k * d + j];
            }
        }
        Ok(Self { d, n_fine, dy, y })
    }

    /// `Y = W`: the observation is Brownian under the reference measure.
    pub fn brownian(lattice: &BrownianLattice) -> Self {
        Self::from_increments(lattice.dw.clone(), lattice.d).expect("lattice is well formed")
    }

    #[inline]
    pub fn value(&self, k: usize) -> &[f64] {
        &self.y[k * self.d..(k + 1) * self.d]
    }

    #[inline]
    pub fn increment(&self, k: usize) -> &[f64] {
        &self.dy[k * self.d..(k + 1) * self.d]
    }

    pub fn coarse_dy(&self, n: usize) -> Result<Vec<f64>> {
        coarsen_increments(&self.dy, self.d, n)
    }
}
