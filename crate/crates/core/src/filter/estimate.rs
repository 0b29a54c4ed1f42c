use serde::Serialize;

use super::sweep::{run_sweep, Contributions, SweepOutput, SweepSpec};
use super::{Scheme, WeightScheme};
use crate::rng::{derive_seed, Purpose};
use crate::sde::{
    coarsen_increments, log_weight_increment, BoundCheck, BrownianLattice, EulerTrajectory,
    FilterModel, ObservationPath, TestFunction,
};
use crate::stats::{mean, mean_se, variance_about};
use crate::{Error, Result};

/// `log Φ̄ⁿ₁(U, V)`: the log-density with the sensor frozen at the level-`n`
/// grid points of `x_path` (whose own grid must refine level `n`).
pub fn log_weight(
    model: &dyn FilterModel,
    x_path: &EulerTrajectory,
    y: &ObservationPath,
    n: usize,
) -> Result<f64> {
    let d = model.obs_dim();
    if x_path.e != model.signal_dim() || y.d != d {
        return Err(Error::Dimension("path and model dimensions differ".into()));
    }
    if n == 0 || !x_path.n.is_multiple_of(n) || !y.n_fine.is_multiple_of(n) {
        return Err(Error::Dimension(format!(
            "level {n} is not refined by paths with {} and {} steps",
            x_path.n, y.n_fine
        )));
    }
    let dy = coarsen_increments(&y.dy, d, n)?;
    let (sx, sy) = (x_path.n / n, y.n_fine / n);
    let mut h = vec![0.0; d];
    let mut lw = 0.0;
    for k in 0..n {
        model.eval_h(x_path.state(k * sx), y.value(k * sy), &mut h);
        lw += log_weight_increment(&h, &dy[k * d..(k + 1) * d], 1.0 / n as f64);
    }
    Ok(lw)
}

/// A particle mean (or ratio of means) with its Monte Carlo error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ParticleEstimate {
    pub value: f64,
    pub std_error: f64,
    pub particles: usize,
    pub failures: usize,
}

impl SweepOutput {
    fn level_index(&self, n: usize) -> Result<usize> {
        self.levels
            .iter()
            .position(|&l| l == n)
            .ok_or_else(|| Error::Config(format!("level {n} was not part of the sweep")))
    }

    pub fn contributions(&self, ws: WeightScheme) -> Result<&Contributions> {
        Ok(match ws {
            WeightScheme::Reference => &self.reference,
            WeightScheme::Level(Scheme::I, n) => &self.scheme_i[self.level_index(n)?],
            WeightScheme::Level(Scheme::II, n) => &self.scheme_ii[self.level_index(n)?],
        })
    }

    fn wrap(&self, value: f64, std_error: f64) -> ParticleEstimate {
        ParticleEstimate { value, std_error, particles: self.reference.g.len(), failures: self.failures }
    }

    /// Unnormalized estimate `ρ̂(g)`.
    pub fn rho(&self, ws: WeightScheme) -> Result<ParticleEstimate> {
        let (v, se) = mean_se(&self.contributions(ws)?.g);
        Ok(self.wrap(v, se))
    }

    /// `ρ̂(1)`.
    pub fn rho_one(&self, ws: WeightScheme) -> Result<ParticleEstimate> {
        let (v, se) = mean_se(&self.contributions(ws)?.one);
        Ok(self.wrap(v, se))
    }

    /// Self-normalized estimate `ρ̂(g) / ρ̂(1)` with a delta-method error.
    pub fn normalized(&self, ws: WeightScheme) -> Result<ParticleEstimate> {
        let c = self.contributions(ws)?;
        let (pi, infl) = ratio_influence(c);
        let se = (variance_about(&infl, mean(&infl)) / infl.len() as f64).sqrt();
        Ok(self.wrap(pi, se))
    }

    /// `ρ̂^{ref}(g) − ρ̂ⁿ(g)` as one particle mean of pathwise differences.
    pub fn difference(&self, scheme: Scheme, n: usize) -> Result<ParticleEstimate> {
        let lvl = self.contributions(WeightScheme::Level(scheme, n))?;
        let diffs: Vec<f64> = self.reference.g.iter().zip(&lvl.g).map(|(a, b)| a - b).collect();
        let (v, se) = mean_se(&diffs);
        Ok(self.wrap(v, se))
    }

    /// `π̂^{ref}(g) − π̂ⁿ(g)` with a joint delta-method error.
    pub fn normalized_difference(&self, scheme: Scheme, n: usize) -> Result<ParticleEstimate> {
        let lvl = self.contributions(WeightScheme::Level(scheme, n))?;
        let (pi_ref, infl_ref) = ratio_influence(&self.reference);
        let (pi_lvl, infl_lvl) = ratio_influence(lvl);
        let infl: Vec<f64> = infl_ref.iter().zip(&infl_lvl).map(|(a, b)| a - b).collect();
        let se = (variance_about(&infl, mean(&infl)) / infl.len() as f64).sqrt();
        Ok(self.wrap(pi_ref - pi_lvl, se))
    }
}

/// Ratio `Σa / Σb` and the per-particle influence `(a − π b) / b̄`.
fn ratio_influence(c: &Contributions) -> (f64, Vec<f64>) {
    let a = mean(&c.g);
    let b = mean(&c.one);
    let pi = a / b;
    let infl = c.g.iter().zip(&c.one).map(|(x, w)| (x - pi * w) / b).collect();
    (pi, infl)
}

/// Particle estimate of `ρ(g)` (or of `π(g)` when `normalized`) given a
/// fixed observation path.
#[allow(clippy::too_many_arguments)]
pub fn rho_estimate(
    model: &dyn FilterModel,
    y: &ObservationPath,
    g: &TestFunction,
    scheme: WeightScheme,
    particles: usize,
    seed: u64,
    normalized: bool,
) -> Result<ParticleEstimate> {
    let levels: Vec<usize> = match scheme {
        WeightScheme::Reference => Vec::new(),
        WeightScheme::Level(_, n) => vec![n],
    };
    let spec = SweepSpec {
        model,
        g,
        levels: &levels,
        particles,
        particle_seed: seed,
        integrand_i: false,
        integrand_ii: None,
        bound: BoundCheck::for_model(model),
    };
    let out = run_sweep(&spec, y)?;
    if normalized {
        out.normalized(scheme)
    } else {
        out.rho(scheme)
    }
}

/// One rescaled error sample for one observation lattice.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ErrorSample {
    pub path_index: u64,
    pub n: usize,
    pub scheme: Scheme,
    pub raw: f64,
    pub rescaled: f64,
    /// Particle standard error of `raw`.
    pub std_error: f64,
    pub failures: usize,
}

/// Particle seed used for the observation lattice with index `path_index`.
pub fn particle_seed(seed: u64, path_index: u64) -> u64 {
    derive_seed(seed, Purpose::ParticleSeed, path_index)
}

fn check_level(lattice: &BrownianLattice, n: usize) -> Result<()> {
    if n == 0 || n > lattice.n_fine / 8 {
        return Err(Error::Config(format!(
            "level {n} must be at most n_fine / 8 = {}",
            lattice.n_fine / 8
        )));
    }
    Ok(())
}

fn sweep_for(
    model: &dyn FilterModel,
    lattice: &BrownianLattice,
    g: &TestFunction,
    n: usize,
    particles: usize,
    seed: u64,
) -> Result<SweepOutput> {
    check_level(lattice, n)?;
    let y = ObservationPath::brownian(lattice);
    let spec = SweepSpec {
        model,
        g,
        levels: &[n],
        particles,
        particle_seed: particle_seed(seed, lattice.path_index),
        integrand_i: false,
        integrand_ii: None,
        bound: BoundCheck::for_model(model),
    };
    run_sweep(&spec, &y)
}

/// `√n (ρ̂^{ref}(g) − ρ̂ⁿ(g))` with the observation taken as the lattice's
/// Brownian component.
#[allow(clippy::too_many_arguments)]
pub fn error_sample(
    model: &dyn FilterModel,
    lattice: &BrownianLattice,
    g: &TestFunction,
    scheme: Scheme,
    n: usize,
    particles: usize,
    seed: u64,
) -> Result<ErrorSample> {
    let out = sweep_for(model, lattice, g, n, particles, seed)?;
    let diff = out.difference(scheme, n)?;
    Ok(sample_from(lattice.path_index, n, scheme, diff))
}

/// `√n (π̂^{ref}(g) − π̂ⁿ(g))`.
#[allow(clippy::too_many_arguments)]
pub fn normalized_error_sample(
    model: &dyn FilterModel,
    lattice: &BrownianLattice,
    g: &TestFunction,
    scheme: Scheme,
    n: usize,
    particles: usize,
    seed: u64,
) -> Result<ErrorSample> {
    let out = sweep_for(model, lattice, g, n, particles, seed)?;
    let diff = out.normalized_difference(scheme, n)?;
    Ok(sample_from(lattice.path_index, n, scheme, diff))
}

pub(crate) fn sample_from(path_index: u64, n: usize, scheme: Scheme, diff: ParticleEstimate) -> ErrorSample {
    let root = (n as f64).sqrt();
    ErrorSample {
        path_index,
        n,
        scheme,
        raw: diff.value,
        rescaled: root * diff.value,
        std_error: diff.std_error,
        failures: diff.failures,
    }
}
