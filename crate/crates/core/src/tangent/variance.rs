use serde::Serialize;

use super::{SignConvention, TangentConvention};
use crate::filter::{run_sweep, Scheme, SweepSpec};
use super::flow::{f_coeff, scheme_i_integrand};
use crate::rng::{fill_normal, stream, Purpose};
use crate::sde::{BoundCheck, FilterModel, ObservationPath, TestFunction};
use crate::Result;

/// Number of particle groups used for jackknife standard errors.
pub const GROUPS: usize = 20;

/// Group-wise particle sums of an integrand grid function for `g` and for
/// `g ≡ 1`, plus the matching reference-density sums.
#[derive(Debug, Clone)]
pub struct IntegrandSums {
    pub n_fine: usize,
    pub d: usize,
    /// `[group][k][i * d + j]`
    pub g: Vec<f64>,
    pub one: Vec<f64>,
    pub ref_g: Vec<f64>,
    pub ref_1: Vec<f64>,
    pub counts: Vec<usize>,
    /// Particles dropped because their flow could not be inverted.
    pub excluded: usize,
}

impl IntegrandSums {
    pub fn new(n_fine: usize, d: usize) -> Self {
        let len = GROUPS * (n_fine + 1) * d * d;
        Self {
            n_fine,
            d,
            g: vec![0.0; len],
            one: vec![0.0; len],
            ref_g: vec![0.0; GROUPS],
            ref_1: vec![0.0; GROUPS],
            counts: vec![0; GROUPS],
            excluded: 0,
        }
    }

    fn row_len(&self) -> usize {
        (self.n_fine + 1) * self.d * self.d
    }

    pub fn add_reference(&mut self, group: usize, g_phi: f64, phi: f64) {
        self.ref_g[group] += g_phi;
        self.ref_1[group] += phi;
    }

    #[inline]
    pub fn add_row(&mut self, group: usize, k: usize, wg: f64, w1: f64, vals_g: &[f64], vals_1: &[f64]) {
        let d2 = self.d * self.d;
        let base = group * self.row_len() + k * d2;
        for ij in 0..d2 {
            self.g[base + ij] += wg * vals_g[ij];
            self.one[base + ij] += w1 * vals_1[ij];
        }
    }

    pub fn finish_particle(&mut self, group: usize) {
        self.counts[group] += 1;
    }

    pub fn particles(&self) -> usize {
        self.counts.iter().sum()
    }

    /// Adds another set of sums (e.g. from a second batch of particles).
    pub fn merge(&mut self, other: &IntegrandSums) {
        for (a, b) in self.g.iter_mut().zip(&other.g) {
            *a += b;
        }
        for (a, b) in self.one.iter_mut().zip(&other.one) {
            *a += b;
        }
        for gidx in 0..GROUPS {
            self.ref_g[gidx] += other.ref_g[gidx];
            self.ref_1[gidx] += other.ref_1[gidx];
            self.counts[gidx] += other.counts[gidx];
        }
        self.excluded += other.excluded;
    }

    /// Totals over all groups.
    fn totals(&self) -> Totals {
        let len = self.row_len();
        let mut t = Totals { g: vec![0.0; len], one: vec![0.0; len], ref_g: 0.0, ref_1: 0.0, count: 0 };
        for gidx in 0..GROUPS {
            let base = gidx * len;
            for c in 0..len {
                t.g[c] += self.g[base + c];
                t.one[c] += self.one[base + c];
            }
            t.ref_g += self.ref_g[gidx];
            t.ref_1 += self.ref_1[gidx];
            t.count += self.counts[gidx];
        }
        t
    }

    /// `full` without group `skip`.
    fn without(&self, full: &Totals, skip: usize) -> Totals {
        let len = self.row_len();
        let base = skip * len;
        Totals {
            g: full.g.iter().zip(&self.g[base..base + len]).map(|(a, b)| a - b).collect(),
            one: full.one.iter().zip(&self.one[base..base + len]).map(|(a, b)| a - b).collect(),
            ref_g: full.ref_g - self.ref_g[skip],
            ref_1: full.ref_1 - self.ref_1[skip],
            count: full.count - self.counts[skip],
        }
    }

    /// Integrand grid `û` (or `μ̂` when `normalized` is set) from totals.
    fn grid(t: &Totals, normalized: Option<SignConvention>) -> Vec<f64> {
        let m = t.count as f64;
        match normalized {
            None => t.g.iter().map(|v| v / m).collect(),
            Some(sign) => {
                let rho1 = t.ref_1 / m;
                let pi = t.ref_g / t.ref_1;
                t.g.iter()
                    .zip(&t.one)
                    .map(|(ug, u1)| (ug / m) / rho1 + sign.factor() * pi * (u1 / m) / rho1)
                    .collect()
            }
        }
    }

    pub fn estimate(&self, scheme: Scheme, normalized: Option<SignConvention>) -> VarianceEstimate {
        let full = self.totals();
        let u = Self::grid(&full, normalized);
        let v_hat = quadratic_form(&u, self.n_fine, self.d, 1);
        let included: Vec<usize> = (0..GROUPS).filter(|&g| self.counts[g] > 0).collect();
        let v_hat_stderr = if included.len() >= 2 {
            let loo: Vec<f64> = included
                .iter()
                .map(|&g| quadratic_form(&Self::grid(&self.without(&full, g), normalized), self.n_fine, self.d, 1))
                .collect();
            let k = loo.len() as f64;
            let mean = loo.iter().sum::<f64>() / k;
            ((k - 1.0) / k * loo.iter().map(|v| (v - mean).powi(2)).sum::<f64>()).sqrt()
        } else {
            f64::NAN
        };
        VarianceEstimate {
            scheme,
            sign_convention: normalized,
            d: self.d,
            n_fine: self.n_fine,
            u,
            v_hat,
            v_hat_stderr,
            particles: self.particles(),
            excluded: self.excluded,
        }
    }
}

struct Totals {
    g: Vec<f64>,
    one: Vec<f64>,
    ref_g: f64,
    ref_1: f64,
    count: usize,
}

/// `½ Σ_ij ∫ |u^{ij}_s|² ds` by the trapezoid rule on every `stride`-th grid
/// point of an `n_fine`-step grid.
fn quadratic_form(u: &[f64], n_fine: usize, d: usize, stride: usize) -> f64 {
    let d2 = d * d;
    let steps = n_fine / stride;
    let h = stride as f64 / n_fine as f64;
    let sq = |k: usize| -> f64 { u[k * stride * d2..(k * stride + 1) * d2].iter().map(|v| v * v).sum() };
    let mut s = 0.5 * (sq(0) + sq(steps));
    for k in 1..steps {
        s += sq(k);
    }
    0.5 * s * h
}

/// Particle estimate of the limit conditional variance of one error.
#[derive(Debug, Clone, Serialize)]
pub struct VarianceEstimate {
    pub scheme: Scheme,
    /// `Some` for the normalized filter.
    pub sign_convention: Option<SignConvention>,
    pub d: usize,
    pub n_fine: usize,
    /// Grid function `[k][i * d + j]` at `s = k / n_fine`.
    #[serde(skip)]
    pub u: Vec<f64>,
    pub v_hat: f64,
    pub v_hat_stderr: f64,
    pub particles: usize,
    pub excluded: usize,
}

impl VarianceEstimate {
    /// `V̂` recomputed on every `stride`-th grid point.
    pub fn v_hat_on_subgrid(&self, stride: usize) -> f64 {
        quadratic_form(&self.u, self.n_fine, self.d, stride)
    }

    pub fn u_at(&self, k: usize, i: usize, j: usize) -> f64 {
        self.u[k * self.d * self.d + i * self.d + j]
    }
}

fn sums_for(
    model: &dyn FilterModel,
    y: &ObservationPath,
    g: &TestFunction,
    particles: usize,
    seed: u64,
    scheme: Scheme,
    convention: TangentConvention,
) -> Result<IntegrandSums> {
    let spec = SweepSpec {
        model,
        g,
        levels: &[],
        particles,
        particle_seed: seed,
        integrand_i: scheme == Scheme::I,
        integrand_ii: (scheme == Scheme::II).then_some(convention),
        bound: BoundCheck::for_model(model),
    };
    let out = run_sweep(&spec, y)?;
    Ok(match scheme {
        Scheme::I => out.integrand_i,
        Scheme::II => out.integrand_ii,
    }
    .expect("integrand requested"))
}

/// `û^{ij}_s(g) = Ẽ[g(X₁) a^{ij}(X_s, Y_s) Φ₁ | Y]` and `V̂`.
pub fn u_estimate_scheme_i(
    model: &dyn FilterModel,
    y: &ObservationPath,
    g: &TestFunction,
    particles: usize,
    seed: u64,
) -> Result<VarianceEstimate> {
    let sums = sums_for(model, y, g, particles, seed, Scheme::I, TangentConvention::Derived)?;
    Ok(sums.estimate(Scheme::I, None))
}

/// Flow-transported integrand of the scheme that also discretizes the signal.
pub fn u_estimate_scheme_ii(
    model: &dyn FilterModel,
    y: &ObservationPath,
    g: &TestFunction,
    particles: usize,
    seed: u64,
    convention: TangentConvention,
) -> Result<VarianceEstimate> {
    let sums = sums_for(model, y, g, particles, seed, Scheme::II, convention)?;
    Ok(sums.estimate(Scheme::II, None))
}

/// Normalized-filter integrand `μ̂` for either scheme.
#[allow(clippy::too_many_arguments)]
pub fn mu_estimate(
    model: &dyn FilterModel,
    y: &ObservationPath,
    g: &TestFunction,
    scheme: Scheme,
    particles: usize,
    seed: u64,
    convention: TangentConvention,
    sign: SignConvention,
) -> Result<VarianceEstimate> {
    let sums = sums_for(model, y, g, particles, seed, scheme, convention)?;
    Ok(sums.estimate(scheme, Some(sign)))
}

/// True when the coefficient tensors of both schemes vanish at every one of
/// `probes` random points `(x, y)`, so that the limit variance is zero and
/// errors decay faster than `n^{-1/2}`.
pub fn integrand_vanishes(model: &dyn FilterModel, probes: usize, seed: u64) -> bool {
    let (e, d) = (model.signal_dim(), model.obs_dim());
    let mut rng = stream(seed, Purpose::Synthetic, 0);
    let mut x = vec![0.0; e];
    let mut y = vec![0.0; d];
    let mut a = vec![0.0; d * d];
    let mut f = vec![0.0; d * d * (e + 1)];
    (0..probes).all(|_| {
        fill_normal(&mut rng, &mut x, 2.0);
        fill_normal(&mut rng, &mut y, 2.0);
        scheme_i_integrand(model, &x, &y, &mut a);
        f_coeff(model, &x, &y, &mut f);
        a.iter().chain(&f).all(|v| *v == 0.0)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sde::model_by_id;

    #[test]
    fn degenerate_models_are_detected() {
        assert!(integrand_vanishes(model_by_id("standard").unwrap().as_ref(), 50, 1));
        assert!(integrand_vanishes(model_by_id("linear-gaussian").unwrap().as_ref(), 50, 1));
        assert!(!integrand_vanishes(model_by_id("coupled").unwrap().as_ref(), 50, 1));
    }

    #[test]
    fn quadrature_of_constant_integrand() {
        let n = 16;
        let u = vec![2.0; (n + 1) * 4];
        // ½ · 4 entries · 4 · 1
        assert!((quadratic_form(&u, n, 2, 1) - 8.0).abs() < 1e-12);
        assert!((quadratic_form(&u, n, 2, 4) - 8.0).abs() < 1e-12);
    }

    #[test]
    fn linear_integrand_trapezoid() {
        let n = 1024;
        let u: Vec<f64> = (0..=n).map(|k| k as f64 / n as f64).collect();
        assert!((quadratic_form(&u, n, 1, 1) - 1.0 / 6.0).abs() < 1e-6);
    }
}
