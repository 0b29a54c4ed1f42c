//! Single-pass particle engine.
//!
//! Each particle is advanced once over the fine grid. Along the way the
//! engine carries the reference path and its log-density, the frozen
//! scheme-I log-densities of every requested level, the level-`n` Euler
//! paths of scheme II, and optionally the first-variation flow needed by
//! the variance integrands. Coarse increments are formed online with the
//! same pairwise sums as [`coarsen_increments`](crate::sde::coarsen_increments),
//! so every level is bit-for-bit what the standalone integrator produces.

use rand_chacha::ChaCha8Rng;

use crate::linalg::SmallMat;
use crate::rng::{normal, stream, Purpose};
use crate::sde::{
    euler_step, is_power_of_two, log_weight_increment, BoundCheck, Coefficients, FilterModel,
    ObservationPath, Partials, TestFunction,
};
use crate::tangent::{
    f_coeff_from, invert_checked_into, scheme_i_integrand_from, tangent_generator,
    IntegrandSums, TangentConvention, GROUPS,
};
use crate::{Error, Result};

/// What to compute for one observation path.
pub struct SweepSpec<'a> {
    pub model: &'a dyn FilterModel,
    pub g: &'a TestFunction,
    /// Coarse levels for both schemes; each must divide the fine grid.
    pub levels: &'a [usize],
    pub particles: usize,
    pub particle_seed: u64,
    /// Accumulate the scheme-I variance integrand along the reference paths.
    pub integrand_i: bool,
    /// Accumulate the flow-transported scheme-II integrand, with the given
    /// drift convention for the log-density row of the flow.
    pub integrand_ii: Option<TangentConvention>,
    pub bound: BoundCheck,
}

/// Per-particle contributions `g(X₁)Φ₁` and `Φ₁` of one estimator, aligned
/// across estimators by particle.
#[derive(Debug, Clone, Default)]
pub struct Contributions {
    pub g: Vec<f64>,
    pub one: Vec<f64>,
}

impl Contributions {
    fn with_capacity(m: usize) -> Self {
        Self { g: Vec::with_capacity(m), one: Vec::with_capacity(m) }
    }

    fn push(&mut self, g: f64, one: f64) {
        self.g.push(g);
        self.one.push(one);
    }
}

#[derive(Debug, Clone)]
pub struct SweepOutput {
    pub n_fine: usize,
    pub levels: Vec<usize>,
    pub attempted: usize,
    pub failures: usize,
    pub first_failure: Option<String>,
    pub reference: Contributions,
    pub scheme_i: Vec<Contributions>,
    pub scheme_ii: Vec<Contributions>,
    /// Scheme-I integrand sums when requested.
    pub integrand_i: Option<IntegrandSums>,
    /// Scheme-II integrand sums when requested.
    pub integrand_ii: Option<IntegrandSums>,
}

/// Online pairwise block sums of fine increments.
struct BlockStack {
    width: usize,
    levels: Vec<u32>,
    values: Vec<f64>,
}

impl BlockStack {
    fn new(width: usize, depth: usize) -> Self {
        Self { width, levels: Vec::with_capacity(depth), values: Vec::with_capacity(depth * width) }
    }

    fn clear(&mut self) {
        self.levels.clear();
        self.values.clear();
    }

    /// Pushes one fine increment and reports every completed dyadic block
    /// (its level `r`, i.e. `2^r` fine steps, and its sum).
    fn push(&mut self, inc: &[f64], mut on_block: impl FnMut(u32, &[f64]) -> Result<()>) -> Result<()> {
        self.levels.push(0);
        self.values.extend_from_slice(inc);
        on_block(0, &self.values[self.values.len() - self.width..])?;
        while self.levels.len() >= 2 {
            let top = self.levels.len() - 1;
            if self.levels[top] != self.levels[top - 1] {
                break;
            }
            let w = self.width;
            let right_start = top * w;
            let left_start = (top - 1) * w;
            for c in 0..w {
                self.values[left_start + c] += self.values[right_start + c];
            }
            self.values.truncate(right_start);
            self.levels.pop();
            self.levels[top - 1] += 1;
            on_block(self.levels[top - 1], &self.values[left_start..])?;
        }
        Ok(())
    }
}

struct LevelState {
    n: usize,
    stride: usize,
    dt: f64,
    h_frozen: Vec<f64>,
    lw_i: f64,
    x: Vec<f64>,
    x_next: Vec<f64>,
    coef: Coefficients,
    lw_ii: f64,
}

/// Runs the particle engine for one observation path.
pub fn run_sweep(spec: &SweepSpec<'_>, y: &ObservationPath) -> Result<SweepOutput> {
    let model = spec.model;
    let (e, d) = (model.signal_dim(), model.obs_dim());
    let n_fine = y.n_fine;
    if y.d != d {
        return Err(Error::Dimension(format!("observation dimension {} for a model with d = {d}", y.d)));
    }
    spec.g.check_dim(e)?;
    if spec.particles < 2 {
        return Err(Error::Config("at least two particles are required".into()));
    }
    for &n in spec.levels {
        if n == 0 || n > n_fine || !n_fine.is_multiple_of(n) || !is_power_of_two(n) {
            return Err(Error::Config(format!("level {n} does not divide n_fine = {n_fine}")));
        }
    }
    if spec.integrand_ii.is_some() && e + 1 > crate::linalg::MAX_DIM {
        return Err(Error::Dimension(format!("signal dimension {e} too large for the flow")));
    }

    let m = spec.particles;
    let depth = n_fine.trailing_zeros() as usize + 2;

    let mut levels: Vec<LevelState> = spec
        .levels
        .iter()
        .map(|&n| LevelState {
            n,
            stride: n_fine / n,
            dt: 1.0 / n as f64,
            h_frozen: vec![0.0; d],
            lw_i: 0.0,
            x: vec![0.0; e],
            x_next: vec![0.0; e],
            coef: Coefficients::new(e, d),
            lw_ii: 0.0,
        })
        .collect();
    // Level index by block depth r (block of 2^r fine steps).
    let mut level_at_depth: Vec<Vec<usize>> = vec![Vec::new(); depth];
    for (idx, lv) in levels.iter().enumerate() {
        level_at_depth[lv.stride.trailing_zeros() as usize].push(idx);
    }

    let mut out = SweepOutput {
        n_fine,
        levels: spec.levels.to_vec(),
        attempted: m,
        failures: 0,
        first_failure: None,
        reference: Contributions::with_capacity(m),
        scheme_i: vec![Contributions::with_capacity(m); levels.len()],
        scheme_ii: vec![Contributions::with_capacity(m); levels.len()],
        integrand_i: spec.integrand_i.then(|| IntegrandSums::new(n_fine, d)),
        integrand_ii: spec.integrand_ii.map(|_| IntegrandSums::new(n_fine, d)),
    };

    // Literal dimensions let the compiler unroll the small per-step loops.
    match (e, d) {
        (1, 1) => particle_loop(spec, y, 1, 1, &mut levels, &level_at_depth, &mut out),
        (2, 2) => particle_loop(spec, y, 2, 2, &mut levels, &level_at_depth, &mut out),
        _ => particle_loop(spec, y, e, d, &mut levels, &level_at_depth, &mut out),
    }

    if out.reference.g.is_empty() {
        return Err(Error::Estimation(format!(
            "all {m} particles failed; first failure: {}",
            out.first_failure.as_deref().unwrap_or("unknown")
        )));
    }
    Ok(out)
}

#[inline(always)]
fn particle_loop(
    spec: &SweepSpec<'_>,
    y: &ObservationPath,
    e: usize,
    d: usize,
    levels: &mut [LevelState],
    level_at_depth: &[Vec<usize>],
    out: &mut SweepOutput,
) {
    let model = spec.model;
    let n_fine = y.n_fine;
    let m = spec.particles;
    let dt = 1.0 / n_fine as f64;
    let sqdt = dt.sqrt();
    let d2 = d * d;
    let md = e + 1;
    let with_partials = spec.integrand_i || spec.integrand_ii.is_some();
    let mut stack = BlockStack::new(e + d, level_at_depth.len());
    // Observation-only model terms, computed once per grid point.
    let cache_len = model.y_cache_len();
    let mut y_cache = vec![0.0; (n_fine + 1) * cache_len];
    if cache_len > 0 {
        for (k, chunk) in y_cache.chunks_exact_mut(cache_len).enumerate() {
            model.fill_y_cache(y.value(k), chunk);
        }
    }
    let cache_at = |k: usize| &y_cache[k * cache_len..(k + 1) * cache_len];

    let mut coef = Coefficients::new(e, d);
    let mut partials = Partials::new(e, d);
    let mut x = vec![0.0; e];
    let mut x_next = vec![0.0; e];
    let mut db = vec![0.0; e];
    let mut inc = vec![0.0; e + d];
    let mut gen = SmallMat::zeros(md);
    let mut flow_next = SmallMat::zeros(md);
    let mut inv = SmallMat::zeros(md);
    let mut grad = vec![0.0; e];
    // Variance buffers: a_k (d²) and ℰ_k⁻¹ f_k ((e+1) per (i,j)) for k = 0..=n_fine.
    let mut a_rows = if spec.integrand_i { vec![0.0; (n_fine + 1) * d2] } else { Vec::new() };
    let (mut w_rows, mut f_buf) = match spec.integrand_ii {
        Some(_) => (vec![0.0; (n_fine + 1) * d2 * md], vec![0.0; d2 * md]),
        None => (Vec::new(), Vec::new()),
    };
    let mut vals_g = vec![0.0; d2];
    let mut vals_1 = vec![0.0; d2];

    for p in 0..m {
        let mut rng_b: ChaCha8Rng = stream(spec.particle_seed, Purpose::SignalNoise, p as u64);
        let mut rng_x0 = stream(spec.particle_seed, Purpose::InitialState, p as u64);
        model.sample_x0(&mut rng_x0, &mut x);
        for lv in levels.iter_mut() {
            lv.x.copy_from_slice(&x);
            lv.lw_i = 0.0;
            lv.lw_ii = 0.0;
        }
        stack.clear();
        let mut lw_ref = 0.0;
        let mut flow = SmallMat::identity(md);
        let mut singular = false;

        // A labeled block rather than a closure keeps the literal
        // dimensions visible to the optimizer.
        let run: Result<()> = 'particle: {
            for k in 0..n_fine {
                let yk = y.value(k);
                let dyk = y.increment(k);
                for v in db.iter_mut() {
                    *v = normal(&mut rng_b) * sqdt;
                }
                if with_partials {
                    model.eval_with_partials_cached(&x, yk, cache_at(k), &mut coef, &mut partials);
                } else {
                    model.eval_cached(&x, yk, cache_at(k), &mut coef);
                }
                if let Err(err) = spec.bound.check(&coef.h, k) {
                    break 'particle Err(err);
                }
                for lv in levels.iter_mut() {
                    if k & (lv.stride - 1) == 0 {
                        let kc = k / lv.stride;
                        lv.h_frozen.copy_from_slice(&coef.h);
                        model.eval_cached(&lv.x, yk, cache_at(k), &mut lv.coef);
                        if let Err(err) = spec.bound.check(&lv.coef.h, kc) {
                            break 'particle Err(err);
                        }
                    }
                }
                if spec.integrand_i {
                    record_scheme_i(e, d, k, &coef, &partials, &mut a_rows);
                }
                if let Some(conv) = spec.integrand_ii {
                    record_scheme_ii(
                        e, d, k, &coef, &partials, &flow, &mut inv, &mut singular, &mut w_rows,
                        &mut f_buf,
                    );
                    tangent_generator(e, d, &coef.h, &partials, dt, &db, dyk, conv, &mut gen);
                    flow.step_into_n(md, &gen, &mut flow_next);
                    std::mem::swap(&mut flow, &mut flow_next);
                    if !flow.is_finite_n(md) {
                        break 'particle Err(Error::NonFinite { step: k });
                    }
                }
                lw_ref += log_weight_increment(&coef.h, dyk, dt);
                euler_step(&coef, &x, dt, &db, dyk, &mut x_next);
                if !x_next.iter().all(|v| v.is_finite()) || !lw_ref.is_finite() {
                    break 'particle Err(Error::NonFinite { step: k });
                }
                std::mem::swap(&mut x, &mut x_next);

                inc[..e].copy_from_slice(&db);
                inc[e..].copy_from_slice(dyk);
                let pushed = stack.push(&inc, |r, block| {
                    for &idx in &level_at_depth[r as usize] {
                        let lv = &mut levels[idx];
                        let kc = k / lv.stride;
                        let (bdb, bdy) = block.split_at(e);
                        lv.lw_i += log_weight_increment(&lv.h_frozen, bdy, lv.dt);
                        lv.lw_ii += log_weight_increment(&lv.coef.h, bdy, lv.dt);
                        euler_step(&lv.coef, &lv.x, lv.dt, bdb, bdy, &mut lv.x_next);
                        if !lv.x_next.iter().all(|v| v.is_finite()) || !lv.lw_ii.is_finite() {
                            return Err(Error::NonFinite { step: kc });
                        }
                        std::mem::swap(&mut lv.x, &mut lv.x_next);
                    }
                    Ok(())
                });
                if let Err(err) = pushed {
                    break 'particle Err(err);
                }
            }
            if with_partials {
                let yk = y.value(n_fine);
                model.eval_with_partials_cached(&x, yk, cache_at(n_fine), &mut coef, &mut partials);
                if spec.integrand_i {
                    record_scheme_i(e, d, n_fine, &coef, &partials, &mut a_rows);
                }
                if spec.integrand_ii.is_some() {
                    record_scheme_ii(
                        e, d, n_fine, &coef, &partials, &flow, &mut inv, &mut singular,
                        &mut w_rows, &mut f_buf,
                    );
                }
            }
            Ok(())
        };

        if let Err(err) = run {
            out.failures += 1;
            if out.first_failure.is_none() {
                out.first_failure = Some(format!("particle {p}: {err}"));
            }
            continue;
        }

        let phi = lw_ref.exp();
        let gv = spec.g.value(&x);
        out.reference.push(gv * phi, phi);
        for (idx, lv) in levels.iter().enumerate() {
            let wi = lv.lw_i.exp();
            out.scheme_i[idx].push(gv * wi, wi);
            let wii = lv.lw_ii.exp();
            out.scheme_ii[idx].push(spec.g.value(&lv.x) * wii, wii);
        }
        debug_assert!(levels.iter().all(|lv| lv.n == n_fine / lv.stride));

        let group = p % GROUPS;
        if let Some(sums_i) = out.integrand_i.as_mut() {
            sums_i.add_reference(group, gv * phi, phi);
            for k in 0..=n_fine {
                let a = &a_rows[k * d2..(k + 1) * d2];
                sums_i.add_row(group, k, gv * phi, phi, a, a);
            }
            sums_i.finish_particle(group);
        }
        if let Some(sums_ii) = out.integrand_ii.as_mut() {
            if singular {
                sums_ii.excluded += 1;
                continue;
            }
            spec.g.grad(&x, &mut grad);
            let mut c_g = [0.0; crate::linalg::MAX_DIM];
            let mut c_1 = [0.0; crate::linalg::MAX_DIM];
            for kp in 0..md {
                let mut s = gv * flow[(e, kp)];
                for kk in 0..e {
                    s += grad[kk] * flow[(kk, kp)];
                }
                c_g[kp] = s;
                c_1[kp] = flow[(e, kp)];
            }
            sums_ii.add_reference(group, gv * phi, phi);
            for k in 0..=n_fine {
                let rows = &w_rows[k * d2 * md..(k + 1) * d2 * md];
                for ij in 0..d2 {
                    let w = &rows[ij * md..(ij + 1) * md];
                    let mut sg = 0.0;
                    let mut s1 = 0.0;
                    for kp in 0..md {
                        sg += c_g[kp] * w[kp];
                        s1 += c_1[kp] * w[kp];
                    }
                    vals_g[ij] = sg;
                    vals_1[ij] = s1;
                }
                sums_ii.add_row(group, k, phi, phi, &vals_g, &vals_1);
            }
            sums_ii.finish_particle(group);
        }
    }

}

/// Stores `a_k` for grid index `k`.
#[inline(always)]
fn record_scheme_i(e: usize, d: usize, k: usize, coef: &Coefficients, partials: &Partials, a_rows: &mut [f64]) {
    let d2 = d * d;
    scheme_i_integrand_from(e, d, &coef.v, &partials.dh_dx, &partials.dh_dy, &mut a_rows[k * d2..(k + 1) * d2]);
}

/// Stores `ℰ_k⁻¹ f_k` for grid index `k`; a flow that cannot be inverted
/// marks the particle as singular.
#[allow(clippy::too_many_arguments)]
#[inline(always)]
fn record_scheme_ii(
    e: usize,
    d: usize,
    k: usize,
    coef: &Coefficients,
    partials: &Partials,
    flow: &SmallMat,
    inv: &mut SmallMat,
    singular: &mut bool,
    w_rows: &mut [f64],
    f_buf: &mut [f64],
) {
    let d2 = d * d;
    let md = e + 1;
    if *singular {
        return;
    }
    if invert_checked_into(flow, md, inv, k).is_err() {
        *singular = true;
        return;
    }
    f_coeff_from(e, d, coef, partials, f_buf);
    let rows = &mut w_rows[k * d2 * md..(k + 1) * d2 * md];
    for ij in 0..d2 {
        inv.mul_vec_n(md, &f_buf[ij * md..(ij + 1) * md], &mut rows[ij * md..(ij + 1) * md]);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sde::coarsen_increments;

    #[test]
    fn block_stack_matches_pairwise_coarsening() {
        let fine: Vec<f64> = (0..64).map(|i| ((i * 37 % 11) as f64 - 5.0) * 0.1 + 1e-9 * i as f64).collect();
        let mut stack = BlockStack::new(2, 8);
        let mut got: Vec<Vec<f64>> = vec![Vec::new(); 6];
        for k in 0..32 {
            stack
                .push(&fine[2 * k..2 * k + 2], |r, b| {
                    got[r as usize].extend_from_slice(b);
                    Ok(())
                })
                .unwrap();
        }
        for r in 0..6 {
            let n = 32 >> r;
            assert_eq!(got[r], coarsen_increments(&fine, 2, n).unwrap(), "depth {r}");
        }
    }
}
