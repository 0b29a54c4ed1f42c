use super::lattice::{BrownianLattice, ObservationPath};
use super::model::{Coefficients, FilterModel};
use crate::{Error, Result};

/// Where the observation increments driving the signal come from.
#[derive(Debug, Clone, Copy)]
pub enum YSource<'a> {
    /// `dY = dW` from the lattice: `Y` is Brownian under the reference measure.
    Lattice,
    /// A given observation path, e.g. one simulated under the original measure.
    Path(&'a ObservationPath),
}

/// Sensor bound enforced during integration.
#[derive(Debug, Clone, Copy)]
pub struct BoundCheck {
    pub h_max: Option<f64>,
}

impl BoundCheck {
    pub fn for_model(model: &dyn FilterModel) -> Self {
        Self { h_max: model.h_bound().map(|b| b * (1.0 + 1e-9) + 1e-12) }
    }

    pub fn off() -> Self {
        Self { h_max: None }
    }

    #[inline]
    pub fn check(&self, h: &[f64], step: usize) -> Result<()> {
        if let Some(max) = self.h_max {
            if let Some(v) = h.iter().find(|v| v.abs() > max) {
                return Err(Error::Bound { step, what: format!("|h| = {} exceeds {max}", v.abs()) });
            }
        }
        Ok(())
    }
}

/// Grid path of an Euler scheme. Rows are grid times `k / n`.
#[derive(Debug, Clone)]
pub struct EulerTrajectory {
    pub n: usize,
    pub e: usize,
    pub d: usize,
    pub states: Vec<f64>,
    pub y_states: Vec<f64>,
    /// `h·ΔY − ½|h|²Δt` per step, coefficients frozen at the left grid point.
    pub log_weight_increments: Option<Vec<f64>>,
}

impl EulerTrajectory {
    pub fn state(&self, k: usize) -> &[f64] {
        &self.states[k * self.e..(k + 1) * self.e]
    }

    pub fn y_state(&self, k: usize) -> &[f64] {
        &self.y_states[k * self.d..(k + 1) * self.d]
    }

    pub fn terminal(&self) -> &[f64] {
        self.state(self.n)
    }

    pub fn log_weight(&self) -> Option<f64> {
        self.log_weight_increments.as_ref().map(|inc| inc.iter().sum())
    }
}

/// `x + b Δt + σ ΔB + v ΔY` with coefficients already evaluated at the
/// left grid point.
#[inline(always)]
pub fn euler_step(coef: &Coefficients, x: &[f64], dt: f64, db: &[f64], dy: &[f64], out: &mut [f64]) {
    let e = x.len();
    let d = dy.len();
    for i in 0..e {
        let mut s = x[i] + coef.b[i] * dt;
        for l in 0..e {
            s += coef.sigma[i * e + l] * db[l];
        }
        for j in 0..d {
            s += coef.v[i * d + j] * dy[j];
        }
        out[i] = s;
    }
}

#[inline(always)]
pub fn log_weight_increment(h: &[f64], dy: &[f64], dt: f64) -> f64 {
    let mut dot = 0.0;
    let mut sq = 0.0;
    for (hj, dyj) in h.iter().zip(dy) {
        dot += hj * dyj;
        sq += hj * hj;
    }
    dot - 0.5 * sq * dt
}

fn check_dims(model: &dyn FilterModel, lattice: &BrownianLattice, x0: &[f64]) -> Result<()> {
    let (e, d) = (model.signal_dim(), model.obs_dim());
    if lattice.e != e || lattice.d != d || x0.len() != e {
        return Err(Error::Dimension(format!(
            "model (e={e}, d={d}), lattice (e={}, d={}), x0 of length {}",
            lattice.e,
            lattice.d,
            x0.len()
        )));
    }
    Ok(())
}

/// Euler–Maruyama at level `n`, driven by the block sums of the lattice.
pub fn integrate_euler(
    model: &dyn FilterModel,
    lattice: &BrownianLattice,
    n: usize,
    x0: &[f64],
    y_source: YSource<'_>,
) -> Result<EulerTrajectory> {
    integrate_euler_checked(model, lattice, n, x0, y_source, BoundCheck::for_model(model))
}

pub fn integrate_euler_checked(
    model: &dyn FilterModel,
    lattice: &BrownianLattice,
    n: usize,
    x0: &[f64],
    y_source: YSource<'_>,
    bound: BoundCheck,
) -> Result<EulerTrajectory> {
    check_dims(model, lattice, x0)?;
    let (e, d) = (lattice.e, lattice.d);
    let owned;
    let path = match y_source {
        YSource::Lattice => {
            owned = ObservationPath::brownian(lattice);
            &owned
        }
        YSource::Path(p) => {
            if p.d != d || p.n_fine != lattice.n_fine {
                return Err(Error::Dimension("observation path does not match lattice".into()));
            }
            p
        }
    };
    let db = lattice.coarse_db(n)?;
    let dy = path.coarse_dy(n)?;
    let stride = lattice.n_fine / n;
    let dt = 1.0 / n as f64;

    let mut states = vec![0.0; (n + 1) * e];
    let mut y_states = vec![0.0; (n + 1) * d];
    let mut lw = vec![0.0; n];
    states[..e].copy_from_slice(x0);
    let mut coef = Coefficients::new(e, d);
    for k in 0..n {
        let y = path.value(k * stride);
        y_states[k * d..(k + 1) * d].copy_from_slice(y);
        let (cur, next) = states.split_at_mut((k + 1) * e);
        let x = &cur[k * e..];
        model.eval(x, y, &mut coef);
        bound.check(&coef.h, k)?;
        let dyk = &dy[k * d..(k + 1) * d];
        lw[k] = log_weight_increment(&coef.h, dyk, dt);
        euler_step(&coef, x, dt, &db[k * e..(k + 1) * e], dyk, &mut next[..e]);
        if !next[..e].iter().all(|v| v.is_finite()) || !lw[k].is_finite() {
            return Err(Error::NonFinite { step: k });
        }
    }
    y_states[n * d..].copy_from_slice(path.value(lattice.n_fine));
    Ok(EulerTrajectory { n, e, d, states, y_states, log_weight_increments: Some(lw) })
}

/// The fine-level path that stands in for the exact solution.
pub fn integrate_reference(
    model: &dyn FilterModel,
    lattice: &BrownianLattice,
    x0: &[f64],
    y_source: YSource<'_>,
) -> Result<EulerTrajectory> {
    integrate_euler(model, lattice, lattice.n_fine, x0, y_source)
}

/// Joint Euler integration of signal and observation under the original
/// measure: `dY = h dt + dW`.
pub fn simulate_observation(
    model: &dyn FilterModel,
    lattice: &BrownianLattice,
    x0: &[f64],
) -> Result<(EulerTrajectory, ObservationPath)> {
    check_dims(model, lattice, x0)?;
    let (e, d, n) = (lattice.e, lattice.d, lattice.n_fine);
    let bound = BoundCheck::for_model(model);
    let dt = 1.0 / n as f64;
    let mut states = vec![0.0; (n + 1) * e];
    let mut y_states = vec![0.0; (n + 1) * d];
    let mut dy = vec![0.0; n * d];
    states[..e].copy_from_slice(x0);
    let mut coef = Coefficients::new(e, d);
    for k in 0..n {
        let (xs, xnext) = states.split_at_mut((k + 1) * e);
        let (ys, ynext) = y_states.split_at_mut((k + 1) * d);
        let x = &xs[k * e..];
        let y = &ys[k * d..];
        model.eval(x, y, &mut coef);
        bound.check(&coef.h, k)?;
        let dyk = &mut dy[k * d..(k + 1) * d];
        for j in 0..d {
            dyk[j] = coef.h[j] * dt + lattice.dw[k * d + j];
            ynext[j] = y[j] + dyk[j];
        }
        euler_step(&coef, x, dt, &lattice.db[k * e..(k + 1) * e], dyk, &mut xnext[..e]);
        if !xnext[..e].iter().chain(&ynext[..d]).all(|v| v.is_finite()) {
            return Err(Error::NonFinite { step: k });
        }
    }
    let path = ObservationPath::from_increments(dy, d)?;
    let signal = EulerTrajectory { n, e, d, states, y_states, log_weight_increments: None };
    Ok((signal, path))
}
