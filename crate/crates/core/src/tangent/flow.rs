use super::TangentConvention;
use crate::linalg::SmallMat;
use crate::sde::{
    BrownianLattice, Coefficients, EulerTrajectory, FilterModel, ObservationPath, Partials,
};
use crate::{Error, Result};

/// Increment `G` of the augmented first-variation system over one step,
/// so that `ℰ_{k+1} = (I + G) ℰ_k`. Coordinates `0..e` are the signal,
/// coordinate `e` is the log-density.
#[allow(clippy::too_many_arguments)]
#[inline(always)]
pub fn tangent_generator(
    e: usize,
    d: usize,
    h: &[f64],
    p: &Partials,
    dt: f64,
    db: &[f64],
    dy: &[f64],
    convention: TangentConvention,
    out: &mut SmallMat,
) {
    let c = convention.drift_factor();
    for i in 0..e {
        for k in 0..e {
            let mut s = p.db_dx[i * e + k] * dt;
            for l in 0..e {
                s += p.dsigma_dx[(i * e + l) * e + k] * db[l];
            }
            for j in 0..d {
                s += p.dv_dx[(i * d + j) * e + k] * dy[j];
            }
            out[(i, k)] = s;
        }
        out[(i, e)] = 0.0;
    }
    for k in 0..e {
        let mut s = 0.0;
        let mut grad_sq = 0.0;
        for l in 0..d {
            let dh = p.dh_dx[l * e + k];
            s += dh * dy[l];
            grad_sq += 2.0 * h[l] * dh;
        }
        out[(e, k)] = s + c * grad_sq * dt;
    }
    out[(e, e)] = 0.0;
}

/// `(I + G) ℰ` without forming `I + G`.
#[inline]
pub fn apply_generator(g: &SmallMat, flow: &SmallMat) -> SmallMat {
    flow.step_by(g)
}

/// One Euler step of the first-variation system at `(x, y)`.
#[allow(clippy::too_many_arguments)]
pub fn tangent_step(
    model: &dyn FilterModel,
    x: &[f64],
    y: &[f64],
    flow: &SmallMat,
    dt: f64,
    db: &[f64],
    dy: &[f64],
    convention: TangentConvention,
) -> Result<SmallMat> {
    let (e, d) = (model.signal_dim(), model.obs_dim());
    let mut coef = Coefficients::new(e, d);
    let mut p = Partials::new(e, d);
    model.eval(x, y, &mut coef);
    model.eval_partials(x, y, &mut p);
    let mut g = SmallMat::zeros(e + 1);
    tangent_generator(e, d, &coef.h, &p, dt, db, dy, convention, &mut g);
    let next = apply_generator(&g, flow);
    if !next.is_finite() {
        return Err(Error::NonFinite { step: 0 });
    }
    Ok(next)
}

/// First-variation matrices `ℰ_{k/n}` along a trajectory.
#[derive(Debug, Clone)]
pub struct TangentFlow {
    pub n: usize,
    pub dim: usize,
    pub flow: Vec<SmallMat>,
}

impl TangentFlow {
    /// Flow along `traj`, driven by the level-`traj.n` block sums of the
    /// lattice signal noise and of `path`.
    pub fn along(
        model: &dyn FilterModel,
        lattice: &BrownianLattice,
        path: &ObservationPath,
        traj: &EulerTrajectory,
        convention: TangentConvention,
    ) -> Result<Self> {
        let (e, d, n) = (traj.e, traj.d, traj.n);
        let db = lattice.coarse_db(n)?;
        let dy = path.coarse_dy(n)?;
        let dt = 1.0 / n as f64;
        let mut coef = Coefficients::new(e, d);
        let mut p = Partials::new(e, d);
        let mut g = SmallMat::zeros(e + 1);
        let mut flow = Vec::with_capacity(n + 1);
        flow.push(SmallMat::identity(e + 1));
        for k in 0..n {
            let (x, y) = (traj.state(k), traj.y_state(k));
            model.eval(x, y, &mut coef);
            model.eval_partials(x, y, &mut p);
            tangent_generator(
                e,
                d,
                &coef.h,
                &p,
                dt,
                &db[k * e..(k + 1) * e],
                &dy[k * d..(k + 1) * d],
                convention,
                &mut g,
            );
            let next = apply_generator(&g, &flow[k]);
            if !next.is_finite() {
                return Err(Error::NonFinite { step: k });
            }
            flow.push(next);
        }
        Ok(Self { n, dim: e + 1, flow })
    }
}

/// Residual tolerance for accepting a computed inverse.
pub const INVERSE_TOL: f64 = 1e-8;

/// Inverse of a single flow matrix, rejecting singular or badly
/// conditioned ones.
pub fn invert_checked(m: &SmallMat, step: usize) -> Result<SmallMat> {
    let mut inv = SmallMat::zeros(m.dim());
    invert_checked_into(m, m.dim(), &mut inv, step)?;
    Ok(inv)
}

#[inline(always)]
pub(crate) fn invert_checked_into(m: &SmallMat, n: usize, inv: &mut SmallMat, step: usize) -> Result<()> {
    if !m.inverse_into_n(n, inv) || !(m.inverse_residual_n(n, inv) < INVERSE_TOL) {
        return Err(Error::Singular { step });
    }
    Ok(())
}

/// Per-step inverses by direct LU solves.
pub fn inverse_flow(flow: &TangentFlow) -> Result<Vec<SmallMat>> {
    flow.flow.iter().enumerate().map(|(k, m)| invert_checked(m, k)).collect()
}

/// Coefficient tensor `f^{ijk''}` at `(x, y)`, stored as
/// `out[(i * d + j) * (e + 1) + k'']`.
pub fn f_coeff(model: &dyn FilterModel, x: &[f64], y: &[f64], out: &mut [f64]) {
    let (e, d) = (model.signal_dim(), model.obs_dim());
    let mut coef = Coefficients::new(e, d);
    let mut p = Partials::new(e, d);
    model.eval(x, y, &mut coef);
    model.eval_partials(x, y, &mut p);
    f_coeff_from(e, d, &coef, &p, out);
}

#[inline(always)]
pub(crate) fn f_coeff_from(e: usize, d: usize, coef: &Coefficients, p: &Partials, out: &mut [f64]) {
    let m = e + 1;
    for i in 0..d {
        for j in 0..d {
            let base = (i * d + j) * m;
            for r in 0..e {
                let mut s = p.dv_dy[(r * d + i) * d + j];
                for l in 0..e {
                    s += p.dv_dx[(r * d + i) * e + l] * coef.v[l * d + j];
                }
                out[base + r] = s;
            }
            let mut s = p.dh_dy[i * d + j];
            for l in 0..e {
                s += p.dh_dx[i * e + l] * coef.v[l * d + j];
            }
            out[base + e] = s;
        }
    }
}

/// Scheme-I integrand `a^{ij} = Σ_k ∂_k h_i v_kj + ∂_{y_j} h_i`, stored as
/// `out[i * d + j]`. Kept separate from [`f_coeff`] so that the two can be
/// cross-checked.
pub fn scheme_i_integrand(model: &dyn FilterModel, x: &[f64], y: &[f64], out: &mut [f64]) {
    let (e, d) = (model.signal_dim(), model.obs_dim());
    let mut coef = Coefficients::new(e, d);
    let mut p = Partials::new(e, d);
    model.eval(x, y, &mut coef);
    model.eval_partials(x, y, &mut p);
    scheme_i_integrand_from(e, d, &coef.v, &p.dh_dx, &p.dh_dy, out);
}

#[inline(always)]
pub(crate) fn scheme_i_integrand_from(
    e: usize,
    d: usize,
    v: &[f64],
    dh_dx: &[f64],
    dh_dy: &[f64],
    out: &mut [f64],
) {
    out.copy_from_slice(&dh_dy[..d * d]);
    for (i, row) in out.chunks_exact_mut(d).enumerate() {
        for k in 0..e {
            let dh = dh_dx[i * e + k];
            for (j, o) in row.iter_mut().enumerate() {
                *o += dh * v[k * d + j];
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{fill_normal, stream, Purpose};
    use crate::sde::{
        integrate_reference, sample_lattice, AffineModel, CoupledModel, TestFunction, YSource,
    };

    #[test]
    fn zero_generator_keeps_identity() {
        let m = AffineModel::frozen(0.0);
        let mut flow = SmallMat::identity(2);
        for _ in 0..10 {
            flow = tangent_step(&m, &[0.3], &[0.1], &flow, 0.1, &[0.4], &[-0.2], TangentConvention::Derived).unwrap();
        }
        assert_eq!(flow, SmallMat::identity(2));
    }

    #[test]
    fn linear_drift_flow_is_exponential() {
        let a = -0.8;
        let m = AffineModel { a, sigma: 0.5, h0: 0.3, ..AffineModel::frozen(0.0) };
        let l = sample_lattice(1, 1, 4096, 5, 0).unwrap();
        let y = ObservationPath::brownian(&l);
        let traj = integrate_reference(&m, &l, &[0.2], YSource::Lattice).unwrap();
        let flow = TangentFlow::along(&m, &l, &y, &traj, TangentConvention::Derived).unwrap();
        let inv = inverse_flow(&flow).unwrap();
        for k in [0, 1024, 4096] {
            let t = k as f64 / 4096.0;
            assert!((flow.flow[k][(0, 0)] - (a * t).exp()).abs() < 2.0 / 4096.0);
            assert!((inv[k][(0, 0)] - (-a * t).exp()).abs() < 2.0 / 4096.0);
        }
    }

    #[test]
    fn step_is_linear_in_flow() {
        let m = CoupledModel::coupled_2d();
        let mut rng = stream(1, Purpose::Synthetic, 0);
        let mut buf = [0.0; 9];
        let mut mats = [SmallMat::zeros(3), SmallMat::zeros(3)];
        for mat in mats.iter_mut() {
            fill_normal(&mut rng, &mut buf, 1.0);
            for i in 0..3 {
                for j in 0..3 {
                    mat[(i, j)] = buf[i * 3 + j];
                }
            }
        }
        let (alpha, beta) = (0.75, -2.0);
        let step = |f: &SmallMat| {
            tangent_step(&m, &[0.1, 0.4], &[0.2, -0.3], f, 0.01, &[0.1, -0.05], &[0.07, 0.02], TangentConvention::Derived).unwrap()
        };
        let lhs = step(&mats[0].scale(alpha).add(&mats[1].scale(beta)));
        let rhs = step(&mats[0]).scale(alpha).add(&step(&mats[1]).scale(beta));
        assert!(lhs.sub(&rhs).norm_inf() < 1e-13);
    }

    #[test]
    fn flow_is_multiplicative() {
        let m = CoupledModel::coupled_2d();
        let l = sample_lattice(2, 2, 256, 2, 1).unwrap();
        let y = ObservationPath::brownian(&l);
        let traj = integrate_reference(&m, &l, &[0.1, 0.2], YSource::Lattice).unwrap();
        let flow = TangentFlow::along(&m, &l, &y, &traj, TangentConvention::Derived).unwrap();
        let inv = inverse_flow(&flow).unwrap();
        let (s, t) = (100, 256);
        // ℰ(s→t) by restarting the recursion from the identity at s.
        let db = l.coarse_db(256).unwrap();
        let mut from_s = SmallMat::identity(3);
        let mut coef = Coefficients::new(2, 2);
        let mut p = Partials::new(2, 2);
        let mut g = SmallMat::zeros(3);
        for k in s..t {
            m.eval(traj.state(k), traj.y_state(k), &mut coef);
            m.eval_partials(traj.state(k), traj.y_state(k), &mut p);
            tangent_generator(2, 2, &coef.h, &p, 1.0 / 256.0, &db[2 * k..2 * k + 2], y.increment(k), TangentConvention::Derived, &mut g);
            from_s = apply_generator(&g, &from_s);
        }
        let composed = from_s.mul(&flow.flow[s]);
        assert!(composed.sub(&flow.flow[t]).norm_inf() < 1e-12);
        assert!(flow.flow[t].mul(&inv[s]).sub(&from_s).norm_inf() < 1e-10);
    }

    /// The discrete flow is the Jacobian of the Euler map augmented with the
    /// log-density, so `∇g̃(X̃₁) ℰ₁` matches finite differences in `x0`.
    #[test]
    fn flow_is_jacobian_of_euler_map() {
        let m = CoupledModel::coupled_2d();
        let l = sample_lattice(2, 2, 512, 8, 4).unwrap();
        let y = ObservationPath::brownian(&l);
        let g = TestFunction::Tanh;
        let x0 = [0.3, -0.5];
        let gtilde = |x0: &[f64]| {
            let t = integrate_reference(&m, &l, x0, YSource::Lattice).unwrap();
            g.value(t.terminal()) * t.log_weight().unwrap().exp()
        };
        let traj = integrate_reference(&m, &l, &x0, YSource::Lattice).unwrap();
        let flow = TangentFlow::along(&m, &l, &y, &traj, TangentConvention::Derived).unwrap();
        let e1 = flow.flow[512];
        let phi = traj.log_weight().unwrap().exp();
        let xt = traj.terminal();
        let mut grad = [0.0; 2];
        g.grad(xt, &mut grad);
        for col in 0..2 {
            let analytic = phi * (grad[0] * e1[(0, col)] + grad[1] * e1[(1, col)] + g.value(xt) * e1[(2, col)]);
            let eps = 1e-5;
            let mut xp = x0;
            let mut xm = x0;
            xp[col] += eps;
            xm[col] -= eps;
            let fd = (gtilde(&xp) - gtilde(&xm)) / (2.0 * eps);
            assert!((fd - analytic).abs() < 1e-7 * (1.0 + analytic.abs()), "col {col}: {fd} vs {analytic}");
        }
    }

    #[test]
    fn f_tensor_vanishes_without_feedback() {
        let m = CoupledModel::standard();
        let mut f = [1.0; 2];
        f_coeff(&m, &[0.4], &[1.1], &mut f);
        assert_eq!(f, [0.0, 0.0]);
    }

    #[test]
    fn f_tensor_hand_derivative() {
        // v = v0 constant, h = α tanh(x): row e+1 is α sech²(x) v0.
        let m = CoupledModel { v1: 0.0, v2: 0.0, gamma: 0.0, ..CoupledModel::coupled() };
        let x = 0.6f64;
        let mut f = [0.0; 2];
        f_coeff(&m, &[x], &[0.3], &mut f);
        let sech2 = 1.0 - x.tanh().powi(2);
        assert!((f[1] - m.alpha * sech2 * m.v0).abs() < 1e-15);
        assert_eq!(f[0], 0.0);
    }

    #[test]
    fn f_last_row_matches_scheme_i_integrand() {
        let m = CoupledModel { e: 3, d: 2, ..CoupledModel::coupled() };
        let mut rng = stream(3, Purpose::Synthetic, 1);
        let mut pt = [0.0; 5];
        let mut f = vec![0.0; 2 * 2 * 4];
        let mut a = [0.0; 4];
        for _ in 0..100 {
            fill_normal(&mut rng, &mut pt, 1.5);
            f_coeff(&m, &pt[..3], &pt[3..], &mut f);
            scheme_i_integrand(&m, &pt[..3], &pt[3..], &mut a);
            for ij in 0..4 {
                assert!((f[ij * 4 + 3] - a[ij]).abs() <= 1e-15 * (1.0 + a[ij].abs()));
            }
        }
    }

    #[test]
    fn singular_flow_is_flagged() {
        let flow = TangentFlow { n: 1, dim: 2, flow: vec![SmallMat::identity(2), SmallMat::zeros(2)] };
        assert!(matches!(inverse_flow(&flow), Err(Error::Singular { step: 1 })));
    }
}
