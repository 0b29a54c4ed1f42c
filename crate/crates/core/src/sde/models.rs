//! Built-in model catalog.

use rand_chacha::ChaCha8Rng;

use super::model::{Coefficients, FilterModel, Partials};
use crate::rng::normal;
use crate::{Error, Result};

pub const MODEL_IDS: &[&str] = &["linear-gaussian", "standard", "coupled", "coupled-2d"];

pub fn model_by_id(id: &str) -> Result<Box<dyn FilterModel>> {
    Ok(match id {
        "linear-gaussian" => Box::new(AffineModel::linear_gaussian()),
        "standard" => Box::new(CoupledModel::standard()),
        "coupled" => Box::new(CoupledModel::coupled()),
        "coupled-2d" => Box::new(CoupledModel::coupled_2d()),
        _ => return Err(Error::Unknown(id.to_string())),
    })
}

/// Scalar affine system
/// `dX = a X dt + σ dB + v dY`, `dY = (c X + h0) dt + dW`, `X0 ~ N(m0, p0)`.
#[derive(Debug, Clone)]
pub struct AffineModel {
    pub a: f64,
    pub sigma: f64,
    pub v: f64,
    pub c: f64,
    pub h0: f64,
    pub m0: f64,
    pub p0: f64,
}

impl AffineModel {
    pub fn linear_gaussian() -> Self {
        Self { a: -0.5, sigma: 1.0, v: 0.0, c: 1.0, h0: 0.0, m0: 0.0, p0: 1.0 }
    }

    /// `b = σ = v = h = 0`, deterministic start at `x0`.
    pub fn frozen(x0: f64) -> Self {
        Self { a: 0.0, sigma: 0.0, v: 0.0, c: 0.0, h0: 0.0, m0: x0, p0: 0.0 }
    }
}

impl FilterModel for AffineModel {
    fn id(&self) -> &str {
        "linear-gaussian"
    }
    fn signal_dim(&self) -> usize {
        1
    }
    fn obs_dim(&self) -> usize {
        1
    }

    fn eval(&self, x: &[f64], _y: &[f64], out: &mut Coefficients) {
        out.b[0] = self.a * x[0];
        out.sigma[0] = self.sigma;
        out.v[0] = self.v;
        out.h[0] = self.c * x[0] + self.h0;
    }

    fn eval_h(&self, x: &[f64], _y: &[f64], h: &mut [f64]) {
        h[0] = self.c * x[0] + self.h0;
    }

    fn eval_partials(&self, _x: &[f64], _y: &[f64], out: &mut Partials) {
        out.clear();
        out.db_dx[0] = self.a;
        out.dh_dx[0] = self.c;
    }

    fn sample_x0(&self, rng: &mut ChaCha8Rng, x0: &mut [f64]) {
        x0[0] = self.m0 + self.p0.sqrt() * normal(rng);
    }

    fn h_bound(&self) -> Option<f64> {
        (self.c == 0.0).then(|| self.h0.abs())
    }
}

/// Smooth bounded system of arbitrary dimension:
///
/// * `b_i = -κ x_i + β sin(y_{i mod d})`
/// * `σ = diag(σ0 + σ1 tanh(x_i))`
/// * `v_ij = (v0 + v1 tanh(x_i) + v2 cos(y_j)) / (1 + |i - j|)`
/// * `h_j = α Σ_k tanh(x_k) / (1 + |j - k|) + γ sin(y_j)`
/// * `X0 ~ N(m0, s0²)` per coordinate.
#[derive(Debug, Clone)]
pub struct CoupledModel {
    pub id: String,
    pub e: usize,
    pub d: usize,
    pub kappa: f64,
    pub beta: f64,
    pub sigma0: f64,
    pub sigma1: f64,
    pub v0: f64,
    pub v1: f64,
    pub v2: f64,
    pub alpha: f64,
    pub gamma: f64,
    pub m0: f64,
    pub s0: f64,
}

/// Weights `1 / (1 + |i − j|)` for the cached dimensions.
const BAND: [f64; CACHE] = [1.0, 1.0 / 2.0, 1.0 / 3.0, 1.0 / 4.0];

#[inline]
fn band(i: usize, j: usize) -> f64 {
    match BAND.get(i.abs_diff(j)) {
        Some(&w) => w,
        None => 1.0 / (1.0 + i.abs_diff(j) as f64),
    }
}

impl CoupledModel {
    pub fn coupled() -> Self {
        Self {
            id: "coupled".into(),
            e: 1,
            d: 1,
            kappa: 1.0,
            beta: 0.5,
            sigma0: 0.6,
            sigma1: 0.2,
            v0: 0.7,
            v1: 0.3,
            v2: 0.2,
            alpha: 1.2,
            gamma: 0.4,
            m0: 0.3,
            s0: 0.5,
        }
    }

    /// No signal/observation feedback and a sensor depending on `x` only.
    pub fn standard() -> Self {
        Self {
            id: "standard".into(),
            v0: 0.0,
            v1: 0.0,
            v2: 0.0,
            beta: 0.0,
            gamma: 0.0,
            ..Self::coupled()
        }
    }

    pub fn coupled_2d() -> Self {
        Self { id: "coupled-2d".into(), e: 2, d: 2, ..Self::coupled() }
    }
}

/// Capacity of the stack caches used by [`CoupledModel`]; larger systems
/// fall back to recomputing the shared terms.
const CACHE: usize = 4;

struct Shared {
    tanh_x: [f64; CACHE],
    sin_y: [f64; CACHE],
    cos_y: [f64; CACHE],
}

impl CoupledModel {
    fn shared(&self, x: &[f64], y: &[f64]) -> Option<Shared> {
        let mut s = self.shared_x(x)?;
        for j in 0..self.d {
            let (sn, cs) = y[j].sin_cos();
            s.sin_y[j] = sn;
            s.cos_y[j] = cs;
        }
        Some(s)
    }

    /// `cache` holds `sin y` followed by `cos y`.
    fn shared_cached(&self, x: &[f64], cache: &[f64]) -> Option<Shared> {
        let mut s = self.shared_x(x)?;
        let d = self.d;
        s.sin_y[..d].copy_from_slice(&cache[..d]);
        s.cos_y[..d].copy_from_slice(&cache[d..2 * d]);
        Some(s)
    }

    #[inline]
    fn shared_x(&self, x: &[f64]) -> Option<Shared> {
        if self.e > CACHE || self.d > CACHE {
            return None;
        }
        let mut s = Shared { tanh_x: [0.0; CACHE], sin_y: [0.0; CACHE], cos_y: [0.0; CACHE] };
        for i in 0..self.e {
            s.tanh_x[i] = x[i].tanh();
        }
        Some(s)
    }

    fn coefficients_from(&self, x: &[f64], s: &Shared, out: &mut Coefficients) {
        let (e, d) = (self.e, self.d);
        for i in 0..e {
            let t = s.tanh_x[i];
            out.b[i] = -self.kappa * x[i] + self.beta * s.sin_y[i % d];
            for l in 0..e {
                out.sigma[i * e + l] = if i == l { self.sigma0 + self.sigma1 * t } else { 0.0 };
            }
            for j in 0..d {
                out.v[i * d + j] = (self.v0 + self.v1 * t + self.v2 * s.cos_y[j]) * band(i, j);
            }
        }
        for j in 0..d {
            let mut acc = 0.0;
            for k in 0..e {
                acc += s.tanh_x[k] * band(j, k);
            }
            out.h[j] = self.alpha * acc + self.gamma * s.sin_y[j];
        }
    }

    /// Scalar case of [`Self::coefficients_from`], with the same operation
    /// order so that both give identical bits.
    #[inline(always)]
    fn scalar_coefficients(&self, x: f64, t: f64, sin_y: f64, cos_y: f64, out: &mut Coefficients) {
        let w = band(0, 0);
        out.b[0] = -self.kappa * x + self.beta * sin_y;
        out.sigma[0] = self.sigma0 + self.sigma1 * t;
        out.v[0] = (self.v0 + self.v1 * t + self.v2 * cos_y) * w;
        out.h[0] = self.alpha * (0.0 + t * w) + self.gamma * sin_y;
    }

    /// Writes every entry, zeros included, so no separate clearing pass is
    /// needed.
    fn partials_from(&self, s: &Shared, out: &mut Partials) {
        let (e, d) = (self.e, self.d);
        for i in 0..e {
            let t = s.tanh_x[i];
            let sech2 = 1.0 - t * t;
            for k in 0..e {
                let diag = i == k;
                out.db_dx[i * e + k] = if diag { -self.kappa } else { 0.0 };
                for l in 0..e {
                    out.dsigma_dx[(i * e + l) * e + k] =
                        if diag && l == i { self.sigma1 * sech2 } else { 0.0 };
                }
                for j in 0..d {
                    out.dv_dx[(i * d + j) * e + k] = if diag { self.v1 * sech2 * band(i, j) } else { 0.0 };
                }
            }
            for j in 0..d {
                for jj in 0..d {
                    out.dv_dy[(i * d + j) * d + jj] =
                        if jj == j { -self.v2 * s.sin_y[j] * band(i, j) } else { 0.0 };
                }
            }
        }
        for j in 0..d {
            for k in 0..e {
                let t = s.tanh_x[k];
                out.dh_dx[j * e + k] = self.alpha * band(j, k) * (1.0 - t * t);
            }
            for jj in 0..d {
                out.dh_dy[j * d + jj] = if jj == j { self.gamma * s.cos_y[j] } else { 0.0 };
            }
        }
    }

    fn shared_slow(&self, x: &[f64], y: &[f64]) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        (
            x.iter().map(|v| v.tanh()).collect(),
            y.iter().map(|v| v.sin()).collect(),
            y.iter().map(|v| v.cos()).collect(),
        )
    }
}

impl FilterModel for CoupledModel {
    fn id(&self) -> &str {
        &self.id
    }
    fn signal_dim(&self) -> usize {
        self.e
    }
    fn obs_dim(&self) -> usize {
        self.d
    }

    fn eval(&self, x: &[f64], y: &[f64], out: &mut Coefficients) {
        match self.shared(x, y) {
            Some(s) => self.coefficients_from(x, &s, out),
            None => {
                let (tx, sy, cy) = self.shared_slow(x, y);
                let (e, d) = (self.e, self.d);
                for i in 0..e {
                    out.b[i] = -self.kappa * x[i] + self.beta * sy[i % d];
                    for l in 0..e {
                        out.sigma[i * e + l] = if i == l { self.sigma0 + self.sigma1 * tx[i] } else { 0.0 };
                    }
                    for j in 0..d {
                        out.v[i * d + j] = (self.v0 + self.v1 * tx[i] + self.v2 * cy[j]) * band(i, j);
                    }
                }
                self.eval_h(x, y, &mut out.h);
            }
        }
    }

    fn eval_h(&self, x: &[f64], y: &[f64], h: &mut [f64]) {
        for j in 0..self.d {
            let mut s = 0.0;
            for k in 0..self.e {
                s += x[k].tanh() * band(j, k);
            }
            h[j] = self.alpha * s + self.gamma * y[j].sin();
        }
    }

    fn eval_partials(&self, x: &[f64], y: &[f64], out: &mut Partials) {
        match self.shared(x, y) {
            Some(s) => self.partials_from(&s, out),
            None => {
                let (tx, sy, cy) = self.shared_slow(x, y);
                let (e, d) = (self.e, self.d);
                out.clear();
                for i in 0..e {
                    let sech2 = 1.0 - tx[i] * tx[i];
                    out.db_dx[i * e + i] = -self.kappa;
                    out.dsigma_dx[(i * e + i) * e + i] = self.sigma1 * sech2;
                    for j in 0..d {
                        out.dv_dx[(i * d + j) * e + i] = self.v1 * sech2 * band(i, j);
                        out.dv_dy[(i * d + j) * d + j] = -self.v2 * sy[j] * band(i, j);
                    }
                }
                for j in 0..d {
                    for k in 0..e {
                        out.dh_dx[j * e + k] = self.alpha * band(j, k) * (1.0 - tx[k] * tx[k]);
                    }
                    out.dh_dy[j * d + j] = self.gamma * cy[j];
                }
            }
        }
    }

    fn eval_with_partials(&self, x: &[f64], y: &[f64], coef: &mut Coefficients, p: &mut Partials) {
        match self.shared(x, y) {
            Some(s) => {
                self.coefficients_from(x, &s, coef);
                self.partials_from(&s, p);
            }
            None => {
                self.eval(x, y, coef);
                self.eval_partials(x, y, p);
            }
        }
    }

    fn y_cache_len(&self) -> usize {
        if self.d <= CACHE { 2 * self.d } else { 0 }
    }

    fn fill_y_cache(&self, y: &[f64], out: &mut [f64]) {
        let d = self.d;
        for j in 0..d {
            let (sn, cs) = y[j].sin_cos();
            out[j] = sn;
            out[d + j] = cs;
        }
    }

    fn eval_cached(&self, x: &[f64], y: &[f64], cache: &[f64], out: &mut Coefficients) {
        if self.e == 1 && self.d == 1 {
            self.scalar_coefficients(x[0], x[0].tanh(), cache[0], cache[1], out);
            return;
        }
        match self.shared_cached(x, cache) {
            Some(s) => self.coefficients_from(x, &s, out),
            None => self.eval(x, y, out),
        }
    }

    fn eval_with_partials_cached(
        &self,
        x: &[f64],
        y: &[f64],
        cache: &[f64],
        coef: &mut Coefficients,
        p: &mut Partials,
    ) {
        if self.e == 1 && self.d == 1 {
            let t = x[0].tanh();
            let (sin_y, cos_y) = (cache[0], cache[1]);
            self.scalar_coefficients(x[0], t, sin_y, cos_y, coef);
            let sech2 = 1.0 - t * t;
            let w = band(0, 0);
            p.db_dx[0] = -self.kappa;
            p.dsigma_dx[0] = self.sigma1 * sech2;
            p.dv_dx[0] = self.v1 * sech2 * w;
            p.dv_dy[0] = -self.v2 * sin_y * w;
            p.dh_dx[0] = self.alpha * w * (1.0 - t * t);
            p.dh_dy[0] = self.gamma * cos_y;
            return;
        }
        match self.shared_cached(x, cache) {
            Some(s) => {
                self.coefficients_from(x, &s, coef);
                self.partials_from(&s, p);
            }
            None => self.eval_with_partials(x, y, coef, p),
        }
    }

    fn sample_x0(&self, rng: &mut ChaCha8Rng, x0: &mut [f64]) {
        for x in x0.iter_mut() {
            *x = self.m0 + self.s0 * normal(rng);
        }
    }

    fn h_bound(&self) -> Option<f64> {
        let row_max = (0..self.d)
            .map(|j| (0..self.e).map(|k| band(j, k)).sum::<f64>())
            .fold(0.0, f64::max);
        Some(self.alpha.abs() * row_max + self.gamma.abs())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fd_check(model: &dyn FilterModel, x: &[f64], y: &[f64]) {
        let (e, d) = (model.signal_dim(), model.obs_dim());
        let mut p = Partials::new(e, d);
        model.eval_partials(x, y, &mut p);
        let eps = 1e-6;
        let mut cp = Coefficients::new(e, d);
        let mut cm = Coefficients::new(e, d);
        for k in 0..e {
            let mut xp = x.to_vec();
            let mut xm = x.to_vec();
            xp[k] += eps;
            xm[k] -= eps;
            model.eval(&xp, y, &mut cp);
            model.eval(&xm, y, &mut cm);
            let fd = |a: f64, b: f64| (a - b) / (2.0 * eps);
            for i in 0..e {
                assert!((fd(cp.b[i], cm.b[i]) - p.db_dx[i * e + k]).abs() < 1e-7);
                for l in 0..e {
                    let want = fd(cp.sigma[i * e + l], cm.sigma[i * e + l]);
                    assert!((want - p.dsigma_dx[(i * e + l) * e + k]).abs() < 1e-7);
                }
                for j in 0..d {
                    let want = fd(cp.v[i * d + j], cm.v[i * d + j]);
                    assert!((want - p.dv_dx[(i * d + j) * e + k]).abs() < 1e-7);
                }
            }
            for i in 0..d {
                assert!((fd(cp.h[i], cm.h[i]) - p.dh_dx[i * e + k]).abs() < 1e-7);
            }
        }
        for j in 0..d {
            let mut yp = y.to_vec();
            let mut ym = y.to_vec();
            yp[j] += eps;
            ym[j] -= eps;
            model.eval(x, &yp, &mut cp);
            model.eval(x, &ym, &mut cm);
            for i in 0..d {
                let want = (cp.h[i] - cm.h[i]) / (2.0 * eps);
                assert!((want - p.dh_dy[i * d + j]).abs() < 1e-7);
            }
            for k in 0..e {
                for i in 0..d {
                    let want = (cp.v[k * d + i] - cm.v[k * d + i]) / (2.0 * eps);
                    assert!((want - p.dv_dy[(k * d + i) * d + j]).abs() < 1e-7);
                }
            }
        }
    }

    #[test]
    fn partials_match_finite_differences() {
        fd_check(&CoupledModel::coupled(), &[0.4], &[-0.7]);
        fd_check(&CoupledModel::coupled_2d(), &[0.4, -1.3], &[-0.7, 0.2]);
        fd_check(&CoupledModel { e: 3, d: 2, ..CoupledModel::coupled() }, &[0.1, 0.5, -0.2], &[1.0, 2.0]);
        fd_check(&AffineModel::linear_gaussian(), &[0.8], &[0.1]);
    }

    #[test]
    fn cached_evaluation_is_identical() {
        for model in [CoupledModel::coupled(), CoupledModel::coupled_2d()] {
            let (e, d) = (model.e, model.d);
            let x = [0.4, -1.3];
            let y = [0.9, 2.2];
            let mut cache = vec![0.0; model.y_cache_len()];
            model.fill_y_cache(&y[..d], &mut cache);
            let (mut c1, mut c2) = (Coefficients::new(e, d), Coefficients::new(e, d));
            let (mut p1, mut p2) = (Partials::new(e, d), Partials::new(e, d));
            model.eval_with_partials(&x[..e], &y[..d], &mut c1, &mut p1);
            model.eval_with_partials_cached(&x[..e], &y[..d], &cache, &mut c2, &mut p2);
            assert_eq!((c1.b, c1.sigma, c1.v, c1.h), (c2.b.clone(), c2.sigma.clone(), c2.v.clone(), c2.h.clone()));
            assert_eq!((p1.db_dx, p1.dsigma_dx, p1.dv_dx), (p2.db_dx, p2.dsigma_dx, p2.dv_dx));
            assert_eq!((p1.dh_dx, p1.dh_dy, p1.dv_dy), (p2.dh_dx, p2.dh_dy, p2.dv_dy));
            let mut c3 = Coefficients::new(e, d);
            model.eval_cached(&x[..e], &y[..d], &cache, &mut c3);
            assert_eq!((c3.b, c3.sigma, c3.v, c3.h), (c2.b, c2.sigma, c2.v, c2.h));
        }
    }

    #[test]
    fn sensor_respects_bound() {
        let m = CoupledModel::coupled_2d();
        let bound = m.h_bound().unwrap();
        let mut h = [0.0; 2];
        for &x in &[-50.0, 0.0, 50.0] {
            for &y in &[-3.0, 1.5] {
                m.eval_h(&[x, x], &[y, y], &mut h);
                assert!(h.iter().all(|v| v.abs() <= bound + 1e-12));
            }
        }
        assert!(AffineModel::linear_gaussian().h_bound().is_none());
    }

    #[test]
    fn catalog_resolves() {
        for id in MODEL_IDS {
            assert_eq!(model_by_id(id).unwrap().id(), *id);
        }
        assert!(model_by_id("nope").is_err());
    }
}
