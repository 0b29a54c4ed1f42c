use serde::Serialize;

use crate::sde::{AffineModel, ObservationPath};
use crate::{Error, Result};

/// Conditional mean and variance of the signal at time 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KalmanState {
    pub mean: f64,
    pub variance: f64,
}

/// Kalman–Bucy filter of an affine model, integrated by Euler on the fine
/// grid of the observation path.
///
/// With `dY = v·h dt + v dW` folded into the signal, the model has drift
/// `(a + v c) X + v h0`, signal noise variance `σ² + v²` and cross covariance
/// `v` with the observation noise, so the gain is `P c + v`.
pub fn kalman_bucy(model: &AffineModel, y: &ObservationPath) -> Result<KalmanState> {
    if y.d != 1 {
        return Err(Error::Dimension(format!("scalar filter on a {}-dimensional observation", y.d)));
    }
    let dt = 1.0 / y.n_fine as f64;
    let drift = model.a + model.v * model.c;
    let q = model.sigma * model.sigma + model.v * model.v;
    let (mut m, mut p) = (model.m0, model.p0);
    for k in 0..y.n_fine {
        let gain = p * model.c + model.v;
        let innovation = y.increment(k)[0] - (model.c * m + model.h0) * dt;
        let m_next = m + (drift * m + model.v * model.h0) * dt + gain * innovation;
        p += (2.0 * drift * p + q - gain * gain) * dt;
        m = m_next;
    }
    if !(m.is_finite() && p.is_finite()) {
        return Err(Error::NonFinite { step: y.n_fine });
    }
    Ok(KalmanState { mean: m, variance: p })
}
