use rand_chacha::ChaCha8Rng;

use crate::{Error, Result};

/// Coefficients of the signal/observation system at one point `(x, y)`.
///
/// Matrices are row-major: `sigma[i * e + l]`, `v[i * d + j]`.
#[derive(Debug, Clone)]
pub struct Coefficients {
    pub b: Vec<f64>,
    pub sigma: Vec<f64>,
    pub v: Vec<f64>,
    pub h: Vec<f64>,
}

impl Coefficients {
    pub fn new(e: usize, d: usize) -> Self {
        Self { b: vec![0.0; e], sigma: vec![0.0; e * e], v: vec![0.0; e * d], h: vec![0.0; d] }
    }
}

/// First partial derivatives at one point. The last index is always the
/// differentiation variable.
///
/// * `db_dx[i * e + k]` = ∂b_i/∂x_k
/// * `dsigma_dx[(i * e + l) * e + k]` = ∂σ_il/∂x_k
/// * `dv_dx[(i * d + j) * e + k]` = ∂v_ij/∂x_k
/// * `dh_dx[i * e + k]` = ∂h_i/∂x_k
/// * `dh_dy[i * d + j]` = ∂h_i/∂y_j
/// * `dv_dy[(k * d + i) * d + j]` = ∂v_ki/∂y_j
#[derive(Debug, Clone)]
pub struct Partials {
    pub db_dx: Vec<f64>,
    pub dsigma_dx: Vec<f64>,
    pub dv_dx: Vec<f64>,
    pub dh_dx: Vec<f64>,
    pub dh_dy: Vec<f64>,
    pub dv_dy: Vec<f64>,
}

impl Partials {
    pub fn new(e: usize, d: usize) -> Self {
        Self {
            db_dx: vec![0.0; e * e],
            dsigma_dx: vec![0.0; e * e * e],
            dv_dx: vec![0.0; e * d * e],
            dh_dx: vec![0.0; d * e],
            dh_dy: vec![0.0; d * d],
            dv_dy: vec![0.0; e * d * d],
        }
    }

    pub fn clear(&mut self) {
        for buf in [
            &mut self.db_dx,
            &mut self.dsigma_dx,
            &mut self.dv_dx,
            &mut self.dh_dx,
            &mut self.dh_dy,
            &mut self.dv_dy,
        ] {
            buf.fill(0.0);
        }
    }
}

/// Signal `dX = b dt + σ dB + v dY` observed through `dY = h dt + dW`.
pub trait FilterModel: Send + Sync {
    fn id(&self) -> &str;
    fn signal_dim(&self) -> usize;
    fn obs_dim(&self) -> usize;

    fn eval(&self, x: &[f64], y: &[f64], out: &mut Coefficients);

    /// Only the sensor function; the weight recursions need nothing else.
    fn eval_h(&self, x: &[f64], y: &[f64], h: &mut [f64]);

    /// Overwrites every buffer of `out`.
    fn eval_partials(&self, x: &[f64], y: &[f64], out: &mut Partials);

    /// `eval` and `eval_partials` at the same point; models may override
    /// this to share work between the two.
    fn eval_with_partials(&self, x: &[f64], y: &[f64], coef: &mut Coefficients, p: &mut Partials) {
        self.eval(x, y, coef);
        self.eval_partials(x, y, p);
    }

    /// Number of observation-only terms a model wants precomputed once per
    /// grid point of a path; 0 (the default) opts out of caching.
    fn y_cache_len(&self) -> usize {
        0
    }

    /// Fills the observation-only terms at `y` (`y_cache_len` values).
    fn fill_y_cache(&self, _y: &[f64], _out: &mut [f64]) {}

    /// `eval` with the terms from `fill_y_cache` at the same `y`.
    fn eval_cached(&self, x: &[f64], y: &[f64], _cache: &[f64], out: &mut Coefficients) {
        self.eval(x, y, out)
    }

    /// `eval_with_partials` with the terms from `fill_y_cache` at the same `y`.
    fn eval_with_partials_cached(
        &self,
        x: &[f64],
        y: &[f64],
        _cache: &[f64],
        coef: &mut Coefficients,
        p: &mut Partials,
    ) {
        self.eval_with_partials(x, y, coef, p)
    }

    fn sample_x0(&self, rng: &mut ChaCha8Rng, x0: &mut [f64]);

    /// Uniform bound on `|h_i|`, or `None` for sensors that are not bounded
    /// (the bound check is then skipped).
    fn h_bound(&self) -> Option<f64>;
}

/// Test functions `g` applied to the terminal signal state.
#[derive(Debug, Clone, PartialEq)]
pub enum TestFunction {
    Zero,
    One,
    Const(f64),
    /// `x_k`
    Coord(usize),
    /// `tanh(x_0)`
    Tanh,
    /// `1 + tanh(x_0)`
    ShiftedTanh,
    /// `cos(x_0)`
    Cos,
}

impl TestFunction {
    pub const IDS: &'static [&'static str] =
        &["zero", "one", "const:<c>", "coord:<k>", "tanh", "shifted-tanh", "cos"];

    pub fn parse(id: &str) -> Result<Self> {
        let g = match id {
            "zero" => Self::Zero,
            "one" => Self::One,
            "tanh" => Self::Tanh,
            "shifted-tanh" => Self::ShiftedTanh,
            "cos" => Self::Cos,
            _ => {
                if let Some(c) = id.strip_prefix("const:") {
                    Self::Const(c.parse().map_err(|_| Error::Unknown(id.to_string()))?)
                } else if let Some(k) = id.strip_prefix("coord:") {
                    Self::Coord(k.parse().map_err(|_| Error::Unknown(id.to_string()))?)
                } else {
                    return Err(Error::Unknown(id.to_string()));
                }
            }
        };
        Ok(g)
    }

    pub fn id(&self) -> String {
        match self {
            Self::Zero => "zero".into(),
            Self::One => "one".into(),
            Self::Const(c) => format!("const:{c}"),
            Self::Coord(k) => format!("coord:{k}"),
            Self::Tanh => "tanh".into(),
            Self::ShiftedTanh => "shifted-tanh".into(),
            Self::Cos => "cos".into(),
        }
    }

    pub fn check_dim(&self, e: usize) -> Result<()> {
        match self {
            Self::Coord(k) if *k >= e => {
                Err(Error::Dimension(format!("coord:{k} on a {e}-dimensional signal")))
            }
            _ => Ok(()),
        }
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        match self {
            Self::Zero => 0.0,
            Self::One => 1.0,
            Self::Const(c) => *c,
            Self::Coord(k) => x[*k],
            Self::Tanh => x[0].tanh(),
            Self::ShiftedTanh => 1.0 + x[0].tanh(),
            Self::Cos => x[0].cos(),
        }
    }

    pub fn grad(&self, x: &[f64], out: &mut [f64]) {
        out.fill(0.0);
        match self {
            Self::Zero | Self::One | Self::Const(_) => {}
            Self::Coord(k) => out[*k] = 1.0,
            Self::Tanh | Self::ShiftedTanh => {
                let t = x[0].tanh();
                out[0] = 1.0 - t * t;
            }
            Self::Cos => out[0] = -x[0].sin(),
        }
    }

    /// True when `g` is constant, so particle errors of the normalized
    /// filter vanish identically.
    pub fn is_constant(&self) -> bool {
        matches!(self, Self::Zero | Self::One | Self::Const(_))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_round_trip() {
        for id in ["zero", "one", "const:2.5", "coord:1", "tanh", "shifted-tanh", "cos"] {
            assert_eq!(TestFunction::parse(id).unwrap().id(), id);
        }
        assert!(TestFunction::parse("sin").is_err());
        assert!(TestFunction::parse("coord:x").is_err());
    }

    #[test]
    fn gradients_match_finite_differences() {
        let x = [0.37, -1.1];
        let mut g = [0.0; 2];
        for f in [TestFunction::Tanh, TestFunction::ShiftedTanh, TestFunction::Cos, TestFunction::Coord(1)] {
            f.grad(&x, &mut g);
            for k in 0..2 {
                let h = 1e-6;
                let mut xp = x;
                let mut xm = x;
                xp[k] += h;
                xm[k] -= h;
                let fd = (f.value(&xp) - f.value(&xm)) / (2.0 * h);
                assert!((fd - g[k]).abs() < 1e-8, "{f:?} k={k}");
            }
        }
    }
}
