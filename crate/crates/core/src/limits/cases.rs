use serde::Serialize;

use super::double::{check_level, double_integral_weighted, noise_double_integral, Driver};
use crate::sde::BrownianLattice;
use crate::{Error, Result};

/// Catalog of `(F, θ)` pairs whose conditional expectations given the whole
/// observation-noise path have closed forms. All use `d = 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum LimitCase {
    /// `F = 1`, `θ ≡ 1`; limit variance `½`.
    Unit,
    /// `F = B₁`, `θ_r = B_r`; projector `E[B₁B_r | W] = r`, limit variance `⅙`.
    BrownianProduct,
    /// `F = W₁`, `θ ≡ 1`; `F` is observation-measurable, so the limit is
    /// mixed normal with conditional variance `W₁² / 2`.
    TerminalW,
    /// `F = 1`, `θ ≡ 1` with the outer factor `λ_s = s`; limit variance
    /// `½∫s² ds = ⅙`.
    OuterTime,
}

impl LimitCase {
    pub const ALL: [LimitCase; 4] = [Self::Unit, Self::BrownianProduct, Self::TerminalW, Self::OuterTime];

    pub fn id(self) -> &'static str {
        match self {
            Self::Unit => "unit",
            Self::BrownianProduct => "brownian-product",
            Self::TerminalW => "terminal-w",
            Self::OuterTime => "outer-time",
        }
    }

    pub fn parse(id: &str) -> Result<Self> {
        Self::ALL.into_iter().find(|c| c.id() == id).ok_or_else(|| Error::Unknown(id.to_string()))
    }

    /// Closed-form `E[F θ_r | W]` at the left end of every fine step.
    pub fn projector(self, n_fine: usize) -> Vec<f64> {
        match self {
            Self::BrownianProduct => (0..n_fine).map(|k| k as f64 / n_fine as f64).collect(),
            _ => vec![1.0; n_fine],
        }
    }

    fn outer_factor(self, n_fine: usize) -> Vec<f64> {
        match self {
            Self::OuterTime => (0..n_fine).map(|k| k as f64 / n_fine as f64).collect(),
            _ => vec![1.0; n_fine],
        }
    }

    /// The observation-measurable part of `F` pulled out of the conditional
    /// expectation.
    fn factor(self, lattice: &BrownianLattice) -> f64 {
        match self {
            Self::TerminalW => lattice.w1()[0],
            _ => 1.0,
        }
    }

    /// Predicted conditional limit variance `V*` given the observation noise.
    pub fn predicted_variance(self, lattice: &BrownianLattice) -> f64 {
        match self {
            Self::Unit => 0.5,
            Self::BrownianProduct | Self::OuterTime => 1.0 / 6.0,
            Self::TerminalW => 0.5 * lattice.w1()[0].powi(2),
        }
    }

    /// True when `V*` does not depend on the lattice.
    pub fn deterministic_variance(self) -> bool {
        !matches!(self, Self::TerminalW)
    }
}

/// `√n E[F ∫∫ θ dW dW | W]`, evaluated through the case's closed-form
/// projector instead of nested Monte Carlo.
pub fn conditional_double_integral(case: LimitCase, lattice: &BrownianLattice, n: usize) -> Result<f64> {
    let theta = case.projector(lattice.n_fine);
    let lambda = case.outer_factor(lattice.n_fine);
    Ok(case.factor(lattice) * double_integral_weighted(lattice, &theta, &lambda, n, 0, 0)?)
}

/// Cases of conditional expectations that vanish in the limit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ZeroCase {
    /// `F = 1`, `θ ≡ 1`, integrators `(B, W)`: zero at every `n`.
    Independent,
    /// `F = B₁`, `θ ≡ 1`, integrators `(B, W)`: projector `s − η(s)`, value
    /// `√n ∫ (s − η(s)) dW_s` with L¹ size `√(2 / (3πn))`.
    TerminalB,
    /// `F = B₁²`, `θ ≡ 1`, integrators `(B, B)`: the projection is the
    /// constant `1/√n`.
    SquareSame,
    /// `F = B¹₁B²₁`, `θ ≡ 1`, integrators `(B¹, B²)`: the constant `1/(2√n)`.
    ProductCross,
}

impl ZeroCase {
    pub const ALL: [ZeroCase; 4] = [Self::Independent, Self::TerminalB, Self::SquareSame, Self::ProductCross];

    pub fn id(self) -> &'static str {
        match self {
            Self::Independent => "independent",
            Self::TerminalB => "terminal-b",
            Self::SquareSame => "square-same",
            Self::ProductCross => "product-cross",
        }
    }

    pub fn parse(id: &str) -> Result<Self> {
        Self::ALL.into_iter().find(|c| c.id() == id).ok_or_else(|| Error::Unknown(id.to_string()))
    }

    /// Signal-noise dimension the case needs.
    pub fn signal_dim(self) -> usize {
        match self {
            Self::ProductCross => 2,
            _ => 1,
        }
    }

    /// True when the conditional expectation is a non-random constant, so
    /// that the per-lattice value is an unbiased Monte Carlo sample of it
    /// rather than the projection itself.
    pub fn is_constant(self) -> bool {
        matches!(self, Self::SquareSame | Self::ProductCross)
    }

    /// Predicted L¹ size of the projection at level `n`.
    pub fn predicted_l1(self, n: usize) -> f64 {
        let n = n as f64;
        match self {
            Self::Independent => 0.0,
            Self::TerminalB => (2.0 / (3.0 * std::f64::consts::PI * n)).sqrt(),
            Self::SquareSame => 1.0 / n.sqrt(),
            Self::ProductCross => 0.5 / n.sqrt(),
        }
    }

    /// One lattice's value: the projection itself for random projections,
    /// or an unbiased sample of the constant projection otherwise.
    pub fn sample(self, lattice: &BrownianLattice, n: usize) -> Result<f64> {
        check_level(n, lattice.n_fine, 8)?;
        let n_fine = lattice.n_fine;
        match self {
            Self::Independent => Ok(0.0),
            Self::TerminalB => {
                // Outer integrand s − η(s) is deterministic; the midpoint of
                // each fine step gives the closest fine-grid variance.
                let stride = n_fine / n;
                let h = 1.0 / n_fine as f64;
                let w = Driver::w(lattice, 0)?;
                let acc: f64 = (0..n_fine).map(|m| ((m % stride) as f64 + 0.5) * h * w.at(m)).sum();
                Ok((n as f64).sqrt() * acc)
            }
            Self::SquareSame => {
                let b = Driver::b(lattice, 0)?;
                let b1 = lattice.b1()[0];
                Ok(b1 * b1 * noise_double_integral(lattice, b, b, n))
            }
            Self::ProductCross => {
                let (b_1, b_2) = (Driver::b(lattice, 0)?, Driver::b(lattice, 1)?);
                let b1 = lattice.b1();
                Ok(b1[0] * b1[1] * noise_double_integral(lattice, b_1, b_2, n))
            }
        }
    }
}

/// Integrands `f_s` of the conditional-expectation identity
/// `E[∫f dW | W] = ∫E[f_s | W] dW_s`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum FubiniCase {
    /// `f_s = W_s`, already observation-adapted.
    ObservationPath,
    /// `f_s = B_s`, projector 0.
    SignalPath,
    /// `f_s = B_s²`, projector `s`.
    SignalSquare,
}

impl FubiniCase {
    pub const ALL: [FubiniCase; 3] = [Self::ObservationPath, Self::SignalPath, Self::SignalSquare];

    pub fn id(self) -> &'static str {
        match self {
            Self::ObservationPath => "observation-path",
            Self::SignalPath => "signal-path",
            Self::SignalSquare => "signal-square",
        }
    }

    pub fn value(self, t: f64, w: f64, b: f64) -> f64 {
        let _ = t;
        match self {
            Self::ObservationPath => w,
            Self::SignalPath => b,
            Self::SignalSquare => b * b,
        }
    }

    pub fn projector(self, t: f64, w: f64) -> f64 {
        match self {
            Self::ObservationPath => w,
            Self::SignalPath => 0.0,
            Self::SignalSquare => t,
        }
    }
}
