//! First-variation flow of the augmented signal/log-density system and the
//! particle estimates of the limit-variance integrands.

mod flow;
mod variance;
mod voc;

use serde::{Deserialize, Serialize};

pub use flow::{
    apply_generator, f_coeff, invert_checked, inverse_flow, scheme_i_integrand, tangent_generator,
    tangent_step, TangentFlow, INVERSE_TOL,
};
pub(crate) use flow::{f_coeff_from, invert_checked_into, scheme_i_integrand_from};
pub use variance::{
    integrand_vanishes, mu_estimate, u_estimate_scheme_i, u_estimate_scheme_ii, IntegrandSums, VarianceEstimate,
    GROUPS,
};
pub use voc::{variation_of_constants_check, DrivenLinearSystem};

/// Drift of the log-density row of the flow, as a multiple of `∂ₓ|h|²`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TangentConvention {
    /// `-½ ∂ₓ|h|²`, the derivative of the log-density drift.
    #[default]
    Derived,
    /// `+∂ₓ|h|²`.
    Printed,
}

impl TangentConvention {
    pub fn drift_factor(self) -> f64 {
        match self {
            Self::Derived => -0.5,
            Self::Printed => 1.0,
        }
    }
}

/// Sign in front of the centering term of the normalized integrand
/// `μ = u(g)/ρ(1) ∓ π(g) u(1)/ρ(1)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum SignConvention {
    #[default]
    #[serde(rename = "-")]
    Minus,
    #[serde(rename = "+")]
    Plus,
}

impl SignConvention {
    pub fn factor(self) -> f64 {
        match self {
            Self::Minus => -1.0,
            Self::Plus => 1.0,
        }
    }

    pub fn symbol(self) -> &'static str {
        match self {
            Self::Minus => "-",
            Self::Plus => "+",
        }
    }
}
