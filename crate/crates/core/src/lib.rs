//! Euler discretization of continuous-time nonlinear filtering under a
//! Girsanov change of measure, together with the Monte Carlo machinery
//! needed to check its asymptotic error laws.
//!
//! The crate is organised bottom-up:
//!
//! * [`sde`]: filtering models, Brownian lattices with exact coarsening,
//!   Euler–Maruyama integration at any level of a shared lattice.
//! * [`filter`]: Girsanov log-weights, particle estimates of the
//!   unnormalized and normalized filter, rescaled discretization errors.
//! * [`tangent`]: the augmented first-variation flow, the coefficient
//!   tensor driving the limit variance, and particle estimates of the
//!   variance integrands.
//! * [`limits`]: double stochastic integrals and their conditional
//!   expectations on cases with closed-form projectors.
//! * [`stats`]: KS tests, moment summaries, rate regression, weighted
//!   (stable) limit checks.
//! * [`experiment`]: config-driven suites and report writers.

// Index loops mirror the tensor notation of the small numeric kernels, and
// negated comparisons are deliberate: they also reject NaN.
#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod experiment;
pub mod filter;
pub mod limits;
pub mod linalg;
pub mod rng;
pub mod sde;
pub mod stats;
pub mod tangent;

pub use error::{Error, Result};
