//! Numerical toolkit for Delaunay unduloids and the periodic Cahn-Hilliard
//! interfaces that sit on them.
//!
//! The crate is organised bottom-up:
//!
//! * [`delaunay`] integrates the generating curve and answers geometric
//!   queries (curvatures, radial profile, signed distance).
//! * [`floquet`] holds Hill-equation monodromy and the discrete
//!   Fourier-Laplace transform for periodic operators.
//! * [`jacobi`] builds the six geometric Jacobi fields and counts the
//!   temperate kernel through Hill discriminants.
//! * [`profile`] solves the one-dimensional interface problem with its
//!   Lagrange multiplier.
//! * [`chsolver`] computes the axisymmetric periodic stationary solution.
//! * [`bloch`] assembles the Bloch family of the linearized operator and
//!   renders the nondegeneracy verdict.

// Negated float comparisons reject NaN along with out-of-range values, and
// index loops mirror the stencil formulas.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod bloch;
pub mod chsolver;
pub mod delaunay;
mod error;
pub mod floquet;
pub mod jacobi;
pub mod linalg;
pub mod profile;

pub use error::{Error, Result};

/// The Allen-Cahn nonlinearity `f(u) = u - u^3`.
#[inline]
pub fn f(u: f64) -> f64 {
    u - u * u * u
}

/// `f'(u) = 1 - 3u^2`.
#[inline]
pub fn df(u: f64) -> f64 {
    1.0 - 3.0 * u * u
}
