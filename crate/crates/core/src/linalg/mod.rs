//! Dense linear algebra: the [`Matrix`] carrier, compact SVD, the exact
//! polar factor and its Newton–Schulz approximation.

mod matrix;
mod polar;
mod svd;

use thiserror::Error;

pub use matrix::Matrix;
pub use polar::{newton_schulz, polar_factor, polar_factor_exact, polar_with_nuclear, NsCoefficients};
pub use svd::{
    compact_svd, compact_svd_with_budget, singular_values, Svd, DEFAULT_MAX_SWEEPS,
    DEFAULT_RANK_TOL,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinalgError {
    #[error("shape mismatch in {op}: {left:?} vs {right:?}")]
    ShapeMismatch {
        op: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },
    #[error("data length {len} does not match shape {rows}x{cols}")]
    BadDataLength { rows: usize, cols: usize, len: usize },
    #[error("operation requires a non-empty matrix")]
    Empty,
    #[error("non-finite entry passed to {op}")]
    NonFinite { op: &'static str },
    #[error("Jacobi SVD did not converge within {sweeps} sweeps")]
    ConvergenceFailure { sweeps: usize },
    #[error("Newton-Schulz diverged at iteration {iteration} (Frobenius norm {norm})")]
    DivergenceDetected { iteration: usize, norm: f64 },
}

pub fn frobenius_norm(a: &Matrix) -> f64 {
    a.frobenius_norm()
}

/// Sum of singular values.
pub fn nuclear_norm(a: &Matrix) -> Result<f64, LinalgError> {
    if a.is_zero() {
        return Ok(0.0);
    }
    Ok(compact_svd(a, 0.0)?.sigma.iter().sum())
}
