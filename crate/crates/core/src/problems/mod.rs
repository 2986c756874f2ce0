//! Synthetic objectives with known (or probed) smoothness, noise, and PL
//! constants.
//!
//! Stochastic gradients are addressed by a [`Sample`] handle: drawing a
//! sample fixes the randomness ξ, and the same handle can then be evaluated
//! at any number of points. This is what makes the two-point evaluation
//! `∇f(X_t; ξ_t)`, `∇f(X_{t-1}; ξ_t)` exact rather than approximate.

mod factorization;
mod mlp;
mod nonconvex;
mod probe;
mod quadratic;

use rand::{Rng, RngCore};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::Matrix;

pub use factorization::{make_matrix_factorization, MatrixFactorization};
pub use mlp::{make_tiny_mlp, MlpConfig, TinyMlp};
pub use nonconvex::{
    make_pl_nonconvex, pl_constant_scan, scalar_minimizer, PlNonconvex, PlScan,
    NONCONVEX_SMOOTHNESS,
};
pub use probe::{
    estimate_constants, probe_pl_inequality, probe_smoothness, probe_unbiasedness,
    probe_variance, ProbeReport,
};
pub use quadratic::{make_stochastic_quadratic, StochasticQuadratic};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProblemError {
    #[error("invalid problem constants: {0}")]
    InvalidConstants(String),
    #[error("shape mismatch: problem expects {expected:?}, got {got:?}")]
    ShapeMismatch {
        expected: (usize, usize),
        got: (usize, usize),
    },
}

/// Constants of Assumptions 1–4 (and PL) as known for a problem instance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProblemConstants {
    /// Lipschitz constant of the (per-sample) gradient in Frobenius norm.
    pub smoothness: f64,
    /// `E‖∇f(X;ξ) − ∇f(X)‖_F² ≤ noise_sigma²`.
    pub noise_sigma: f64,
    pub pl_mu: Option<f64>,
    pub f_star: Option<f64>,
}

/// Handle for one draw of ξ. Evaluating the stochastic gradient twice with
/// the same handle uses the same randomness.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Sample {
    pub id: u64,
}

impl Sample {
    pub fn draw<R: RngCore + ?Sized>(rng: &mut R) -> Self {
        Self { id: rng.next_u64() }
    }

    /// Private RNG stream for this sample.
    pub fn rng(&self) -> ChaCha8Rng {
        use rand::SeedableRng;
        ChaCha8Rng::seed_from_u64(self.id)
    }
}

/// Two stochastic gradients under one draw of ξ.
#[derive(Debug, Clone)]
pub struct SamplePair {
    pub grad_at_x: Matrix,
    pub grad_at_x_prev: Matrix,
    pub sample_id: u64,
}

/// Objective `f(X) = E_ξ f(X; ξ)` over a single matrix parameter.
pub trait Problem: Send + Sync {
    fn name(&self) -> &'static str;

    fn shape(&self) -> (usize, usize);

    fn constants(&self) -> ProblemConstants;

    /// Deterministic objective value. Diagnostics only.
    fn value(&self, x: &Matrix) -> f64;

    /// Exact gradient of the deterministic objective. Diagnostics only.
    fn gradient(&self, x: &Matrix) -> Matrix;

    /// `∇f(X; ξ)` for the sample `ξ` identified by `sample`.
    fn stochastic_gradient(&self, x: &Matrix, sample: Sample) -> Matrix;

    /// Starting point `X_1` for a run seeded by `rng`.
    fn initial_point(&self, rng: &mut dyn RngCore) -> Matrix;

    /// Exact stochastic noise variance `E‖∇f(X;ξ) − ∇f(X)‖²` when known in
    /// closed form (additive-noise problems).
    fn exact_noise_variance(&self) -> Option<f64> {
        None
    }

    fn check_shape(&self, x: &Matrix) -> Result<(), ProblemError> {
        if x.shape() != self.shape() {
            return Err(ProblemError::ShapeMismatch {
                expected: self.shape(),
                got: x.shape(),
            });
        }
        Ok(())
    }
}

/// Draws one ξ and evaluates the stochastic gradient at both points under it.
pub fn sample_pair<P: Problem + ?Sized, R: RngCore + ?Sized>(
    problem: &P,
    x_t: &Matrix,
    x_prev: &Matrix,
    rng: &mut R,
) -> Result<SamplePair, ProblemError> {
    problem.check_shape(x_t)?;
    problem.check_shape(x_prev)?;
    let sample = Sample::draw(rng);
    Ok(SamplePair {
        grad_at_x: problem.stochastic_gradient(x_t, sample),
        grad_at_x_prev: problem.stochastic_gradient(x_prev, sample),
        sample_id: sample.id,
    })
}

pub fn true_gradient<P: Problem + ?Sized>(problem: &P, x: &Matrix) -> Matrix {
    problem.gradient(x)
}

pub fn f_value<P: Problem + ?Sized>(problem: &P, x: &Matrix) -> f64 {
    problem.value(x)
}

/// Gaussian matrix with `E‖noise‖_F² = sigma²` exactly.
pub(crate) fn isotropic_noise<R: Rng + ?Sized>(
    rows: usize,
    cols: usize,
    sigma: f64,
    rng: &mut R,
) -> Matrix {
    let mut noise = Matrix::random_normal(rows, cols, rng);
    noise.scale_mut(sigma / ((rows * cols) as f64).sqrt());
    noise
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn identical_points_give_identical_pair() {
        let p = make_stochastic_quadratic(1, 4, 3, 5.0, 0.5, 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = p.initial_point(&mut rng);
        let pair = sample_pair(&p, &x, &x, &mut rng).unwrap();
        assert_eq!(pair.grad_at_x, pair.grad_at_x_prev);
    }

    #[test]
    fn noiseless_pair_is_true_gradient() {
        let p = make_stochastic_quadratic(1, 4, 3, 5.0, 0.5, 0.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = p.initial_point(&mut rng);
        let y = p.initial_point(&mut rng);
        let pair = sample_pair(&p, &x, &y, &mut rng).unwrap();
        assert_eq!(pair.grad_at_x, p.gradient(&x));
        assert_eq!(pair.grad_at_x_prev, p.gradient(&y));
    }

    #[test]
    fn pair_is_reproducible_under_seed() {
        let p = make_tiny_mlp(2, 8, 64, 0.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x = p.initial_point(&mut rng);
        let y = p.initial_point(&mut rng);
        let a = sample_pair(&p, &x, &y, &mut ChaCha8Rng::seed_from_u64(99)).unwrap();
        let b = sample_pair(&p, &x, &y, &mut ChaCha8Rng::seed_from_u64(99)).unwrap();
        assert_eq!(a.sample_id, b.sample_id);
        assert_eq!(a.grad_at_x, b.grad_at_x);
        assert_eq!(a.grad_at_x_prev, b.grad_at_x_prev);
    }

    #[test]
    fn pair_rejects_wrong_shape() {
        let p = make_stochastic_quadratic(1, 4, 3, 5.0, 0.5, 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = Matrix::zeros(3, 4);
        assert!(matches!(
            sample_pair(&p, &x, &x, &mut rng),
            Err(ProblemError::ShapeMismatch { .. })
        ));
    }
}
