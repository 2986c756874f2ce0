//! Rank-preserving orthogonalization `M = U_r Σ_r V_rᵀ  ↦  U_r V_rᵀ`.

use serde::{Deserialize, Serialize};

use super::svd::{compact_svd, DEFAULT_RANK_TOL};
use super::{LinalgError, Matrix};

/// Exact polar factor `U_r V_rᵀ` from the compact SVD.
///
/// Every positive singular value is mapped to one and the null space is left
/// untouched, so the output has the same rank as `m`. The zero matrix maps
/// to the zero matrix.
pub fn polar_factor_exact(m: &Matrix, rank_tol: f64) -> Result<Matrix, LinalgError> {
    Ok(polar_with_nuclear(m, rank_tol)?.0)
}

/// Polar factor together with the nuclear norm `Σ σ_i` of the input, both
/// read off one decomposition.
pub fn polar_with_nuclear(m: &Matrix, rank_tol: f64) -> Result<(Matrix, f64), LinalgError> {
    if m.rows() == 0 || m.cols() == 0 {
        return Err(LinalgError::Empty);
    }
    if m.is_zero() {
        return Ok((Matrix::zeros(m.rows(), m.cols()), 0.0));
    }
    let svd = compact_svd(m, rank_tol)?;
    let (rows, cols) = m.shape();
    let mut out = Matrix::zeros(rows, cols);
    for k in 0..svd.rank() {
        for i in 0..rows {
            let u = svd.u[(i, k)];
            for j in 0..cols {
                out[(i, j)] += u * svd.v[(j, k)];
            }
        }
    }
    Ok((out, svd.sigma.iter().sum()))
}

/// Coefficients `(a, b, c)` of the odd quintic `p(x) = a x + b x³ + c x⁵`
/// applied to the singular values at each Newton–Schulz step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NsCoefficients {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl NsCoefficients {
    /// `p(1) = 1`, `p'(1) = p''(1) = 0`: converges to the exact polar factor.
    pub const CONVERGENT: Self = Self {
        a: 15.0 / 8.0,
        b: -10.0 / 8.0,
        c: 3.0 / 8.0,
    };

    /// The aggressive Muon tuning. It inflates small singular values fast
    /// but does not converge: singular values end up oscillating in roughly
    /// [0.7, 1.2] instead of settling at 1.
    pub const MUON_TUNED: Self = Self {
        a: 3.4445,
        b: -4.7750,
        c: 2.0315,
    };

    pub fn eval(&self, x: f64) -> f64 {
        let x2 = x * x;
        x * (self.a + x2 * (self.b + self.c * x2))
    }
}

impl Default for NsCoefficients {
    fn default() -> Self {
        Self::CONVERGENT
    }
}

/// Quintic Newton–Schulz approximation of the polar factor.
///
/// `Y₀ = m / ‖m‖_F`, then `Y ← a·Y + b·(YYᵀ)Y + c·(YYᵀ)²Y`. Wide inputs are
/// handled in transposed form, and the polynomial is applied through the
/// small Gram matrix `G = YᵀY` using `(YYᵀ)ᵏY = Y·Gᵏ`.
pub fn newton_schulz(
    m: &Matrix,
    steps: usize,
    coeffs: NsCoefficients,
) -> Result<Matrix, LinalgError> {
    if m.rows() == 0 || m.cols() == 0 {
        return Err(LinalgError::Empty);
    }
    if !m.is_finite() {
        return Err(LinalgError::NonFinite { op: "newton_schulz" });
    }
    let norm = m.frobenius_norm();
    if norm == 0.0 {
        return Ok(Matrix::zeros(m.rows(), m.cols()));
    }
    let wide = m.rows() < m.cols();
    let mut y = if wide { m.transpose() } else { m.clone() };
    y.scale_mut(1.0 / norm);
    let n = y.cols();
    let limit = 10.0 * (n as f64).sqrt();

    for iteration in 1..=steps {
        let g = y.gram();
        let g2 = g.matmul(&g)?;
        let mut poly = Matrix::identity(n).scale(coeffs.a);
        poly.axpy(coeffs.b, &g)?;
        poly.axpy(coeffs.c, &g2)?;
        y = y.matmul(&poly)?;
        let fro = y.frobenius_norm();
        if !fro.is_finite() || fro > limit {
            return Err(LinalgError::DivergenceDetected {
                iteration,
                norm: fro,
            });
        }
    }
    Ok(if wide { y.transpose() } else { y })
}

/// Convenience wrapper with the default rank tolerance.
pub fn polar_factor(m: &Matrix) -> Result<Matrix, LinalgError> {
    polar_factor_exact(m, DEFAULT_RANK_TOL)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn dist(a: &Matrix, b: &Matrix) -> f64 {
        a.sub(b).unwrap().frobenius_norm()
    }

    #[test]
    fn identity_is_fixed() {
        let i = Matrix::identity(4);
        assert!(dist(&polar_factor(&i).unwrap(), &i) < 1e-14);
    }

    #[test]
    fn positive_singular_values_map_to_one() {
        let o = polar_factor(&Matrix::diag(&[3.0, 0.5])).unwrap();
        assert!(dist(&o, &Matrix::identity(2)) < 1e-14);
    }

    #[test]
    fn null_space_left_unchanged() {
        let o = polar_factor(&Matrix::diag(&[3.0, 0.0])).unwrap();
        assert!(dist(&o, &Matrix::diag(&[1.0, 0.0])) < 1e-14);
    }

    #[test]
    fn zero_maps_to_zero() {
        let o = polar_factor(&Matrix::zeros(3, 5)).unwrap();
        assert!(o.is_zero());
        assert!(newton_schulz(&Matrix::zeros(3, 5), 5, NsCoefficients::default())
            .unwrap()
            .is_zero());
    }

    #[test]
    fn full_column_rank_gives_orthonormal_columns() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let m = Matrix::random_normal(9, 4, &mut rng);
        let o = polar_factor(&m).unwrap();
        assert!(dist(&o.gram(), &Matrix::identity(4)) < 1e-10);
    }

    #[test]
    fn ns_identity_converges() {
        let i = Matrix::identity(4);
        let y = newton_schulz(&i, 10, NsCoefficients::default()).unwrap();
        assert!(dist(&y, &i) < 1e-6);
    }

    #[test]
    fn ns_diag_matches_exact() {
        let m = Matrix::diag(&[2.0, 0.5]);
        let y = newton_schulz(&m, 30, NsCoefficients::default()).unwrap();
        assert!(dist(&y, &polar_factor(&m).unwrap()) < 1e-5);
    }

    #[test]
    fn ns_wide_and_tall_agree_with_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for &(r, c) in &[(32, 16), (16, 32), (5, 5)] {
            let m = Matrix::random_normal(r, c, &mut rng);
            let y = newton_schulz(&m, 30, NsCoefficients::default()).unwrap();
            let n = r.min(c) as f64;
            assert!(dist(&y, &polar_factor(&m).unwrap()) / n.sqrt() < 1e-5);
        }
    }

    #[test]
    fn muon_tuned_coefficients_do_not_fix_identity() {
        // p(1) = 0.701 for the tuned set
        assert!((NsCoefficients::MUON_TUNED.eval(1.0) - 0.701).abs() < 1e-12);
        assert_eq!(NsCoefficients::CONVERGENT.eval(1.0), 1.0);
    }

    #[test]
    fn diverging_coefficients_are_detected() {
        let bad = NsCoefficients {
            a: 3.0,
            b: 0.0,
            c: 0.0,
        };
        let err = newton_schulz(&Matrix::identity(3), 10, bad).unwrap_err();
        assert!(matches!(err, LinalgError::DivergenceDetected { .. }));
    }
}
