use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{estimate_constants, Problem, ProblemConstants, ProblemError, Sample};
use crate::linalg::Matrix;

/// Rows drawn per stochastic gradient.
const BATCH_ROWS: usize = 2;

/// Symmetric low-rank factorization `f(X) = ¼‖A − XXᵀ‖_F²` with `X` of
/// shape m×n and `A = ZZᵀ + noise` (Z is m×k), which is non-convex in X.
///
/// The gradient is `R X` with residual `R = XXᵀ − A`. The stochastic
/// gradient keeps `BATCH_ROWS` rows of `R X` drawn uniformly with
/// replacement and rescales them by `m / BATCH_ROWS`, so it is unbiased.
#[derive(Debug, Clone)]
pub struct MatrixFactorization {
    target: Matrix,
    factor: Matrix,
    rank: usize,
    cols: usize,
    smoothness: f64,
    sigma: f64,
    init_scale: f64,
}

pub fn make_matrix_factorization(
    seed: u64,
    m: usize,
    n: usize,
    k: usize,
    sigma: f64,
) -> Result<MatrixFactorization, ProblemError> {
    if m == 0 || n == 0 || k == 0 {
        return Err(ProblemError::InvalidConstants("shape and rank must be positive".into()));
    }
    if k > m.min(n) {
        return Err(ProblemError::InvalidConstants(format!(
            "rank {k} exceeds min({m}, {n})"
        )));
    }
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(ProblemError::InvalidConstants(format!("sigma = {sigma} must be >= 0")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut factor = Matrix::random_normal(m, k, &mut rng);
    factor.scale_mut(1.0 / (k as f64).sqrt());
    let mut target = factor.matmul(&factor.transpose()).expect("conforming");
    if sigma > 0.0 {
        let e = Matrix::random_normal(m, m, &mut rng);
        let sym = e.add(&e.transpose()).expect("square").scale(0.5 * sigma / m as f64);
        target.axpy(1.0, &sym).expect("square");
    }
    let mut problem = MatrixFactorization {
        target,
        factor,
        rank: k,
        cols: n,
        smoothness: f64::NAN,
        sigma: f64::NAN,
        init_scale: 1.0 / (n as f64).sqrt(),
    };
    let mut probe_rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    let (l, s) = estimate_constants(&problem, 10_000, 20, 200, 0.5, &mut probe_rng);
    problem.smoothness = l;
    problem.sigma = s;
    Ok(problem)
}

impl MatrixFactorization {
    pub fn target(&self) -> &Matrix {
        &self.target
    }

    /// An exact minimizer of the noiseless problem: `[Z, 0]`.
    pub fn planted_solution(&self) -> Matrix {
        let m = self.target.rows();
        Matrix::from_fn(m, self.cols, |i, j| {
            if j < self.rank {
                self.factor[(i, j)]
            } else {
                0.0
            }
        })
    }

    fn residual(&self, x: &Matrix) -> Matrix {
        x.matmul(&x.transpose())
            .expect("conforming")
            .sub(&self.target)
            .expect("square")
    }
}

impl Problem for MatrixFactorization {
    fn name(&self) -> &'static str {
        "matrix_factorization"
    }

    fn shape(&self) -> (usize, usize) {
        (self.target.rows(), self.cols)
    }

    fn constants(&self) -> ProblemConstants {
        ProblemConstants {
            smoothness: self.smoothness,
            noise_sigma: self.sigma,
            pl_mu: None,
            f_star: None,
        }
    }

    fn value(&self, x: &Matrix) -> f64 {
        0.25 * self.residual(x).frobenius_norm_sq()
    }

    fn gradient(&self, x: &Matrix) -> Matrix {
        self.residual(x).matmul(x).expect("conforming")
    }

    fn stochastic_gradient(&self, x: &Matrix, sample: Sample) -> Matrix {
        let (m, n) = self.shape();
        let mut rng = sample.rng();
        let mut g = Matrix::zeros(m, n);
        let weight = m as f64 / BATCH_ROWS as f64;
        for _ in 0..BATCH_ROWS {
            let i = rng.random_range(0..m);
            // row i of (XXᵀ − A) X
            let xi = x.row(i);
            for j in 0..m {
                let xj = x.row(j);
                let r: f64 = xi.iter().zip(xj).map(|(a, b)| a * b).sum::<f64>() - self.target[(i, j)];
                for c in 0..n {
                    g[(i, c)] += weight * r * xj[c];
                }
            }
        }
        g
    }

    fn initial_point(&self, rng: &mut dyn RngCore) -> Matrix {
        let (m, n) = self.shape();
        let mut x = Matrix::random_normal(m, n, rng);
        x.scale_mut(self.init_scale);
        x
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::probe_unbiasedness;

    #[test]
    fn planted_solution_is_stationary() {
        let p = make_matrix_factorization(1, 6, 4, 2, 0.0).unwrap();
        let x = p.planted_solution();
        assert!(p.gradient(&x).max_abs() < 1e-12);
        assert!(p.value(&x) < 1e-24);
    }

    #[test]
    fn stochastic_gradient_is_unbiased() {
        let p = make_matrix_factorization(2, 6, 4, 2, 0.1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = p.initial_point(&mut rng);
        let report = probe_unbiasedness(&p, &x, 10_000, &mut rng);
        assert!(report.holds(), "{report:?}");
    }

    #[test]
    fn value_is_nonnegative_and_constants_are_finite() {
        let p = make_matrix_factorization(4, 5, 5, 3, 0.2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..50 {
            assert!(p.value(&p.initial_point(&mut rng)) >= 0.0);
        }
        let c = p.constants();
        assert!(c.smoothness.is_finite() && c.smoothness > 0.0);
        assert!(c.noise_sigma.is_finite() && c.noise_sigma > 0.0);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let p = make_matrix_factorization(5, 4, 3, 2, 0.1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = p.initial_point(&mut rng);
        let g = p.gradient(&x);
        let h = 1e-5;
        for k in 0..12 {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp.as_mut_slice()[k] += h;
            xm.as_mut_slice()[k] -= h;
            let fd = (p.value(&xp) - p.value(&xm)) / (2.0 * h);
            assert!((fd - g.as_slice()[k]).abs() < 1e-7);
        }
    }

    #[test]
    fn rejects_rank_above_shape() {
        assert!(make_matrix_factorization(0, 4, 2, 3, 0.0).is_err());
    }
}
