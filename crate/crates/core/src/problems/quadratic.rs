use rand::seq::SliceRandom;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{isotropic_noise, Problem, ProblemConstants, ProblemError, Sample};
use crate::linalg::Matrix;

/// `f(X) = ½ Σ h_ij (X − X*)_ij²` with curvatures log-spread over `[μ, L]`
/// and additive isotropic Gaussian gradient noise of total variance `σ²`.
#[derive(Debug, Clone)]
pub struct StochasticQuadratic {
    curvature: Matrix,
    target: Matrix,
    smoothness: f64,
    pl_mu: f64,
    sigma: f64,
    /// Standard deviation of the entrywise offset of `X_1` from `X*`.
    pub init_scale: f64,
}

/// Builds the quadratic. For `m·n ≥ 2` the curvatures hit `μ` and `L`
/// exactly, so both constants are tight.
pub fn make_stochastic_quadratic(
    seed: u64,
    m: usize,
    n: usize,
    smoothness: f64,
    pl_mu: f64,
    sigma: f64,
) -> Result<StochasticQuadratic, ProblemError> {
    if m == 0 || n == 0 {
        return Err(ProblemError::InvalidConstants("shape must be positive".into()));
    }
    if !(pl_mu > 0.0 && pl_mu.is_finite()) {
        return Err(ProblemError::InvalidConstants(format!("mu = {pl_mu} must be positive")));
    }
    if !(smoothness.is_finite() && pl_mu <= smoothness) {
        return Err(ProblemError::InvalidConstants(format!(
            "mu = {pl_mu} exceeds L = {smoothness}"
        )));
    }
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(ProblemError::InvalidConstants(format!("sigma = {sigma} must be >= 0")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let count = m * n;
    let (lo, hi) = (pl_mu.ln(), smoothness.ln());
    let mut h: Vec<f64> = (0..count)
        .map(|k| {
            if count == 1 {
                smoothness
            } else {
                (lo + (hi - lo) * k as f64 / (count - 1) as f64).exp()
            }
        })
        .collect();
    // pin the endpoints exactly; exp(ln x) can be off by an ulp
    if count > 1 {
        h[0] = pl_mu;
        h[count - 1] = smoothness;
    }
    h.shuffle(&mut rng);
    let curvature = Matrix::from_vec(m, n, h).expect("length m*n");
    let target = Matrix::random_normal(m, n, &mut rng);
    Ok(StochasticQuadratic {
        curvature,
        target,
        smoothness,
        pl_mu: if count == 1 { smoothness } else { pl_mu },
        sigma,
        init_scale: 1.0,
    })
}

impl StochasticQuadratic {
    pub fn minimizer(&self) -> &Matrix {
        &self.target
    }

    pub fn curvature(&self) -> &Matrix {
        &self.curvature
    }

    pub fn with_init_scale(mut self, scale: f64) -> Self {
        self.init_scale = scale;
        self
    }
}

impl Problem for StochasticQuadratic {
    fn name(&self) -> &'static str {
        "quadratic"
    }

    fn shape(&self) -> (usize, usize) {
        self.target.shape()
    }

    fn constants(&self) -> ProblemConstants {
        ProblemConstants {
            smoothness: self.smoothness,
            noise_sigma: self.sigma,
            pl_mu: Some(self.pl_mu),
            f_star: Some(0.0),
        }
    }

    fn value(&self, x: &Matrix) -> f64 {
        0.5 * x
            .as_slice()
            .iter()
            .zip(self.target.as_slice())
            .zip(self.curvature.as_slice())
            .map(|((&xi, &ti), &h)| h * (xi - ti) * (xi - ti))
            .sum::<f64>()
    }

    fn gradient(&self, x: &Matrix) -> Matrix {
        let (m, n) = self.shape();
        let data = x
            .as_slice()
            .iter()
            .zip(self.target.as_slice())
            .zip(self.curvature.as_slice())
            .map(|((&xi, &ti), &h)| h * (xi - ti))
            .collect();
        Matrix::from_vec(m, n, data).expect("shape preserved")
    }

    fn stochastic_gradient(&self, x: &Matrix, sample: Sample) -> Matrix {
        let mut g = self.gradient(x);
        if self.sigma > 0.0 {
            let (m, n) = self.shape();
            let noise = isotropic_noise(m, n, self.sigma, &mut sample.rng());
            g.axpy(1.0, &noise).expect("shape preserved");
        }
        g
    }

    fn initial_point(&self, rng: &mut dyn RngCore) -> Matrix {
        let (m, n) = self.shape();
        let mut x = Matrix::random_normal(m, n, rng);
        x.scale_mut(self.init_scale);
        x.axpy(1.0, &self.target).expect("shape preserved");
        x
    }

    fn exact_noise_variance(&self) -> Option<f64> {
        Some(self.sigma * self.sigma)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::{probe_pl_inequality, probe_smoothness, probe_variance};

    #[test]
    fn minimum_is_zero() {
        let p = make_stochastic_quadratic(3, 4, 5, 10.0, 0.1, 1.0).unwrap();
        assert_eq!(p.value(p.minimizer()), 0.0);
        assert!(p.gradient(p.minimizer()).is_zero());
    }

    #[test]
    fn curvature_spans_mu_to_l() {
        let p = make_stochastic_quadratic(3, 4, 5, 10.0, 0.1, 1.0).unwrap();
        let h = p.curvature().as_slice();
        let min = h.iter().cloned().fold(f64::INFINITY, f64::min);
        let max = h.iter().cloned().fold(0.0, f64::max);
        assert_eq!(min, 0.1);
        assert_eq!(max, 10.0);
    }

    #[test]
    fn rejects_mu_above_l() {
        assert!(matches!(
            make_stochastic_quadratic(0, 2, 2, 1.0, 2.0, 0.0),
            Err(ProblemError::InvalidConstants(_))
        ));
    }

    #[test]
    fn variance_matches_sigma_squared() {
        let p = make_stochastic_quadratic(5, 6, 4, 4.0, 0.5, 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = p.initial_point(&mut rng);
        let var = probe_variance(&p, &x, 100_000, &mut rng);
        assert!((var - 1.0).abs() < 0.05, "variance {var}");
    }

    #[test]
    fn assumptions_hold_under_probing() {
        let p = make_stochastic_quadratic(5, 3, 3, 4.0, 0.5, 0.7).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let smooth = probe_smoothness(&p, 2000, 1.0, &mut rng);
        assert!(smooth.max_ratio <= 4.0 * (1.0 + 1e-12));
        let pl = probe_pl_inequality(&p, 2000, &mut rng).unwrap();
        assert!(pl.holds(), "{pl:?}");
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let p = make_stochastic_quadratic(8, 3, 2, 3.0, 0.2, 0.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = p.initial_point(&mut rng);
        let g = p.gradient(&x);
        let h = 1e-5;
        for k in 0..6 {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp.as_mut_slice()[k] += h;
            xm.as_mut_slice()[k] -= h;
            let fd = (p.value(&xp) - p.value(&xm)) / (2.0 * h);
            assert!((fd - g.as_slice()[k]).abs() < 1e-6);
        }
    }
}
