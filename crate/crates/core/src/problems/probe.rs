//! Monte-Carlo probes of the standing assumptions: unbiasedness, bounded
//! variance, smoothness, and the PL inequality.

use rand::{Rng, RngCore};

use super::{Problem, Sample};
use crate::linalg::Matrix;

#[derive(Debug, Clone, PartialEq)]
pub struct ProbeReport {
    /// Number of probe evaluations that went into the statistic.
    pub probes: usize,
    /// The probed statistic (deviation, variance, ratio, or worst margin).
    pub value: f64,
    /// Threshold the statistic is compared against.
    pub bound: f64,
    pub violations: usize,
}

impl ProbeReport {
    pub fn holds(&self) -> bool {
        self.violations == 0
    }
}

/// Empirical `E‖∇f(X;ξ) − ∇f(X)‖_F²` at `x`.
pub fn probe_variance<P: Problem + ?Sized>(
    problem: &P,
    x: &Matrix,
    samples: usize,
    rng: &mut dyn RngCore,
) -> f64 {
    let g = problem.gradient(x);
    let total: f64 = (0..samples)
        .map(|_| {
            let gs = problem.stochastic_gradient(x, Sample::draw(rng));
            gs.sub(&g).expect("shape").frobenius_norm_sq()
        })
        .sum();
    total / samples as f64
}

/// `‖mean_ξ ∇f(X;ξ) − ∇f(X)‖_F` against the `3σ/√N` sampling band.
pub fn probe_unbiasedness<P: Problem + ?Sized>(
    problem: &P,
    x: &Matrix,
    samples: usize,
    rng: &mut dyn RngCore,
) -> ProbeReport {
    let (m, n) = problem.shape();
    let mut mean = Matrix::zeros(m, n);
    for _ in 0..samples {
        let gs = problem.stochastic_gradient(x, Sample::draw(rng));
        mean.axpy(1.0 / samples as f64, &gs).expect("shape");
    }
    let deviation = mean.sub(&problem.gradient(x)).expect("shape").frobenius_norm();
    let bound = 3.0 * problem.constants().noise_sigma / (samples as f64).sqrt();
    ProbeReport {
        probes: samples,
        value: deviation,
        bound,
        violations: usize::from(deviation > bound),
    }
}

/// Largest observed `‖∇f(Y;ξ) − ∇f(X;ξ)‖_F / ‖Y − X‖_F` over random pairs
/// with `‖Y − X‖_F = radius`, compared against the stored `L`.
pub fn probe_smoothness<P: Problem + ?Sized>(
    problem: &P,
    pairs: usize,
    radius: f64,
    rng: &mut dyn RngCore,
) -> SmoothnessProbe {
    let (m, n) = problem.shape();
    let mut max_ratio: f64 = 0.0;
    for _ in 0..pairs {
        let x = problem.initial_point(rng);
        let mut dir = Matrix::random_normal(m, n, rng);
        let scale = rng.random_range(0.05..1.0) * radius / dir.frobenius_norm();
        dir.scale_mut(scale);
        let y = x.add(&dir).expect("shape");
        let sample = Sample::draw(rng);
        let gx = problem.stochastic_gradient(&x, sample);
        let gy = problem.stochastic_gradient(&y, sample);
        let ratio = gy.sub(&gx).expect("shape").frobenius_norm() / dir.frobenius_norm();
        max_ratio = max_ratio.max(ratio);
    }
    SmoothnessProbe { pairs, max_ratio }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmoothnessProbe {
    pub pairs: usize,
    pub max_ratio: f64,
}

/// Checks `‖∇f(X)‖² ≥ 2μ(f(X) − f*)` at random points. `None` when the
/// problem does not declare both `μ` and `f*`.
pub fn probe_pl_inequality<P: Problem + ?Sized>(
    problem: &P,
    points: usize,
    rng: &mut dyn RngCore,
) -> Option<ProbeReport> {
    let c = problem.constants();
    let (mu, f_star) = (c.pl_mu?, c.f_star?);
    let mut worst = f64::INFINITY;
    let mut violations = 0;
    for _ in 0..points {
        let x = problem.initial_point(rng);
        let lhs = problem.gradient(&x).frobenius_norm_sq();
        let gap = problem.value(&x) - f_star;
        let margin = lhs - 2.0 * mu * gap;
        let tol = 1e-12 * (1.0 + lhs.abs() + gap.abs());
        if margin < -tol {
            violations += 1;
        }
        worst = worst.min(margin);
    }
    Some(ProbeReport {
        probes: points,
        value: worst,
        bound: 0.0,
        violations,
    })
}

/// Empirical `(L, σ)` for problems without closed-form constants: the
/// largest observed Lipschitz ratio and the largest per-point variance,
/// both inflated by 10%.
pub fn estimate_constants<P: Problem + ?Sized>(
    problem: &P,
    lipschitz_pairs: usize,
    variance_points: usize,
    variance_samples: usize,
    radius: f64,
    rng: &mut dyn RngCore,
) -> (f64, f64) {
    let smooth = probe_smoothness(problem, lipschitz_pairs, radius, rng);
    let mut max_var: f64 = 0.0;
    for _ in 0..variance_points {
        let x = problem.initial_point(rng);
        max_var = max_var.max(probe_variance(problem, &x, variance_samples, rng));
    }
    (1.1 * smooth.max_ratio, (1.1 * max_var).sqrt())
}
