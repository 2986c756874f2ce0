use rand::{Rng, RngCore};

use super::{isotropic_noise, Problem, ProblemConstants, ProblemError, Sample};
use crate::linalg::Matrix;

/// `sup |d²/dx² (x² + 3 sin 2x)| = 2 + 12`.
pub const NONCONVEX_SMOOTHNESS: f64 = 14.0;

fn scalar_f(x: f64) -> f64 {
    x * x + 3.0 * (2.0 * x).sin()
}

fn scalar_df(x: f64) -> f64 {
    2.0 * x + 6.0 * (2.0 * x).cos()
}

fn scalar_d2f(x: f64) -> f64 {
    2.0 - 12.0 * (2.0 * x).sin()
}

/// Global minimizer and minimum value of `x² + 3 sin 2x`: a grid scan at
/// spacing 1e-3 over `[-10, 10]`, then Newton on `f'` from the best node.
pub fn scalar_minimizer() -> (f64, f64) {
    let step = 1e-3;
    let nodes = (20.0 / step) as usize;
    let mut best = (-10.0, scalar_f(-10.0));
    for k in 1..=nodes {
        let x = -10.0 + k as f64 * step;
        let v = scalar_f(x);
        if v < best.1 {
            best = (x, v);
        }
    }
    let mut x = best.0;
    for _ in 0..50 {
        let dx = scalar_df(x) / scalar_d2f(x);
        x -= dx;
        if dx.abs() < 1e-15 {
            break;
        }
    }
    (x, scalar_f(x))
}

/// Result of scanning `f'(x)² / (2(f(x) − f*))` over a grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlScan {
    /// Smallest ratio seen: the empirical PL constant on the scanned range.
    pub mu: f64,
    /// Where the smallest ratio occurred.
    pub argmin: f64,
}

/// Brute-force PL constant of the scalar profile on `[lo, hi]`. Grid points
/// where the gap `f − f*` is below 1e-12 are skipped (the ratio is 0/0
/// there and tends to `f''(x̂) > 0`).
pub fn pl_constant_scan(lo: f64, hi: f64, step: f64) -> PlScan {
    let (_, f_min) = scalar_minimizer();
    let nodes = ((hi - lo) / step).round() as usize;
    let mut scan = PlScan {
        mu: f64::INFINITY,
        argmin: lo,
    };
    for k in 0..=nodes {
        let x = lo + k as f64 * step;
        let gap = scalar_f(x) - f_min;
        if gap < 1e-12 {
            continue;
        }
        let g = scalar_df(x);
        let ratio = g * g / (2.0 * gap);
        if ratio < scan.mu {
            scan = PlScan { mu: ratio, argmin: x };
        }
    }
    scan
}

/// Separable `f(X) = Σ_ij (x_ij² + 3 sin 2x_ij) − m·n·c₀`, shifted so that
/// `f* = 0`, with additive isotropic gradient noise.
#[derive(Debug, Clone)]
pub struct PlNonconvex {
    rows: usize,
    cols: usize,
    sigma: f64,
    minimizer: f64,
    offset: f64,
    pl: PlScan,
    /// `X_1` entries are drawn uniformly from `x̂ ± init_halfwidth`.
    pub init_halfwidth: f64,
}

pub fn make_pl_nonconvex(
    _seed: u64,
    m: usize,
    n: usize,
    sigma: f64,
) -> Result<PlNonconvex, ProblemError> {
    if m == 0 || n == 0 {
        return Err(ProblemError::InvalidConstants("shape must be positive".into()));
    }
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(ProblemError::InvalidConstants(format!("sigma = {sigma} must be >= 0")));
    }
    let (minimizer, offset) = scalar_minimizer();
    Ok(PlNonconvex {
        rows: m,
        cols: n,
        sigma,
        minimizer,
        offset,
        pl: pl_constant_scan(-10.0, 10.0, 1e-4),
        init_halfwidth: 1.0,
    })
}

impl PlNonconvex {
    /// Per-entry global minimizer x̂.
    pub fn scalar_argmin(&self) -> f64 {
        self.minimizer
    }

    pub fn minimizer(&self) -> Matrix {
        let mut x = Matrix::zeros(self.rows, self.cols);
        x.fill(self.minimizer);
        x
    }

    pub fn pl_scan(&self) -> PlScan {
        self.pl
    }

    pub fn with_init_halfwidth(mut self, w: f64) -> Self {
        self.init_halfwidth = w;
        self
    }
}

impl Problem for PlNonconvex {
    fn name(&self) -> &'static str {
        "pl_nonconvex"
    }

    fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    fn constants(&self) -> ProblemConstants {
        ProblemConstants {
            smoothness: NONCONVEX_SMOOTHNESS,
            noise_sigma: self.sigma,
            pl_mu: Some(self.pl.mu),
            f_star: Some(0.0),
        }
    }

    fn value(&self, x: &Matrix) -> f64 {
        x.as_slice().iter().map(|&v| scalar_f(v) - self.offset).sum()
    }

    fn gradient(&self, x: &Matrix) -> Matrix {
        let data = x.as_slice().iter().map(|&v| scalar_df(v)).collect();
        Matrix::from_vec(self.rows, self.cols, data).expect("shape preserved")
    }

    fn stochastic_gradient(&self, x: &Matrix, sample: Sample) -> Matrix {
        let mut g = self.gradient(x);
        if self.sigma > 0.0 {
            let noise = isotropic_noise(self.rows, self.cols, self.sigma, &mut sample.rng());
            g.axpy(1.0, &noise).expect("shape preserved");
        }
        g
    }

    fn initial_point(&self, rng: &mut dyn RngCore) -> Matrix {
        let w = self.init_halfwidth;
        Matrix::from_fn(self.rows, self.cols, |_, _| {
            self.minimizer + rng.random_range(-w..=w)
        })
    }

    fn exact_noise_variance(&self) -> Option<f64> {
        Some(self.sigma * self.sigma)
    }
}
