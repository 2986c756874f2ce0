//! Seed-averaged checks of the momentum-error recursions.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{collect_trace, mean_se, run_rngs, CheckReport, VerificationError};
use crate::optimizer::{Muon, MuonConfig, MuonOption, Schedule};
use crate::problems::Problem;

/// Expectations below are seed averages; fewer seeds make the 3-SE slack
/// meaningless.
pub const MIN_RECURSION_SEEDS: usize = 100;

fn require_seeds(num_seeds: usize) -> Result<(), VerificationError> {
    if num_seeds < MIN_RECURSION_SEEDS {
        return Err(VerificationError::InsufficientSeeds {
            got: num_seeds,
            need: MIN_RECURSION_SEEDS,
        });
    }
    Ok(())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RecursionRow {
    pub t: u64,
    /// Estimate of `E‖S_{t+1}‖²`.
    pub estimate: f64,
    /// Bound evaluated with the estimated `E‖S_t‖²` (and `E‖ΔX‖²`).
    pub bound: f64,
    /// Standard error of the per-seed bound slack.
    pub se: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RecursionEstimate {
    pub report: CheckReport,
    pub rows: Vec<RecursionRow>,
    /// Seed mean and standard error of `‖S_1‖²`.
    pub initial: (f64, f64),
    /// Seed means of `‖S_t‖²` for `t = 1..T`.
    pub mean_error_sq: Vec<f64>,
}

impl RecursionEstimate {
    /// `E‖S_1‖² ≤ σ² + 3 SE`.
    pub fn initial_bound_holds(&self, sigma: f64) -> bool {
        self.initial.0 <= sigma * sigma + 3.0 * self.initial.1
    }
}

/// Monte-Carlo audit of `E‖S_{t+1}‖² ≤ bound + 3 SE`, `S_t = M_t − ∇f(X_t)`.
///
/// EMA momentum (`Mvr1Gamma0`) is held to
/// `β E‖S_t‖² + β²/(1−β)·L²η_t²r + (1−β)²σ²`; MVR2 with `γ = 1` to
/// `β E‖S_t‖² + 2β²L² E‖X_{t+1} − X_t‖² + 2(1−β)²σ²`, both with `β = β_{t+1}`.
/// Seeds `0..num_seeds` run in parallel.
pub fn estimate_momentum_error_recursion<P: Problem + ?Sized>(
    problem: &P,
    option: MuonOption,
    schedule: Schedule,
    steps: u64,
    num_seeds: usize,
) -> Result<RecursionEstimate, VerificationError> {
    require_seeds(num_seeds)?;
    if !matches!(option, MuonOption::Mvr1Gamma0 | MuonOption::Mvr2) {
        return Err(VerificationError::Unsupported(format!(
            "no momentum-error recursion for {}",
            option.label()
        )));
    }
    let config = MuonConfig::new(option, schedule);
    let traces = (0..num_seeds as u64)
        .into_par_iter()
        .map(|seed| collect_trace(problem, config, seed, steps))
        .collect::<Result<Vec<_>, _>>()?;
    let c = problem.constants();
    let (l, sigma2) = (c.smoothness, c.noise_sigma * c.noise_sigma);
    let r = traces[0].rank_bound as f64;
    let s2 = |i: usize, k: usize| traces[i].records[k].momentum_error_fnorm.powi(2);
    let dx2 = |i: usize, k: usize| traces[i].records[k].update_fnorm.powi(2);
    let name = format!("momentum_error_recursion_{}", option.label());
    let mut report = CheckReport::new(name);
    let mut rows = Vec::new();
    let mut mean_error_sq = Vec::new();
    for k in 0..steps as usize {
        let col: Vec<f64> = (0..num_seeds).map(|i| s2(i, k)).collect();
        mean_error_sq.push(mean_se(&col).0);
    }
    for k in 0..(steps as usize).saturating_sub(1) {
        let next = &traces[0].records[k + 1];
        let beta = next.beta;
        let eta = traces[0].records[k].eta;
        // per-seed slack D_i = ‖S_{t+1}‖² − (seed-dependent part of the bound)
        let (constant, slack): (f64, Vec<f64>) = match option {
            MuonOption::Mvr2 => (
                2.0 * (1.0 - beta).powi(2) * sigma2,
                (0..num_seeds)
                    .map(|i| s2(i, k + 1) - beta * s2(i, k) - 2.0 * beta * beta * l * l * dx2(i, k))
                    .collect(),
            ),
            _ => (
                beta * beta / (1.0 - beta) * l * l * eta * eta * r + (1.0 - beta).powi(2) * sigma2,
                (0..num_seeds).map(|i| s2(i, k + 1) - beta * s2(i, k)).collect(),
            ),
        };
        let (mean_slack, se) = mean_se(&slack);
        let estimate = mean_error_sq[k + 1];
        let bound = estimate - mean_slack + constant;
        report.observe(k + 1, mean_slack, constant + 3.0 * se, 0.0);
        rows.push(RecursionRow {
            t: k as u64 + 1,
            estimate,
            bound,
            se,
        });
    }
    let first: Vec<f64> = (0..num_seeds).map(|i| s2(i, 0)).collect();
    Ok(RecursionEstimate {
        report,
        rows,
        initial: mean_se(&first),
        mean_error_sq,
    })
}

/// One transition `t → t+1` of the MVR2 error decomposition
/// `S_{t+1} = a + β(γ−1)Δ_t`, `a = (1−β)R_{t+1} + βS_t + β(Δ_t − E_cΔ_t)`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct B2Row {
    pub t: u64,
    pub beta: f64,
    pub gamma: f64,
    /// Seed mean of `‖S_{t+1}‖²` and its standard error.
    pub direct: f64,
    pub direct_se: f64,
    /// `E‖a‖²`.
    pub term_a1: f64,
    /// `β²(γ−1)² E‖Δ‖²`.
    pub term_a2: f64,
    /// `2β(γ−1) E⟨Δ, a⟩`.
    pub term_a3: f64,
    /// The coefficient `A_{t+1}`.
    pub a_coeff: f64,
    /// `P_{t+1} = E‖Δ‖²((β(1−γ) − A)² − A²)`, which equals A.2 + A.3.
    pub p: f64,
}

impl B2Row {
    pub fn reconstructed(&self) -> f64 {
        self.term_a1 + self.p
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct B2Decomposition {
    pub rows: Vec<B2Row>,
    /// Largest `|A.1 + P − direct|` over t, relative to
    /// `direct + E‖a‖² + β²E‖Δ‖²`.
    pub max_identity_error: f64,
    /// `|A.1 + P − direct| ≤ 3 SE` at every t.
    pub report: CheckReport,
}

/// Rebuilds `E‖S_{t+1}‖²` for MVR2 from Terms A.1, A.2, A.3 and from
/// `A.1 + P_{t+1}`, and compares with the direct estimate.
///
/// Expectations are in-sample means over seeds, and `E_cΔ_t` is evaluated
/// exactly as `∇f(X_{t+1}) − ∇f(X_t)`; with those choices the identity is
/// exact algebra, so it must hold to rounding.
pub fn check_lemma_b2_gamma_term<P: Problem + ?Sized>(
    problem: &P,
    schedule: Schedule,
    steps: u64,
    num_seeds: usize,
) -> Result<B2Decomposition, VerificationError> {
    require_seeds(num_seeds)?;
    let config = MuonConfig::new(MuonOption::Mvr2, schedule);
    // per seed, per transition: [‖S'‖², ‖a‖², ‖Δ‖², ⟨Δ,R⟩, ⟨Δ,S⟩, ⟨Δ,E_cΔ⟩, β, γ]
    let per_seed = (0..num_seeds as u64)
        .into_par_iter()
        .map(|seed| -> Result<Vec<[f64; 8]>, VerificationError> {
            let (mut init, mut sampling) = run_rngs(seed);
            let mut opt = Muon::new(config, problem.initial_point(&mut init))?;
            let mut prev = None;
            let mut out = Vec::with_capacity(steps as usize);
            for _ in 0..steps {
                let gf = problem.gradient(opt.x());
                let inner = opt.step_internals(problem, &mut sampling)?;
                let s = inner.momentum.sub(&gf).expect("shape");
                if let Some((s_prev, gf_prev)) = prev.take() {
                    let (beta, gamma) = (inner.hyper.beta, inner.hyper.gamma);
                    let delta = inner.grad.sub(&inner.grad_reference).expect("shape");
                    let r = inner.grad.sub(&gf).expect("shape");
                    let ec = gf.sub(&gf_prev).expect("shape");
                    let mut a = r.scale(1.0 - beta);
                    a.axpy(beta, &s_prev).expect("shape");
                    a.axpy(beta, &delta.sub(&ec).expect("shape")).expect("shape");
                    let dot = |x: &crate::linalg::Matrix| delta.dot(x).expect("shape");
                    out.push([
                        s.frobenius_norm_sq(),
                        a.frobenius_norm_sq(),
                        delta.frobenius_norm_sq(),
                        dot(&r),
                        dot(&s_prev),
                        dot(&ec),
                        beta,
                        gamma,
                    ]);
                }
                prev = Some((s, gf));
            }
            Ok(out)
        })
        .collect::<Result<Vec<_>, _>>()?;
    let mut rows = Vec::new();
    let mut report = CheckReport::new("lemma_b2_decomposition");
    let mut max_identity_error: f64 = 0.0;
    for k in 0..per_seed[0].len() {
        let col = |j: usize| -> Vec<f64> { per_seed.iter().map(|v| v[k][j]).collect() };
        let (direct, direct_se) = mean_se(&col(0));
        let mean = |j: usize| mean_se(&col(j)).0;
        let (a1, d2, dr, ds, de) = (mean(1), mean(2), mean(3), mean(4), mean(5));
        let (beta, gamma) = (per_seed[0][k][6], per_seed[0][k][7]);
        let b = (1.0 - beta) * dr + beta * ds;
        let inner_da = b + beta * (d2 - de);
        let a_coeff = if d2 > 0.0 { inner_da / d2 } else { 0.0 };
        let term_a2 = beta * beta * (gamma - 1.0).powi(2) * d2;
        let term_a3 = 2.0 * beta * (gamma - 1.0) * inner_da;
        let p = d2 * ((beta * (1.0 - gamma) - a_coeff).powi(2) - a_coeff * a_coeff);
        let row = B2Row {
            t: k as u64 + 1,
            beta,
            gamma,
            direct,
            direct_se,
            term_a1: a1,
            term_a2,
            term_a3,
            a_coeff,
            p,
        };
        let gap = (row.reconstructed() - direct).abs();
        // rounding scales with the terms, not with their (possibly tiny) sum
        let magnitude = (direct + a1 + beta * beta * d2).max(1e-300);
        max_identity_error = max_identity_error.max(gap / magnitude);
        report.observe(k + 1, gap, 3.0 * direct_se, 1e-12 * magnitude);
        rows.push(row);
    }
    Ok(B2Decomposition {
        rows,
        max_identity_error,
        report,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::make_stochastic_quadratic;

    #[test]
    fn too_few_seeds_are_refused() {
        let p = make_stochastic_quadratic(1, 3, 3, 2.0, 0.5, 1.0).unwrap();
        assert!(matches!(
            estimate_momentum_error_recursion(&p, MuonOption::Mvr2, Schedule::Thm2Mvr2, 10, 99),
            Err(VerificationError::InsufficientSeeds { got: 99, need: 100 })
        ));
        assert!(check_lemma_b2_gamma_term(&p, Schedule::Thm2Mvr2, 10, 5).is_err());
    }

    #[test]
    fn gamma_one_has_no_correction_terms() {
        let p = make_stochastic_quadratic(1, 3, 3, 2.0, 0.5, 1.0).unwrap();
        let d = check_lemma_b2_gamma_term(&p, Schedule::Thm2Mvr2, 30, 100).unwrap();
        for row in &d.rows {
            assert_eq!(row.term_a2, 0.0);
            assert_eq!(row.term_a3, 0.0);
            assert!(row.p.abs() <= 1e-12 * row.direct.max(1.0));
        }
        assert!(d.max_identity_error < 1e-10, "{}", d.max_identity_error);
        assert!(d.report.passed());
    }

    #[test]
    fn decomposition_is_exact_for_any_gamma() {
        let p = make_stochastic_quadratic(2, 4, 3, 3.0, 0.3, 1.0).unwrap();
        for (beta, gamma) in [(0.5, 0.0), (0.9, 0.3), (0.99, 0.7), (0.3, 1.0)] {
            let s = Schedule::Constant { eta: 0.05, beta, gamma };
            let d = check_lemma_b2_gamma_term(&p, s, 40, 100).unwrap();
            assert!(d.max_identity_error < 1e-10, "β={beta} γ={gamma}: {}", d.max_identity_error);
            let worst = d.rows.iter().map(|r| (r.term_a2 + r.term_a3 - r.p).abs()).fold(0.0, f64::max);
            assert!(worst < 1e-10);
        }
    }

    #[test]
    fn deterministic_problem_still_decomposes() {
        let p = make_stochastic_quadratic(2, 4, 3, 3.0, 0.3, 0.0).unwrap();
        let d = check_lemma_b2_gamma_term(&p, Schedule::Thm2Mvr2, 30, 100).unwrap();
        assert!(d.max_identity_error < 1e-10);
        let e = estimate_momentum_error_recursion(&p, MuonOption::Mvr2, Schedule::Thm2Mvr2, 30, 100).unwrap();
        assert!(e.report.passed(), "{}", e.report.to_line());
    }
}
