//! Executable versions of the convergence analysis: path-wise inequality
//! audits on traces, scalar sequence lemmas, Monte-Carlo recursion bounds,
//! and log-log rate fits.

mod lemmas;
mod rates;
mod recursion;
mod suites;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::optimizer::{Muon, MuonConfig, MuonOption, OptimizerError, Schedule, StepRecord};
use crate::problems::{Problem, ProblemConstants};

pub use lemmas::{
    check_descent_lemma, check_polar_duality, check_seq_lemma_a3, check_seq_lemma_b1, Alpha,
};
pub use rates::{
    ergodic_series, fit_power_law, fit_rate, fit_rate_per_seed, gap_flatness, gap_series,
    Flatness, RateFit, RateMetric,
};
pub use recursion::{
    check_lemma_b2_gamma_term, estimate_momentum_error_recursion, B2Decomposition,
    RecursionEstimate, MIN_RECURSION_SEEDS,
};
pub use suites::{random_recursion, random_seq_lemma_suite, SeqLemma};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum VerificationError {
    #[error("trace lacks diagnostics: {0}")]
    MissingDiagnostics(String),
    #[error("premise of the lemma fails at index {index}: {detail}")]
    PremiseViolated { index: usize, detail: String },
    #[error("need at least {need} seeds, got {got}")]
    InsufficientSeeds { got: usize, need: usize },
    #[error("degenerate fit window: {0}")]
    DegenerateWindow(String),
    #[error("problem does not declare {0}")]
    MissingConstant(&'static str),
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error(transparent)]
    Optimizer(#[from] OptimizerError),
}

/// A full run: one record per step `t = 1..T` plus `f(X_{T+1})`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trace {
    pub records: Vec<StepRecord>,
    pub final_f: f64,
    pub constants: ProblemConstants,
    /// `min(m, n)`, the bound on `‖O_t‖_F²`.
    pub rank_bound: usize,
    pub option: MuonOption,
    pub schedule: Schedule,
    pub seed: u64,
}

impl Trace {
    /// `f(X_{t+1})` for the record at position `i`.
    pub fn next_f(&self, i: usize) -> f64 {
        self.records.get(i + 1).map_or(self.final_f, |r| r.f_value)
    }

    /// Errors unless the records are exactly `t = 1..T`.
    pub fn require_consecutive(&self) -> Result<(), VerificationError> {
        if self.records.is_empty() {
            return Err(VerificationError::MissingDiagnostics("empty trace".into()));
        }
        for (i, r) in self.records.iter().enumerate() {
            if r.t != i as u64 + 1 {
                return Err(VerificationError::MissingDiagnostics(format!(
                    "record {i} has t = {}, expected {}",
                    r.t,
                    i + 1
                )));
            }
            if !r.f_value.is_finite() || !r.grad_true_fnorm.is_finite() {
                return Err(VerificationError::MissingDiagnostics(format!(
                    "non-finite diagnostics at t = {}",
                    r.t
                )));
            }
        }
        Ok(())
    }
}

/// RNG streams for a run: `(initialization, sampling)`. Both derive from the
/// seed alone, so a run is a pure function of `(config, seed)`.
pub fn run_rngs(seed: u64) -> (ChaCha8Rng, ChaCha8Rng) {
    let init = ChaCha8Rng::seed_from_u64(seed);
    let mut sampling = ChaCha8Rng::seed_from_u64(seed);
    sampling.set_stream(1);
    (init, sampling)
}

/// Runs `steps` iterations from the problem's seeded initial point and keeps
/// every record.
pub fn collect_trace<P: Problem + ?Sized>(
    problem: &P,
    config: MuonConfig,
    seed: u64,
    steps: u64,
) -> Result<Trace, VerificationError> {
    let (mut init, mut sampling) = run_rngs(seed);
    let x0 = problem.initial_point(&mut init);
    let mut opt = Muon::new(config, x0)?;
    let mut records = Vec::with_capacity(steps as usize);
    for _ in 0..steps {
        records.push(opt.step(problem, &mut sampling)?);
    }
    let (m, n) = problem.shape();
    Ok(Trace {
        records,
        final_f: problem.value(opt.x()),
        constants: problem.constants(),
        rank_bound: m.min(n),
        option: config.option,
        schedule: config.schedule,
        seed,
    })
}

/// Outcome of one check: `worst_margin` is the smallest `rhs − lhs` seen,
/// so a negative value means the bound was exceeded somewhere.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckReport {
    pub name: String,
    pub checked: usize,
    pub violations: usize,
    pub worst_margin: f64,
    /// Index (usually `t`) of the worst margin.
    pub worst_at: usize,
}

impl CheckReport {
    pub fn new(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            checked: 0,
            violations: 0,
            worst_margin: f64::INFINITY,
            worst_at: 0,
        }
    }

    /// Records one comparison `lhs ≤ rhs + tol`.
    pub fn observe(&mut self, at: usize, lhs: f64, rhs: f64, tol: f64) {
        self.checked += 1;
        let margin = rhs - lhs;
        if margin.is_nan() || margin < -tol {
            self.violations += 1;
        }
        if margin < self.worst_margin || margin.is_nan() {
            self.worst_margin = margin;
            self.worst_at = at;
        }
    }

    pub fn passed(&self) -> bool {
        self.violations == 0
    }

    pub fn status(&self) -> &'static str {
        if self.passed() {
            "PASS"
        } else {
            "FAIL"
        }
    }

    /// `name status worst_margin=… checked=… violations=…`
    pub fn to_line(&self) -> String {
        format!(
            "{} {} worst_margin={:.6e} worst_at={} checked={} violations={}",
            self.name,
            self.status(),
            self.worst_margin,
            self.worst_at,
            self.checked,
            self.violations
        )
    }

    pub const CSV_HEADER: &'static str = "name,status,worst_margin,worst_at,checked,violations";

    pub fn to_csv_row(&self) -> String {
        format!(
            "{},{},{:e},{},{},{}",
            self.name,
            self.status(),
            self.worst_margin,
            self.worst_at,
            self.checked,
            self.violations
        )
    }
}

/// Line-oriented text and CSV renderings of a batch of reports.
pub fn render_reports(reports: &[CheckReport]) -> (String, String) {
    let text = reports.iter().map(|r| r.to_line() + "\n").collect();
    let mut csv = String::from(CheckReport::CSV_HEADER);
    csv.push('\n');
    for r in reports {
        csv.push_str(&r.to_csv_row());
        csv.push('\n');
    }
    (text, csv)
}

/// Mean and standard error of the mean. Pairwise summation keeps the result
/// independent of how seeds were split across workers.
pub(crate) fn mean_se(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = pairwise_sum(values) / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let dev: Vec<f64> = values.iter().map(|v| (v - mean) * (v - mean)).collect();
    let var = pairwise_sum(&dev) / (n - 1.0);
    (mean, (var / n).sqrt())
}

pub(crate) fn pairwise_sum(values: &[f64]) -> f64 {
    if values.len() <= 8 {
        return values.iter().sum();
    }
    let (a, b) = values.split_at(values.len() / 2);
    pairwise_sum(a) + pairwise_sum(b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::make_stochastic_quadratic;

    #[test]
    fn trace_is_deterministic_and_consecutive() {
        let p = make_stochastic_quadratic(1, 4, 3, 2.0, 0.2, 1.0).unwrap();
        let cfg = MuonConfig::new(MuonOption::Mvr2, Schedule::Thm2Mvr2);
        let a = collect_trace(&p, cfg, 9, 50).unwrap();
        let b = collect_trace(&p, cfg, 9, 50).unwrap();
        assert_eq!(a, b);
        a.require_consecutive().unwrap();
        assert_eq!(a.rank_bound, 3);
        let c = collect_trace(&p, cfg, 10, 50).unwrap();
        assert_ne!(a.records, c.records);
    }

    #[test]
    fn report_rendering() {
        let mut r = CheckReport::new("demo");
        r.observe(1, 1.0, 2.0, 0.0);
        r.observe(2, 3.0, 2.0, 0.0);
        assert!(!r.passed());
        assert_eq!(r.worst_at, 2);
        let (text, csv) = render_reports(&[r]);
        assert!(text.starts_with("demo FAIL worst_margin=-1.0"));
        assert_eq!(csv.lines().count(), 2);
    }

    #[test]
    fn mean_se_of_constant_is_exact() {
        let (m, se) = mean_se(&[2.5; 37]);
        assert_eq!(m, 2.5);
        assert_eq!(se, 0.0);
    }
}
