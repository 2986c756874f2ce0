//! Experiment plumbing: TOML configs, seed sweeps on a worker pool,
//! versioned trace files, manifests, rate tables and plot data.

mod config;
mod plot;
mod runner;
mod trace_io;

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::optimizer::{MuonOption, Schedule};
use crate::problems::ProblemError;
use crate::verification::{
    ergodic_series, fit_rate, fit_rate_per_seed, RateFit, RateMetric, Trace, VerificationError,
};

pub use config::{
    parse_config, CheckName, CoefficientSet, ConfigError, ExperimentConfig, FieldIssue,
    FactorizationParams, OptimizerSpec, OrthogonalizerKind, ParseError, PlParams, ProblemKind,
    ProblemSpec, QuadraticParams, RunSpec,
    ValidationError, ETA_GRID, OUTPUT_DIR_ENV,
};
pub use plot::{emit_plot_data, plot_rows, read_plot_data, PlotKind};
pub use runner::{
    build_problem, evaluate_check, load_traces, run_experiment, run_seed, run_traces,
    sample_times, trace_file_name, CheckStatus, CheckSummary, DynProblem, RunManifest,
    TraceEntry, AGGREGATE_FILE, MANIFEST_FILE, MANIFEST_SCHEMA, SUITE_INSTANCES,
};
pub use trace_io::{
    mean_std, parse_aggregate, parse_trace, render_aggregate, render_trace, AggregateRow,
    AGGREGATE_METRICS, AGGREGATE_SCHEMA, TRACE_COLUMNS, TRACE_SCHEMA,
};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Problem(#[from] ProblemError),
    #[error(transparent)]
    Verification(#[from] VerificationError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed data file at line {line}: {message}")]
    TraceFormat { line: usize, message: String },
    #[error("malformed manifest: {0}")]
    Manifest(String),
    #[error("unsupported: {0}")]
    Unsupported(String),
}

impl HarnessError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        HarnessError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

impl From<ValidationError> for HarnessError {
    fn from(e: ValidationError) -> Self {
        HarnessError::Config(ConfigError::Validation(e))
    }
}

/// Reads and parses a config file.
pub fn load_config(path: &Path) -> Result<ExperimentConfig, HarnessError> {
    let text = trace_io::read_file(path)?;
    Ok(parse_config(&text)?)
}

/// The step-size and momentum schedule each option is analyzed under.
pub fn theory_schedule(option: MuonOption) -> Schedule {
    match option {
        MuonOption::Mvr1 => Schedule::Thm1Case2,
        MuonOption::Mvr2 => Schedule::Thm2Mvr2,
        MuonOption::Mvr1Gamma0 | MuonOption::Practical | MuonOption::Sgd => Schedule::Thm1Case1,
    }
}

/// `config` rewritten for `option`: a constant schedule is kept as is, a
/// theoretical one is replaced by the option's own. Every step is recorded.
pub fn config_for_option(config: &ExperimentConfig, option: MuonOption) -> ExperimentConfig {
    let mut c = config.clone();
    c.optimizer.option = option;
    if !matches!(c.schedule, Schedule::Constant { .. }) {
        c.schedule = theory_schedule(option);
    }
    c.run.diagnostics_every = 1;
    c.run.checks.clear();
    c
}

fn full_traces(config: &ExperimentConfig) -> Result<Vec<Trace>, HarnessError> {
    let problem = build_problem(&config.problem)?;
    Ok(run_traces(problem.as_ref(), config)?
        .into_iter()
        .map(|(t, _)| t)
        .collect())
}

/// Default fit window `[max(10, T/100), T]`.
pub fn default_window(steps: u64) -> (u64, u64) {
    ((steps / 100).max(10), steps)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateRow {
    pub option: MuonOption,
    pub schedule: Schedule,
    pub metric: RateMetric,
    /// Fit of the seed-mean metric.
    pub fit: RateFit,
    /// Median of the per-seed slopes.
    pub median_seed_slope: f64,
}

impl RateRow {
    pub fn to_line(&self) -> String {
        format!(
            "{:<12} {:<11} {:<16} slope={:+.4} median_seed_slope={:+.4} r2={:.4} window=[{}, {}]",
            self.option.label(),
            self.schedule.label(),
            match self.metric {
                RateMetric::ErgodicGradAvg => "ergodic_grad",
                RateMetric::SubOptGap => "gap",
            },
            self.fit.slope,
            self.median_seed_slope,
            self.fit.r_squared,
            self.fit.window.0,
            self.fit.window.1
        )
    }
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

pub fn rate_row(
    traces: &[Trace],
    metric: RateMetric,
    window: (u64, u64),
) -> Result<RateRow, HarnessError> {
    let fit = fit_rate(traces, metric, window)?;
    let per_seed: Vec<f64> = fit_rate_per_seed(traces, metric, window)?
        .iter()
        .map(|f| f.slope)
        .collect();
    Ok(RateRow {
        option: traces[0].option,
        schedule: traces[0].schedule,
        metric,
        fit,
        median_seed_slope: median(&per_seed),
    })
}

/// Ergodic-gradient fits (plus gap fits when `f*` is known) for EMA,
/// MVR1 and MVR2 on the config's problem and seeds.
pub fn rate_table(
    config: &ExperimentConfig,
    window: Option<(u64, u64)>,
) -> Result<Vec<RateRow>, HarnessError> {
    config.validate()?;
    let window = window.unwrap_or_else(|| default_window(config.run.steps));
    let mut rows = Vec::new();
    for option in [MuonOption::Mvr1Gamma0, MuonOption::Mvr1, MuonOption::Mvr2] {
        let traces = full_traces(&config_for_option(config, option))?;
        rows.push(rate_row(&traces, RateMetric::ErgodicGradAvg, window)?);
        if traces[0].constants.f_star.is_some() {
            rows.push(rate_row(&traces, RateMetric::SubOptGap, window)?);
        }
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareRow {
    pub rank: usize,
    pub option: MuonOption,
    pub schedule: Schedule,
    /// Seed mean of `(1/T) Σ_t ‖∇f(X_t)‖_F`.
    pub ergodic_grad: f64,
    pub ergodic_grad_std: f64,
    pub final_f_mean: f64,
}

impl CompareRow {
    pub fn to_line(&self) -> String {
        format!(
            "{}. {:<12} {:<11} ergodic_grad={:.6e} (std {:.2e}) final_f={:.6e}",
            self.rank,
            self.option.label(),
            self.schedule.label(),
            self.ergodic_grad,
            self.ergodic_grad_std,
            self.final_f_mean
        )
    }
}

/// Runs EMA, MVR1, MVR2 and the SGD control and ranks them by final ergodic
/// gradient norm, smallest first.
pub fn compare_options(config: &ExperimentConfig) -> Result<Vec<CompareRow>, HarnessError> {
    config.validate()?;
    let mut rows = Vec::new();
    for option in [
        MuonOption::Mvr1Gamma0,
        MuonOption::Mvr1,
        MuonOption::Mvr2,
        MuonOption::Sgd,
    ] {
        let c = config_for_option(config, option);
        let traces = full_traces(&c)?;
        let finals = traces
            .iter()
            .map(|t| ergodic_series(t).map(|s| *s.last().expect("T >= 1")))
            .collect::<Result<Vec<_>, _>>()?;
        let (ergodic_grad, ergodic_grad_std) = mean_std(&finals);
        let final_fs: Vec<f64> = traces.iter().map(|t| t.final_f).collect();
        rows.push(CompareRow {
            rank: 0,
            option,
            schedule: c.schedule,
            ergodic_grad,
            ergodic_grad_std,
            final_f_mean: mean_std(&final_fs).0,
        });
    }
    rows.sort_by(|a, b| a.ergodic_grad.total_cmp(&b.ergodic_grad));
    for (i, r) in rows.iter_mut().enumerate() {
        r.rank = i + 1;
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quadratic(steps: u64, seeds: &str) -> ExperimentConfig {
        parse_config(&format!(
            r#"
[problem]
kind = "quadratic"
m = 4
n = 4
smoothness = 1.0
pl_mu = 0.1
sigma = 1.0
seeds = {seeds}
[optimizer]
option = "mvr2"
[schedule]
kind = "thm2_mvr2"
[run]
steps = {steps}
"#
        ))
        .unwrap()
    }

    #[test]
    fn compare_ranks_all_four_options() {
        let rows = compare_options(&quadratic(200, "[1, 2]")).unwrap();
        assert_eq!(rows.len(), 4);
        assert_eq!(rows.iter().map(|r| r.rank).collect::<Vec<_>>(), [1, 2, 3, 4]);
        assert!(rows.windows(2).all(|w| w[0].ergodic_grad <= w[1].ergodic_grad));
        let sgd = rows.iter().find(|r| r.option == MuonOption::Sgd).unwrap();
        assert_eq!(sgd.schedule, Schedule::Thm1Case1);
    }

    #[test]
    fn rate_table_has_gap_rows_when_f_star_is_known() {
        let rows = rate_table(&quadratic(2000, "[1, 2, 3, 4, 5]"), None).unwrap();
        assert_eq!(rows.len(), 6);
        assert!(rows.iter().all(|r| r.fit.slope < 0.0), "{rows:?}");
    }

    #[test]
    fn median_of_even_and_odd() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
    }
}
