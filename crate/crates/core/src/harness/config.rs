use std::fmt;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::linalg::NsCoefficients;
use crate::optimizer::{MuonConfig, MuonOption, Orthogonalizer, Schedule};
use crate::problems::MlpConfig;

/// Environment variable that replaces `run.output_dir` when set.
pub const OUTPUT_DIR_ENV: &str = "MUON_VR_OUT";

/// Step sizes swept by grid expansion of constant schedules.
pub const ETA_GRID: [f64; 7] = [1e-4, 5e-4, 1e-3, 5e-3, 1e-2, 5e-2, 1e-1];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub problem: ProblemSpec,
    pub optimizer: OptimizerSpec,
    pub schedule: Schedule,
    pub run: RunSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemSpec {
    #[serde(flatten)]
    pub kind: ProblemKind,
    /// Seeds the problem instance (targets, data); shared by all runs.
    #[serde(default)]
    pub instance_seed: u64,
    /// One run per seed; each seed fixes `X_1` and the sample stream.
    pub seeds: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ProblemKind {
    Quadratic(QuadraticParams),
    PlNonconvex(PlParams),
    MatrixFactorization(FactorizationParams),
    TinyMlp(MlpConfig),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuadraticParams {
    pub m: usize,
    pub n: usize,
    pub smoothness: f64,
    pub pl_mu: f64,
    pub sigma: f64,
    #[serde(default = "one")]
    pub init_scale: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlParams {
    pub m: usize,
    pub n: usize,
    pub sigma: f64,
    #[serde(default = "one")]
    pub init_halfwidth: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FactorizationParams {
    pub m: usize,
    pub n: usize,
    pub rank: usize,
    pub sigma: f64,
}

fn one() -> f64 {
    1.0
}

impl ProblemKind {
    pub fn label(&self) -> &'static str {
        match self {
            ProblemKind::Quadratic(_) => "quadratic",
            ProblemKind::PlNonconvex(_) => "pl_nonconvex",
            ProblemKind::MatrixFactorization(_) => "matrix_factorization",
            ProblemKind::TinyMlp(_) => "tiny_mlp",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum OrthogonalizerKind {
    #[default]
    Exact,
    NewtonSchulz,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum CoefficientSet {
    #[default]
    Convergent,
    MuonTuned,
}

impl CoefficientSet {
    pub fn coefficients(&self) -> NsCoefficients {
        match self {
            CoefficientSet::Convergent => NsCoefficients::CONVERGENT,
            CoefficientSet::MuonTuned => NsCoefficients::MUON_TUNED,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizerSpec {
    pub option: MuonOption,
    #[serde(default)]
    pub orthogonalizer: OrthogonalizerKind,
    #[serde(default = "default_ns_steps")]
    pub ns_steps: usize,
    #[serde(default)]
    pub ns_coeffs: CoefficientSet,
    #[serde(default)]
    pub weight_decay: f64,
}

fn default_ns_steps() -> usize {
    5
}

/// Verification checks that a run can request.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckName {
    DescentLemma,
    PolarDuality,
    SeqLemmaA3,
    SeqLemmaB1,
    MomentumErrorRecursion,
    LemmaB2Decomposition,
}

impl CheckName {
    pub const ALL: [CheckName; 6] = [
        CheckName::DescentLemma,
        CheckName::PolarDuality,
        CheckName::SeqLemmaA3,
        CheckName::SeqLemmaB1,
        CheckName::MomentumErrorRecursion,
        CheckName::LemmaB2Decomposition,
    ];

    pub fn label(&self) -> &'static str {
        match self {
            CheckName::DescentLemma => "descent_lemma",
            CheckName::PolarDuality => "polar_duality",
            CheckName::SeqLemmaA3 => "seq_lemma_a3",
            CheckName::SeqLemmaB1 => "seq_lemma_b1",
            CheckName::MomentumErrorRecursion => "momentum_error_recursion",
            CheckName::LemmaB2Decomposition => "lemma_b2_decomposition",
        }
    }

    pub fn from_label(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|c| c.label() == s)
    }
}

impl fmt::Display for CheckName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSpec {
    pub steps: u64,
    /// Records are kept at `t = 1, k, 2k, …, T` plus a geometric ladder
    /// below `k`.
    #[serde(default = "default_every")]
    pub diagnostics_every: u64,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub checks: Vec<CheckName>,
    /// Width of the seed worker pool.
    #[serde(default = "default_every")]
    pub workers: u64,
}

fn default_every() -> u64 {
    1
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("runs")
}

/// Malformed text: where and why.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("parse error at line {line}, column {column}: {message}")]
pub struct ParseError {
    pub line: usize,
    pub column: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FieldIssue {
    pub field: String,
    pub constraint: String,
}

/// Every field that failed validation.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub struct ValidationError {
    pub issues: Vec<FieldIssue>,
}

impl fmt::Display for ValidationError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "invalid config:")?;
        for issue in &self.issues {
            write!(f, " {}: {};", issue.field, issue.constraint)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ConfigError {
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error(transparent)]
    Validation(#[from] ValidationError),
}

fn line_column(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let column = before.rfind('\n').map_or(before.len(), |i| before.len() - i - 1) + 1;
    (line, column)
}

/// Parses and validates a TOML experiment config.
pub fn parse_config(text: &str) -> Result<ExperimentConfig, ConfigError> {
    let config: ExperimentConfig = toml::from_str(text).map_err(|e| {
        let (line, column) = e.span().map_or((1, 1), |s| line_column(text, s.start));
        ParseError {
            line,
            column,
            message: e.message().to_string(),
        }
    })?;
    config.validate()?;
    Ok(config)
}

struct Issues(Vec<FieldIssue>);

impl Issues {
    fn require(&mut self, ok: bool, field: &str, constraint: impl Into<String>) {
        if !ok {
            self.0.push(FieldIssue {
                field: field.to_string(),
                constraint: constraint.into(),
            });
        }
    }

    fn finite_nonneg(&mut self, v: f64, field: &str) {
        self.require(v.is_finite() && v >= 0.0, field, format!("{v} must be finite and >= 0"));
    }

    fn positive(&mut self, v: usize, field: &str) {
        self.require(v > 0, field, "must be positive");
    }
}

impl ExperimentConfig {
    /// Checks every field and reports all failures together.
    pub fn validate(&self) -> Result<(), ValidationError> {
        let mut is = Issues(Vec::new());
        self.validate_problem(&mut is);
        let o = &self.optimizer;
        is.finite_nonneg(o.weight_decay, "optimizer.weight_decay");
        if o.orthogonalizer == OrthogonalizerKind::NewtonSchulz {
            is.positive(o.ns_steps, "optimizer.ns_steps");
        }
        if let Schedule::Constant { eta, beta, gamma } = self.schedule {
            is.require(eta > 0.0 && eta <= 1.0, "schedule.eta", format!("{eta} must lie in (0, 1]"));
            is.require((0.0..1.0).contains(&beta), "schedule.beta", format!("{beta} must be >= 0 and < 1"));
            is.require((0.0..=1.0).contains(&gamma), "schedule.gamma", format!("{gamma} must lie in [0, 1]"));
        }
        let r = &self.run;
        is.require(r.steps >= 1, "run.steps", "must be >= 1");
        is.require(r.diagnostics_every >= 1, "run.diagnostics_every", "must be >= 1");
        is.require(r.workers >= 1, "run.workers", "must be >= 1");
        is.require(
            !r.output_dir.as_os_str().is_empty(),
            "run.output_dir",
            "must be non-empty",
        );
        for (i, c) in r.checks.iter().enumerate() {
            is.require(
                !r.checks[..i].contains(c),
                "run.checks",
                format!("{c} is listed twice"),
            );
        }
        if is.0.is_empty() {
            Ok(())
        } else {
            Err(ValidationError { issues: is.0 })
        }
    }

    fn validate_problem(&self, is: &mut Issues) {
        let p = &self.problem;
        is.require(!p.seeds.is_empty(), "problem.seeds", "must be non-empty");
        for (i, s) in p.seeds.iter().enumerate() {
            is.require(!p.seeds[..i].contains(s), "problem.seeds", format!("seed {s} repeats"));
        }
        match p.kind {
            ProblemKind::Quadratic(QuadraticParams {
                m,
                n,
                smoothness,
                pl_mu,
                sigma,
                init_scale,
            }) => {
                is.positive(m, "problem.m");
                is.positive(n, "problem.n");
                is.require(pl_mu > 0.0 && pl_mu.is_finite(), "problem.pl_mu", "must be positive");
                is.require(
                    smoothness.is_finite() && smoothness >= pl_mu,
                    "problem.smoothness",
                    "must be finite and >= pl_mu",
                );
                is.finite_nonneg(sigma, "problem.sigma");
                is.finite_nonneg(init_scale, "problem.init_scale");
            }
            ProblemKind::PlNonconvex(PlParams {
                m,
                n,
                sigma,
                init_halfwidth,
            }) => {
                is.positive(m, "problem.m");
                is.positive(n, "problem.n");
                is.finite_nonneg(sigma, "problem.sigma");
                is.finite_nonneg(init_halfwidth, "problem.init_halfwidth");
            }
            ProblemKind::MatrixFactorization(FactorizationParams { m, n, rank, sigma }) => {
                is.positive(m, "problem.m");
                is.positive(n, "problem.n");
                is.require(
                    rank >= 1 && rank <= m.min(n),
                    "problem.rank",
                    format!("{rank} must lie in 1..=min(m, n)"),
                );
                is.finite_nonneg(sigma, "problem.sigma");
            }
            ProblemKind::TinyMlp(c) => {
                is.require((1..=128).contains(&c.width), "problem.width", "must lie in 1..=128");
                is.require(
                    (1..=4096).contains(&c.dataset_size),
                    "problem.dataset_size",
                    "must lie in 1..=4096",
                );
                is.require(
                    (0.0..=1.0).contains(&c.label_noise),
                    "problem.label_noise",
                    "must lie in [0, 1]",
                );
                is.positive(c.input_dim, "problem.input_dim");
                is.require(c.classes >= 2, "problem.classes", "must be >= 2");
                is.positive(c.batch_size, "problem.batch_size");
                is.finite_nonneg(c.cluster_std, "problem.cluster_std");
            }
        }
    }

    pub fn muon_config(&self) -> MuonConfig {
        let o = &self.optimizer;
        let orthogonalizer = match o.orthogonalizer {
            OrthogonalizerKind::Exact => Orthogonalizer::Exact,
            OrthogonalizerKind::NewtonSchulz => Orthogonalizer::NewtonSchulz {
                steps: o.ns_steps,
                coeffs: o.ns_coeffs.coefficients(),
            },
        };
        MuonConfig {
            option: o.option,
            schedule: self.schedule,
            orthogonalizer,
            weight_decay: o.weight_decay,
        }
    }

    /// Renders the config back into the text format.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes to TOML")
    }

    /// JSON with sorted keys; independent of field order in the source text.
    pub fn canonical_json(&self) -> String {
        let value = serde_json::to_value(self).expect("config serializes to JSON");
        serde_json::to_string(&value).expect("JSON value renders")
    }

    /// SHA-256 of the canonical JSON, hex encoded.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.canonical_json().as_bytes()))
    }

    /// Applies the `MUON_VR_OUT` override, if set and non-empty.
    pub fn with_env_output_dir(mut self) -> Self {
        if let Some(dir) = std::env::var_os(OUTPUT_DIR_ENV).filter(|d| !d.is_empty()) {
            self.run.output_dir = PathBuf::from(dir);
        }
        self
    }

    /// One config per grid step size for constant schedules, each writing
    /// to `output_dir/eta_<η>`. Theoretical schedules are rejected.
    pub fn expand_grid(&self) -> Result<Vec<ExperimentConfig>, ValidationError> {
        let Schedule::Constant { beta, gamma, .. } = self.schedule else {
            return Err(ValidationError {
                issues: vec![FieldIssue {
                    field: "schedule.kind".into(),
                    constraint: format!(
                        "grid search needs a constant schedule, got {}",
                        self.schedule.label()
                    ),
                }],
            });
        };
        Ok(ETA_GRID
            .iter()
            .map(|&eta| {
                let mut c = self.clone();
                c.schedule = Schedule::Constant { eta, beta, gamma };
                c.run.output_dir = self.run.output_dir.join(format!("eta_{eta:e}"));
                c
            })
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) const MINIMAL: &str = r#"
[problem]
kind = "quadratic"
m = 4
n = 3
smoothness = 1.0
pl_mu = 0.1
sigma = 1.0
seeds = [1]

[optimizer]
option = "mvr2"

[schedule]
kind = "thm2_mvr2"

[run]
steps = 1000
"#;

    #[test]
    fn minimal_config_parses_with_defaults() {
        let c = parse_config(MINIMAL).unwrap();
        assert_eq!(c.run.steps, 1000);
        assert_eq!(c.run.diagnostics_every, 1);
        assert_eq!(c.problem.seeds, vec![1]);
        assert_eq!(c.optimizer.option, MuonOption::Mvr2);
        assert_eq!(c.schedule, Schedule::Thm2Mvr2);
        assert!(matches!(c.problem.kind, ProblemKind::Quadratic(q) if q.init_scale == 1.0));
    }

    #[test]
    fn beta_one_is_rejected() {
        let text = MINIMAL.replace(
            "kind = \"thm2_mvr2\"",
            "kind = \"constant\"\neta = 0.01\nbeta = 1.0\ngamma = 0.5",
        );
        let err = parse_config(&text).unwrap_err();
        let ConfigError::Validation(v) = err else { panic!("{err:?}") };
        assert_eq!(v.issues.len(), 1);
        assert_eq!(v.issues[0].field, "schedule.beta");
    }

    #[test]
    fn every_invalid_field_is_listed() {
        let text = MINIMAL
            .replace("steps = 1000", "steps = 0\nworkers = 0")
            .replace("seeds = [1]", "seeds = []")
            .replace("pl_mu = 0.1", "pl_mu = 2.0");
        let ConfigError::Validation(v) = parse_config(&text).unwrap_err() else { panic!() };
        let fields: Vec<&str> = v.issues.iter().map(|i| i.field.as_str()).collect();
        assert_eq!(fields, ["problem.seeds", "problem.smoothness", "run.steps", "run.workers"]);
    }

    #[test]
    fn parse_errors_carry_a_position() {
        let text = MINIMAL.replace("steps = 1000", "steps = = 3");
        let ConfigError::Parse(p) = parse_config(&text).unwrap_err() else { panic!() };
        assert_eq!(p.line, 18);
        assert!(p.column > 1);
        let unknown = MINIMAL.replace("steps = 1000", "steps = 1000\nstepz = 2");
        assert!(matches!(parse_config(&unknown), Err(ConfigError::Parse(_))));
    }

    #[test]
    fn round_trip_through_text() {
        let c = parse_config(MINIMAL).unwrap();
        assert_eq!(parse_config(&c.to_toml()).unwrap(), c);
    }

    #[test]
    fn hash_ignores_field_order() {
        let reordered = r#"
[run]
steps = 1000
[schedule]
kind = "thm2_mvr2"
[optimizer]
option = "mvr2"
[problem]
seeds = [1]
sigma = 1.0
pl_mu = 0.1
smoothness = 1.0
n = 3
m = 4
kind = "quadratic"
"#;
        let a = parse_config(MINIMAL).unwrap();
        let b = parse_config(reordered).unwrap();
        assert_eq!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 64);
    }

    #[test]
    fn grid_expands_constant_schedules_only() {
        let c = parse_config(MINIMAL).unwrap();
        assert!(c.expand_grid().is_err());
        let text = MINIMAL.replace(
            "kind = \"thm2_mvr2\"",
            "kind = \"constant\"\neta = 0.01\nbeta = 0.9\ngamma = 0.1",
        );
        let grid = parse_config(&text).unwrap().expand_grid().unwrap();
        assert_eq!(grid.len(), ETA_GRID.len());
        let etas: Vec<f64> = grid
            .iter()
            .map(|g| g.schedule.eval(1).eta)
            .collect();
        assert_eq!(etas, ETA_GRID);
    }

    #[test]
    fn mlp_parameters_default() {
        let text = r#"
[problem]
kind = "tiny_mlp"
width = 16
seeds = [1, 2]
[optimizer]
option = "mvr1"
[schedule]
kind = "constant"
eta = 0.01
beta = 0.9
gamma = 0.1
[run]
steps = 10
"#;
        let c = parse_config(text).unwrap();
        let ProblemKind::TinyMlp(m) = c.problem.kind else { panic!() };
        assert_eq!(m.width, 16);
        assert_eq!(m.dataset_size, MlpConfig::default().dataset_size);
        assert_eq!(parse_config(&c.to_toml()).unwrap(), c);
    }
}
