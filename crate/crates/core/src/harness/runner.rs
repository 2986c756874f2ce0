use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::optimizer::{Muon, MuonConfig, MuonOption};
use crate::problems::{
    make_matrix_factorization, make_pl_nonconvex, make_stochastic_quadratic, Problem,
    ProblemConstants, ProblemError, TinyMlp,
};
use crate::verification::{
    check_descent_lemma, check_lemma_b2_gamma_term, check_polar_duality,
    estimate_momentum_error_recursion, random_seq_lemma_suite, run_rngs, Alpha, CheckReport,
    SeqLemma, Trace, VerificationError,
};

use super::config::{CheckName, ExperimentConfig, ProblemKind, ProblemSpec};
use super::trace_io::{render_aggregate, render_trace, write_file};
use super::HarnessError;

pub const MANIFEST_FILE: &str = "manifest.json";
pub const AGGREGATE_FILE: &str = "aggregate.csv";
pub const MANIFEST_SCHEMA: u32 = 1;

/// Instances per randomized scalar-lemma suite requested from a config.
pub const SUITE_INSTANCES: usize = 1000;

pub type DynProblem = Box<dyn Problem + Send + Sync>;

pub fn build_problem(spec: &ProblemSpec) -> Result<DynProblem, ProblemError> {
    let seed = spec.instance_seed;
    Ok(match spec.kind {
        ProblemKind::Quadratic(q) => Box::new(
            make_stochastic_quadratic(seed, q.m, q.n, q.smoothness, q.pl_mu, q.sigma)?
                .with_init_scale(q.init_scale),
        ),
        ProblemKind::PlNonconvex(p) => Box::new(
            make_pl_nonconvex(seed, p.m, p.n, p.sigma)?.with_init_halfwidth(p.init_halfwidth),
        ),
        ProblemKind::MatrixFactorization(f) => {
            Box::new(make_matrix_factorization(seed, f.m, f.n, f.rank, f.sigma)?)
        }
        ProblemKind::TinyMlp(c) => Box::new(TinyMlp::new(seed, c)?),
    })
}

/// Record times: every `t` when `every = 1`; otherwise `1`, a geometric
/// ladder (ratio 1.5) below `every`, all multiples of `every`, and `T`.
pub fn sample_times(steps: u64, every: u64) -> Vec<u64> {
    if every <= 1 {
        return (1..=steps).collect();
    }
    let mut times = BTreeSet::from([1, steps]);
    let mut x = 1.0f64;
    while (x as u64) < every.min(steps) {
        times.insert(x.ceil() as u64);
        x *= 1.5;
    }
    times.extend((every..=steps).step_by(every as usize));
    times.into_iter().filter(|&t| t <= steps).collect()
}

/// Runs one seed, taking telemetry only at `times` (sorted). Steps between
/// record times skip the true-gradient evaluation, but the sample stream and
/// therefore the trajectory are the same as a fully recorded run.
pub fn run_seed<P: Problem + ?Sized>(
    problem: &P,
    config: MuonConfig,
    seed: u64,
    steps: u64,
    times: &[u64],
) -> Result<Trace, VerificationError> {
    let (mut init, mut sampling) = run_rngs(seed);
    let mut opt = Muon::new(config, problem.initial_point(&mut init))?;
    let mut records = Vec::with_capacity(times.len());
    let mut next = times.iter().peekable();
    for t in 1..=steps {
        if next.peek() == Some(&&t) {
            next.next();
            records.push(opt.step(problem, &mut sampling)?);
        } else {
            opt.advance(problem, &mut sampling)?;
        }
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

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub seed: u64,
    /// File name relative to the run directory.
    pub file: String,
    pub sha256: String,
    pub final_f: f64,
    pub wall_clock_secs: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CheckStatus {
    #[serde(rename = "PASS")]
    Pass,
    #[serde(rename = "FAIL")]
    Fail,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckSummary {
    pub name: String,
    pub status: CheckStatus,
    pub checked: usize,
    pub violations: usize,
    /// `None` when nothing finite was observed.
    pub worst_margin: Option<f64>,
    /// Why the check could not run, if it could not.
    pub detail: Option<String>,
}

impl CheckSummary {
    pub fn from_report(report: &CheckReport) -> Self {
        Self {
            name: report.name.clone(),
            status: if report.passed() {
                CheckStatus::Pass
            } else {
                CheckStatus::Fail
            },
            checked: report.checked,
            violations: report.violations,
            worst_margin: report.worst_margin.is_finite().then_some(report.worst_margin),
            detail: None,
        }
    }

    pub fn failed_to_run(name: CheckName, err: impl std::fmt::Display) -> Self {
        Self {
            name: name.label().to_string(),
            status: CheckStatus::Fail,
            checked: 0,
            violations: 0,
            worst_margin: None,
            detail: Some(err.to_string()),
        }
    }

    pub fn passed(&self) -> bool {
        self.status == CheckStatus::Pass
    }

    pub fn to_line(&self) -> String {
        let status = if self.passed() { "PASS" } else { "FAIL" };
        let mut line = format!(
            "{} {status} checked={} violations={}",
            self.name, self.checked, self.violations
        );
        if let Some(m) = self.worst_margin {
            line.push_str(&format!(" worst_margin={m:.6e}"));
        }
        if let Some(d) = &self.detail {
            line.push_str(&format!(" detail={d:?}"));
        }
        line
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub schema_version: u32,
    pub library_version: String,
    pub config_hash: String,
    pub config: ExperimentConfig,
    pub constants: ProblemConstants,
    pub rank_bound: usize,
    pub traces: Vec<TraceEntry>,
    pub aggregate_file: String,
    pub checks: Vec<CheckSummary>,
}

impl RunManifest {
    /// Hash of everything except wall-clock times: equal for reruns of the
    /// same config on the same floating-point environment.
    pub fn content_hash(&self) -> String {
        let mut m = self.clone();
        for t in &mut m.traces {
            t.wall_clock_secs = 0.0;
        }
        let value = serde_json::to_value(&m).expect("manifest serializes");
        hex::encode(Sha256::digest(value.to_string().as_bytes()))
    }

    pub fn all_checks_passed(&self) -> bool {
        self.checks.iter().all(CheckSummary::passed)
    }

    pub fn run_dir(&self) -> &Path {
        &self.config.run.output_dir
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = super::trace_io::read_file(path)?;
        serde_json::from_str(&text).map_err(|e| HarnessError::Manifest(e.to_string()))
    }
}

pub fn trace_file_name(seed: u64) -> String {
    format!("trace_seed{seed}.csv")
}

fn thread_pool(workers: u64) -> Result<rayon::ThreadPool, HarnessError> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers as usize)
        .build()
        .map_err(|e| HarnessError::Unsupported(format!("worker pool: {e}")))
}

/// Runs every seed of `config` and returns the traces in seed-list order,
/// with per-seed wall-clock seconds. Nothing is written.
pub fn run_traces(
    problem: &(dyn Problem + Send + Sync),
    config: &ExperimentConfig,
) -> Result<Vec<(Trace, f64)>, HarnessError> {
    let times = sample_times(config.run.steps, config.run.diagnostics_every);
    let muon = config.muon_config();
    let pool = thread_pool(config.run.workers)?;
    pool.install(|| {
        config
            .problem
            .seeds
            .par_iter()
            .map(|&seed| {
                let start = Instant::now();
                let trace = run_seed(problem, muon, seed, config.run.steps, &times)?;
                Ok((trace, start.elapsed().as_secs_f64()))
            })
            .collect::<Result<Vec<_>, VerificationError>>()
    })
    .map_err(HarnessError::from)
}

/// Evaluates one requested check. Failures to run are reported as FAIL.
pub fn evaluate_check(
    name: CheckName,
    problem: &(dyn Problem + Send + Sync),
    config: &ExperimentConfig,
    traces: &[Trace],
) -> CheckSummary {
    let merged = |reports: Vec<CheckReport>| {
        let mut all = CheckReport::new(name.label());
        for r in reports {
            all.checked += r.checked;
            all.violations += r.violations;
            if r.worst_margin < all.worst_margin || r.worst_margin.is_nan() {
                all.worst_margin = r.worst_margin;
                all.worst_at = r.worst_at;
            }
        }
        all
    };
    let seeds = config.problem.seeds.len();
    let steps = config.run.steps;
    let result: Result<CheckReport, VerificationError> = match name {
        CheckName::DescentLemma => traces
            .iter()
            .map(|t| check_descent_lemma(t, Alpha::EtaScaled))
            .collect::<Result<Vec<_>, _>>()
            .map(merged),
        CheckName::PolarDuality => {
            if traces.iter().any(|t| t.records.iter().any(|r| r.duality_inner.is_nan())) {
                Err(VerificationError::MissingDiagnostics(
                    "duality inner products are not stored in trace files".into(),
                ))
            } else {
                Ok(merged(traces.iter().map(check_polar_duality).collect()))
            }
        }
        CheckName::SeqLemmaA3 => {
            random_seq_lemma_suite(SeqLemma::A3, SUITE_INSTANCES, config.problem.instance_seed)
        }
        CheckName::SeqLemmaB1 => {
            random_seq_lemma_suite(SeqLemma::B1, SUITE_INSTANCES, config.problem.instance_seed)
        }
        CheckName::MomentumErrorRecursion => estimate_momentum_error_recursion(
            problem,
            config.optimizer.option,
            config.schedule,
            steps,
            seeds,
        )
        .map(|e| e.report),
        CheckName::LemmaB2Decomposition => {
            if config.optimizer.option != MuonOption::Mvr2 {
                Err(VerificationError::Unsupported(
                    "the decomposition is stated for MVR2".into(),
                ))
            } else {
                check_lemma_b2_gamma_term(problem, config.schedule, steps, seeds).map(|d| d.report)
            }
        }
    };
    match result {
        Ok(mut report) => {
            report.name = name.label().to_string();
            CheckSummary::from_report(&report)
        }
        Err(e) => CheckSummary::failed_to_run(name, e),
    }
}

/// Executes the config: per-seed trace CSVs, `aggregate.csv`, requested
/// checks, and `manifest.json`, all under `run.output_dir`.
pub fn run_experiment(config: &ExperimentConfig) -> Result<RunManifest, HarnessError> {
    config.validate()?;
    let problem = build_problem(&config.problem)?;
    let dir = config.run.output_dir.clone();
    std::fs::create_dir_all(&dir).map_err(|e| HarnessError::io(&dir, e))?;
    let runs = run_traces(problem.as_ref(), config)?;
    let mut entries = Vec::with_capacity(runs.len());
    for (trace, secs) in &runs {
        let file = trace_file_name(trace.seed);
        let text = render_trace(trace);
        write_file(&dir.join(&file), &text)?;
        entries.push(TraceEntry {
            seed: trace.seed,
            file,
            sha256: hex::encode(Sha256::digest(text.as_bytes())),
            final_f: trace.final_f,
            wall_clock_secs: *secs,
        });
    }
    let traces: Vec<Trace> = runs.into_iter().map(|(t, _)| t).collect();
    write_file(&dir.join(AGGREGATE_FILE), &render_aggregate(&traces)?)?;
    let checks = config
        .run
        .checks
        .iter()
        .map(|&c| evaluate_check(c, problem.as_ref(), config, &traces))
        .collect();
    let (m, n) = problem.shape();
    let manifest = RunManifest {
        schema_version: MANIFEST_SCHEMA,
        library_version: env!("CARGO_PKG_VERSION").to_string(),
        config_hash: config.hash(),
        config: config.clone(),
        constants: problem.constants(),
        rank_bound: m.min(n),
        traces: entries,
        aggregate_file: AGGREGATE_FILE.to_string(),
        checks,
    };
    let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    write_file(&dir.join(MANIFEST_FILE), &(json + "\n"))?;
    Ok(manifest)
}

/// Reloads the stored traces of a manifest.
pub fn load_traces(manifest: &RunManifest) -> Result<Vec<Trace>, HarnessError> {
    manifest
        .traces
        .iter()
        .map(|entry| {
            let path: PathBuf = manifest.run_dir().join(&entry.file);
            let (records, final_f) = super::trace_io::parse_trace(&super::trace_io::read_file(&path)?)?;
            Ok(Trace {
                records,
                final_f,
                constants: manifest.constants,
                rank_bound: manifest.rank_bound,
                option: manifest.config.optimizer.option,
                schedule: manifest.config.schedule,
                seed: entry.seed,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::config::parse_config;

    fn config(dir: &Path, extra: &str) -> ExperimentConfig {
        let text = format!(
            r#"
[problem]
kind = "quadratic"
m = 4
n = 3
smoothness = 1.0
pl_mu = 0.1
sigma = 0.0
seeds = [1]
[optimizer]
option = "mvr2"
[schedule]
kind = "constant"
eta = 0.01
beta = 0.5
gamma = 1.0
[run]
steps = 10
output_dir = {dir:?}
{extra}
"#
        );
        parse_config(&text).unwrap()
    }

    #[test]
    fn sample_times_cover_ladder_and_multiples() {
        assert_eq!(sample_times(5, 1), vec![1, 2, 3, 4, 5]);
        assert_eq!(sample_times(25, 10), vec![1, 2, 3, 4, 6, 8, 10, 20, 25]);
        assert_eq!(sample_times(3, 10), vec![1, 2, 3]);
    }

    #[test]
    fn deterministic_small_run() {
        let dir = tempfile::tempdir().unwrap();
        let c = config(dir.path(), "checks = [\"descent_lemma\", \"polar_duality\"]");
        let manifest = run_experiment(&c).unwrap();
        let text = std::fs::read_to_string(dir.path().join("trace_seed1.csv")).unwrap();
        let rows: Vec<&str> = text.lines().skip(2).collect();
        assert_eq!(rows.len(), 10);
        let f: Vec<f64> = rows.iter().map(|r| r.split(',').nth(4).unwrap().parse().unwrap()).collect();
        assert!(f.windows(2).skip(1).all(|w| w[1] < w[0]), "{f:?}");
        assert_eq!(manifest.checks.len(), 2);
        assert!(manifest.all_checks_passed(), "{:?}", manifest.checks);
        let again = run_experiment(&c).unwrap();
        assert_eq!(std::fs::read_to_string(dir.path().join("trace_seed1.csv")).unwrap(), text);
        assert_eq!(manifest.content_hash(), again.content_hash());
    }

    #[test]
    fn subsampled_records_follow_full_trajectory() {
        let dir = tempfile::tempdir().unwrap();
        let full = config(dir.path(), "");
        let problem = build_problem(&full.problem).unwrap();
        let a = run_traces(problem.as_ref(), &full).unwrap();
        let mut sparse = full.clone();
        sparse.run.diagnostics_every = 4;
        let b = run_traces(problem.as_ref(), &sparse).unwrap();
        assert_eq!(a[0].0.final_f, b[0].0.final_f);
        for rb in &b[0].0.records {
            let ra = &a[0].0.records[rb.t as usize - 1];
            assert_eq!(ra, rb);
        }
    }

    #[test]
    fn unrunnable_checks_fail_with_detail() {
        let dir = tempfile::tempdir().unwrap();
        let c = config(dir.path(), "checks = [\"momentum_error_recursion\"]");
        let manifest = run_experiment(&c).unwrap();
        assert_eq!(manifest.checks[0].status, CheckStatus::Fail);
        assert!(manifest.checks[0].detail.as_deref().unwrap().contains("seeds"));
    }
}
