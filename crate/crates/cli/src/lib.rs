//! `muon-vr` command line: run configs, audit traces, fit rates, compare
//! options and emit plot data.
//!
//! Exit codes: 0 on success, 1 when a check fails or a run errors, 2 on
//! usage or config errors.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use muon_vr::harness::{
    build_problem, compare_options, emit_plot_data, evaluate_check, load_config, load_traces,
    rate_table, run_experiment, run_traces, CheckName, CheckSummary, ExperimentConfig,
    HarnessError, PlotKind, RunManifest, MANIFEST_FILE,
};
use muon_vr::verification::{random_seq_lemma_suite, SeqLemma};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CHECK_FAILED: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "muon-vr", version, about = "Muon variance-reduction experiment harness")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Execute a config: traces, aggregate, checks and manifest.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Expand a constant schedule over the step-size grid.
        #[arg(long)]
        grid: bool,
    },
    /// Run named verification checks.
    Verify {
        #[arg(long = "check", required = true, value_parser = parse_check)]
        checks: Vec<CheckName>,
        /// Instances for the randomized scalar-lemma suites.
        #[arg(long, default_value_t = 1000)]
        instances: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Manifest (or run directory) for checks on stored traces.
        #[arg(long)]
        manifest: Option<PathBuf>,
    },
    /// Fit convergence rates for EMA, MVR1 and MVR2.
    Rates {
        #[arg(long)]
        config: PathBuf,
        /// Fit window `LO HI`; defaults to `[max(10, T/100), T]`.
        #[arg(long, num_args = 2, value_names = ["LO", "HI"])]
        window: Option<Vec<u64>>,
    },
    /// Rank EMA, MVR1, MVR2 and SGD by final ergodic gradient norm.
    Compare {
        #[arg(long)]
        config: PathBuf,
    },
    /// Write `<metric>_<option>.dat` files next to a run's manifest.
    PlotData {
        #[arg(long)]
        manifest: PathBuf,
        /// Plot kinds; all of them when omitted.
        #[arg(long = "kind", value_parser = parse_kind)]
        kinds: Vec<PlotKind>,
    },
}

fn parse_check(s: &str) -> Result<CheckName, String> {
    CheckName::from_label(s).ok_or_else(|| {
        let names: Vec<&str> = CheckName::ALL.iter().map(|c| c.label()).collect();
        format!("unknown check {s:?}; expected one of {}", names.join(", "))
    })
}

fn parse_kind(s: &str) -> Result<PlotKind, String> {
    PlotKind::from_label(s).ok_or_else(|| {
        let names: Vec<&str> = PlotKind::ALL.iter().map(|k| k.label()).collect();
        format!("unknown plot kind {s:?}; expected one of {}", names.join(", "))
    })
}

/// Entry point with standard streams.
pub fn cli_main<I, S>(argv: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    cli_main_with(argv, &mut std::io::stdout(), &mut std::io::stderr())
}

/// Entry point with explicit output streams.
pub fn cli_main_with<I, S>(argv: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() {
                let _ = write!(err, "{e}");
                EXIT_USAGE
            } else {
                let _ = write!(out, "{e}");
                EXIT_OK
            };
            return code;
        }
    };
    match dispatch(cli.command, out) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Harness(#[from] HarnessError),
}

impl CliError {
    fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_)
            | CliError::Harness(
                HarnessError::Config(_) | HarnessError::Io { .. } | HarnessError::Manifest(_),
            ) => EXIT_USAGE,
            CliError::Harness(_) => EXIT_CHECK_FAILED,
        }
    }
}

fn config_from(path: &Path) -> Result<ExperimentConfig, HarnessError> {
    Ok(load_config(path)?.with_env_output_dir())
}

fn manifest_path(path: &Path) -> PathBuf {
    if path.is_dir() {
        path.join(MANIFEST_FILE)
    } else {
        path.to_path_buf()
    }
}

fn status_code(summaries: &[CheckSummary]) -> i32 {
    if summaries.iter().all(CheckSummary::passed) {
        EXIT_OK
    } else {
        EXIT_CHECK_FAILED
    }
}

fn dispatch(command: Command, out: &mut dyn Write) -> Result<i32, CliError> {
    let mut say = |line: String| {
        let _ = writeln!(out, "{line}");
    };
    match command {
        Command::Run { config, grid } => {
            let base = config_from(&config)?;
            let configs = if grid {
                base.expand_grid().map_err(HarnessError::from)?
            } else {
                vec![base]
            };
            let mut all = Vec::new();
            for c in &configs {
                let manifest = run_experiment(c)?;
                say(format!(
                    "wrote {} ({} seeds, config {})",
                    manifest.run_dir().join(MANIFEST_FILE).display(),
                    manifest.traces.len(),
                    &manifest.config_hash[..12]
                ));
                for check in &manifest.checks {
                    say(check.to_line());
                }
                all.extend(manifest.checks);
            }
            Ok(status_code(&all))
        }
        Command::Verify {
            checks,
            instances,
            seed,
            manifest,
        } => {
            let stored = manifest
                .map(|p| RunManifest::load(&manifest_path(&p)))
                .transpose()?;
            let mut summaries = Vec::new();
            for check in checks {
                let summary = match (check, &stored) {
                    (CheckName::SeqLemmaA3 | CheckName::SeqLemmaB1, _) => {
                        let lemma = if check == CheckName::SeqLemmaA3 {
                            SeqLemma::A3
                        } else {
                            SeqLemma::B1
                        };
                        let report = random_seq_lemma_suite(lemma, instances, seed)
                            .map_err(HarnessError::from)?;
                        CheckSummary::from_report(&report)
                    }
                    (_, None) => return Err(CliError::Usage(format!("{check} needs --manifest"))),
                    (_, Some(m)) => verify_stored(check, m)?,
                };
                say(summary.to_line());
                summaries.push(summary);
            }
            Ok(status_code(&summaries))
        }
        Command::Rates { config, window } => {
            let c = config_from(&config)?;
            let window = window.map(|w| (w[0], w[1]));
            for row in rate_table(&c, window)? {
                say(row.to_line());
            }
            Ok(EXIT_OK)
        }
        Command::Compare { config } => {
            let c = config_from(&config)?;
            for row in compare_options(&c)? {
                say(row.to_line());
            }
            Ok(EXIT_OK)
        }
        Command::PlotData { manifest, kinds } => {
            let m = RunManifest::load(&manifest_path(&manifest))?;
            let kinds = if kinds.is_empty() {
                let mut all = vec![PlotKind::LossVsStep, PlotKind::GradnormVsStepLoglog];
                if m.constants.f_star.is_some() {
                    all.push(PlotKind::GapVsStepLoglog);
                }
                all
            } else {
                kinds
            };
            for kind in kinds {
                say(format!("wrote {}", emit_plot_data(&m, kind)?.display()));
            }
            Ok(EXIT_OK)
        }
    }
}

/// Checks against a stored run. Trace files carry every quantity the
/// descent audit needs; the duality audit needs `⟨M, O⟩`, which the trace
/// schema omits, so it replays the (deterministic) run instead.
fn verify_stored(check: CheckName, manifest: &RunManifest) -> Result<CheckSummary, HarnessError> {
    let problem = build_problem(&manifest.config.problem)?;
    let traces = if check == CheckName::PolarDuality {
        run_traces(problem.as_ref(), &manifest.config)?
            .into_iter()
            .map(|(t, _)| t)
            .collect()
    } else {
        load_traces(manifest)?
    };
    Ok(evaluate_check(check, problem.as_ref(), &manifest.config, &traces))
}
