use std::path::{Path, PathBuf};
use std::process::Command;

use muon_vr_cli::{cli_main_with, EXIT_CHECK_FAILED, EXIT_OK, EXIT_USAGE};

fn run(args: &[&str]) -> (i32, String, String) {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let argv = std::iter::once("muon-vr").chain(args.iter().copied());
    let code = cli_main_with(argv, &mut out, &mut err);
    (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
}

fn repo_config(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)
}

fn write_config(dir: &Path, body: &str) -> PathBuf {
    let path = dir.join("exp.toml");
    let text = format!("{body}\n[run]\nsteps = 10\noutput_dir = {:?}\n", dir.join("out"));
    std::fs::write(&path, text).unwrap();
    path
}

const QUADRATIC: &str = r#"
[problem]
kind = "quadratic"
m = 4
n = 3
smoothness = 1.0
pl_mu = 0.1
sigma = 0.5
seeds = [1, 2]
[optimizer]
option = "mvr2"
[schedule]
kind = "thm2_mvr2"
"#;

#[test]
fn missing_config_is_a_usage_error() {
    let (code, _, err) = run(&["run", "--config", "missing.cfg"]);
    assert_eq!(code, EXIT_USAGE);
    assert!(err.contains("missing.cfg"), "{err}");
}

#[test]
fn bad_arguments_are_usage_errors() {
    assert_eq!(run(&[]).0, EXIT_USAGE);
    assert_eq!(run(&["train"]).0, EXIT_USAGE);
    assert_eq!(run(&["verify", "--check", "no_such_check"]).0, EXIT_USAGE);
    assert_eq!(run(&["verify", "--check", "descent_lemma"]).0, EXIT_USAGE);
    let (code, out, _) = run(&["--help"]);
    assert_eq!(code, EXIT_OK);
    assert!(out.contains("plot-data"));
}

#[test]
fn invalid_config_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let body = QUADRATIC.replace("kind = \"thm2_mvr2\"", "kind = \"constant\"\neta = 0.1\nbeta = 1.0\ngamma = 0.0");
    let path = write_config(dir.path(), &body);
    let (code, _, err) = run(&["run", "--config", path.to_str().unwrap()]);
    assert_eq!(code, EXIT_USAGE);
    assert!(err.contains("schedule.beta"), "{err}");
}

#[test]
fn randomized_scalar_suites_pass() {
    let (code, out, _) = run(&["verify", "--check", "seq_lemma_a3", "--instances", "1000"]);
    assert_eq!(code, EXIT_OK, "{out}");
    assert!(out.contains("seq_lemma_a3 PASS"));
    assert!(out.contains("violations=0"));
    let (code, out, _) = run(&["verify", "--check", "seq_lemma_b1", "--instances", "1000", "--seed", "9"]);
    assert_eq!(code, EXIT_OK, "{out}");
}

#[test]
fn run_verify_and_plot_a_small_experiment() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("exp.toml");
    let text = format!(
        "{QUADRATIC}\n[run]\nsteps = 10\noutput_dir = {:?}\nchecks = [\"descent_lemma\", \"polar_duality\"]\n",
        dir.path().join("out")
    );
    std::fs::write(&path, text).unwrap();
    let (code, out, err) = run(&["run", "--config", path.to_str().unwrap()]);
    assert_eq!(code, EXIT_OK, "{out}{err}");
    assert_eq!(out.matches(" PASS ").count(), 2, "{out}");
    let manifest = dir.path().join("out/manifest.json");
    assert!(manifest.exists());
    let (code, out, _) = run(&[
        "verify",
        "--check",
        "descent_lemma",
        "--check",
        "polar_duality",
        "--manifest",
        manifest.to_str().unwrap(),
    ]);
    assert_eq!(code, EXIT_OK, "{out}");
    let (code, out, _) = run(&["plot-data", "--manifest", dir.path().join("out").to_str().unwrap()]);
    assert_eq!(code, EXIT_OK, "{out}");
    for name in ["loss_mvr2.dat", "gradnorm_mvr2.dat", "gap_mvr2.dat"] {
        assert!(dir.path().join("out").join(name).exists(), "{name}: {out}");
    }
}

#[test]
fn failing_check_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("exp.toml");
    // the Monte-Carlo recursion audit needs 100 seeds; two cannot pass
    let text = format!(
        "{QUADRATIC}\n[run]\nsteps = 10\noutput_dir = {:?}\nchecks = [\"momentum_error_recursion\"]\n",
        dir.path().join("out")
    );
    std::fs::write(&path, text).unwrap();
    let (code, out, _) = run(&["run", "--config", path.to_str().unwrap()]);
    assert_eq!(code, EXIT_CHECK_FAILED, "{out}");
    assert!(out.contains("momentum_error_recursion FAIL"));
}

#[test]
fn grid_expands_only_constant_schedules() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_config(dir.path(), QUADRATIC);
    assert_eq!(run(&["run", "--config", path.to_str().unwrap(), "--grid"]).0, EXIT_USAGE);
    let body = QUADRATIC.replace("kind = \"thm2_mvr2\"", "kind = \"constant\"\neta = 0.1\nbeta = 0.9\ngamma = 1.0");
    let path = write_config(dir.path(), &body);
    let (code, out, _) = run(&["run", "--config", path.to_str().unwrap(), "--grid"]);
    assert_eq!(code, EXIT_OK, "{out}");
    let runs = std::fs::read_dir(dir.path().join("out")).unwrap().count();
    assert_eq!(runs, 7);
}

#[test]
fn rates_rank_mvr2_steeper_than_ema() {
    let (code, out, _) = run(&["rates", "--config", repo_config("quad_sigma1.toml").to_str().unwrap()]);
    assert_eq!(code, EXIT_OK, "{out}");
    let slope = |prefix: &str| -> f64 {
        let line = out
            .lines()
            .find(|l| l.starts_with(prefix) && l.contains("ergodic_grad"))
            .unwrap_or_else(|| panic!("no {prefix} row in {out}"));
        let field = line.split_whitespace().find(|f| f.starts_with("slope=")).unwrap();
        field["slope=".len()..].parse().unwrap()
    };
    assert!(slope("mvr2 ") < slope("mvr1_gamma0 "), "{out}");
}

#[test]
fn compare_prints_a_four_way_ranking() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_config(dir.path(), QUADRATIC);
    let (code, out, _) = run(&["compare", "--config", path.to_str().unwrap()]);
    assert_eq!(code, EXIT_OK, "{out}");
    let ranks: Vec<&str> = out.lines().map(|l| l.split('.').next().unwrap()).collect();
    assert_eq!(ranks, ["1", "2", "3", "4"]);
    assert!(out.contains("sgd"));
}

#[test]
fn shipped_configs_parse() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut count = 0;
    for entry in std::fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        let text = std::fs::read_to_string(&path).unwrap();
        muon_vr::harness::parse_config(&text).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        count += 1;
    }
    assert!(count >= 4);
}

#[test]
fn output_dir_env_override_and_binary_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_config(dir.path(), QUADRATIC);
    let redirected = dir.path().join("elsewhere");
    let status = Command::new(env!("CARGO_BIN_EXE_muon-vr"))
        .args(["run", "--config", path.to_str().unwrap()])
        .env("MUON_VR_OUT", &redirected)
        .output()
        .unwrap()
        .status;
    assert_eq!(status.code(), Some(EXIT_OK));
    assert!(redirected.join("manifest.json").exists());
    assert!(!dir.path().join("out").exists());
    let status = Command::new(env!("CARGO_BIN_EXE_muon-vr"))
        .args(["run", "--config", "missing.cfg"])
        .output()
        .unwrap()
        .status;
    assert_eq!(status.code(), Some(EXIT_USAGE));
}
