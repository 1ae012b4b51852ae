//! End-to-end runs of the command-line tool: exit codes, determinism and the
//! files it leaves behind.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_spde-infer");

fn example(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("configs")
        .join(name)
}

fn run(args: &[&str]) -> Output {
    Command::new(BIN)
        .args(args)
        .env_remove("SPDE_INFER_SEED")
        .env_remove("SPDE_INFER_OUT")
        .output()
        .unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

const SMALL_ADDITIVE: &str = r#"
seed = 7

[model]
noise = "additive"
modes = 20
horizon = 0.1
parameters = { theta = 0.1, sigma = 0.1 }
parameter_box = { theta = [0.01, 1.0], sigma = [0.01, 1.0] }
initial = { kind = "zero" }

[model.families]
mu = { kind = "power", c = 1.0, r = 2.0 }
nu = { kind = "constant", c = 0.0 }
q = { kind = "constant", c = 1.0 }
p = { kind = "constant", c = 0.0 }

[simulation]
dt = 0.01
"#;

/// Shell model whose drift family is only known at three modes, too few for
/// the heuristic to settle the solution condition.
const UNDECIDED: &str = r#"
[model]
noise = "shell"
modes = 3
horizon = 1.0
parameters = { theta = 1.0, sigma = 1.0 }
parameter_box = { theta = [1.0, 1.0], sigma = [1.0, 1.0] }
initial = { kind = "constant", value = 1.0 }

[model.families]
mu = { kind = "power", c = 1.0, r = 2.0 }
nu = { kind = "explicit", values = [1.0, 1.0, 1.0] }
q = { kind = "power", c = 1.0, r = 1.0 }
p = { kind = "constant", c = 0.0 }
"#;

fn write_config(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

#[test]
fn check_reports_condition_verdicts_through_exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let out = run(&["check", s(&example("example-additive.toml"))]);
    assert_eq!(code(&out), 0);
    assert!(String::from_utf8_lossy(&out.stdout).contains("additive-solution"));

    let out = run(&[
        "check",
        s(&example("example-shell.toml")),
        "--out",
        s(tmp.path()),
    ]);
    assert_eq!(code(&out), 3);
    let table = fs::read_to_string(tmp.path().join("conditions.csv")).unwrap();
    assert!(table.contains("finite-horizon-solution,fails"), "{table}");

    let undecided = write_config(tmp.path(), "undecided.toml", UNDECIDED);
    assert_eq!(code(&run(&["check", s(&undecided)])), 4);
}

#[test]
fn bad_configs_are_input_errors() {
    let tmp = tempfile::tempdir().unwrap();
    let typo = write_config(
        tmp.path(),
        "typo.toml",
        &SMALL_ADDITIVE.replace("horizon", "horizn"),
    );
    let out = run(&["check", s(&typo)]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("line"));

    let bad_drift = write_config(
        tmp.path(),
        "neg.toml",
        &SMALL_ADDITIVE.replace("theta = 0.1,", "theta = -0.1,"),
    );
    assert_eq!(code(&run(&["check", s(&bad_drift)])), 2);

    let missing = tmp.path().join("nope.toml");
    assert_eq!(code(&run(&["check", s(&missing)])), 1);
}

#[test]
fn simulate_is_gated_by_conditions() {
    let tmp = tempfile::tempdir().unwrap();
    let out_dir = tmp.path().join("o");
    let cfg = example("example-shell.toml");
    assert_eq!(code(&run(&["simulate", s(&cfg), "--out", s(&out_dir)])), 3);
    assert!(!out_dir.join("path.csv").exists());
    assert_eq!(
        code(&run(&[
            "simulate",
            s(&cfg),
            "--force",
            "--out",
            s(&out_dir)
        ])),
        0
    );
    assert!(out_dir.join("path.csv").exists());
    assert!(out_dir.join("manifest.json").exists());
}

#[test]
fn simulation_is_reproducible_and_seeds_are_isolated() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "small.toml", SMALL_ADDITIVE);
    let sim = |name: &str, extra: &[&str]| {
        let dir = tmp.path().join(name);
        let mut args = vec!["simulate", s(&cfg), "--out", s(&dir)];
        args.extend_from_slice(extra);
        assert_eq!(code(&run(&args)), 0);
        fs::read(dir.join("path.csv")).unwrap()
    };
    let a = sim("a", &[]);
    let b = sim("b", &[]);
    let seeded = sim("c", &["--seed", "7"]);
    let other = sim("d", &["--seed", "8"]);
    let next_rep = sim("e", &["--replication", "1"]);
    assert_eq!(a, b);
    assert_eq!(a, seeded, "config seed and --seed must agree");
    assert_ne!(a, other);
    assert_ne!(a, next_rep);

    let dir = tmp.path().join("env");
    let out = Command::new(BIN)
        .args(["simulate", s(&cfg)])
        .env("SPDE_INFER_SEED", "8")
        .env("SPDE_INFER_OUT", &dir)
        .output()
        .unwrap();
    assert!(out.status.success());
    assert_eq!(fs::read(dir.join("path.csv")).unwrap(), other);
}

#[test]
fn estimate_methods_on_simulated_paths() {
    let tmp = tempfile::tempdir().unwrap();
    let shell_dir = tmp.path().join("shell");
    let out = run(&[
        "simulate",
        s(&example("example-shell.toml")),
        "--force",
        "--out",
        s(&shell_dir),
    ]);
    assert_eq!(code(&out), 0);
    let shell_csv = shell_dir.join("path.csv");
    for method in ["mle", "newton", "bayes"] {
        let dir = tmp.path().join(method);
        let out = run(&[
            "estimate",
            s(&shell_csv),
            "--method",
            method,
            "--modes",
            "30",
            "--out",
            s(&dir),
        ]);
        assert_eq!(
            code(&out),
            0,
            "{method}: {}",
            String::from_utf8_lossy(&out.stderr)
        );
        let csv = fs::read_to_string(dir.join("estimates.csv")).unwrap();
        assert!(csv.starts_with("method,n,theta"));
        assert_eq!(csv.lines().count(), 2);
    }
    // Shell data cannot feed the additive estimators.
    assert_eq!(
        code(&run(&[
            "estimate",
            s(&shell_csv),
            "--method",
            "drift2",
            "--out",
            s(tmp.path())
        ])),
        2
    );

    let cfg = write_config(tmp.path(), "small.toml", SMALL_ADDITIVE);
    let add_dir = tmp.path().join("additive");
    assert_eq!(code(&run(&["simulate", s(&cfg), "--out", s(&add_dir)])), 0);
    let add_csv = add_dir.join("path.csv");
    let drift_dir = tmp.path().join("drift");
    let out = run(&[
        "estimate",
        s(&add_csv),
        "--method",
        "drift3",
        "--t1",
        "0.01",
        "--t2",
        "0.02",
        "--out",
        s(&drift_dir),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let drift = fs::read_to_string(drift_dir.join("drift.csv")).unwrap();
    assert_eq!(drift.lines().count(), 21);
    assert_eq!(
        code(&run(&[
            "estimate",
            s(&add_csv),
            "--method",
            "sigma-fourier",
            "--out",
            s(tmp.path())
        ])),
        0
    );
    assert_eq!(
        code(&run(&[
            "estimate",
            s(&add_csv),
            "--method",
            "mle",
            "--out",
            s(tmp.path())
        ])),
        2
    );
}

#[test]
fn drift_recovery_reports_estimator_failure_when_increments_vanish() {
    // At t1 = 0.3 the high modes have relaxed to machine precision, so
    // U(t2) - U(t1) carries no information.
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "late.toml",
        &SMALL_ADDITIVE
            .replace("modes = 20", "modes = 55")
            .replace("horizon = 0.1", "horizon = 1.0"),
    );
    let dir = tmp.path().join("sim");
    assert_eq!(code(&run(&["simulate", s(&cfg), "--out", s(&dir)])), 0);
    let out = run(&[
        "estimate",
        s(&dir.join("path.csv")),
        "--method",
        "drift3",
        "--t1",
        "0.3",
        "--t2",
        "0.6",
        "--out",
        s(tmp.path()),
    ]);
    assert_eq!(code(&out), 5);
}

#[test]
fn field_output_and_spatial_estimators() {
    let tmp = tempfile::tempdir().unwrap();
    let text = format!(
        "{SMALL_ADDITIVE}\n[simulation.field]\nt = 0.1\nresolution = 0.003\ntruncation = 5000\nderivative = {{}}\n"
    );
    for (derivative, qv, qv_fd) in [(true, 0, 2), (false, 2, 0)] {
        let cfg = write_config(
            tmp.path(),
            "field.toml",
            &text.replace("{}", &derivative.to_string()),
        );
        let dir = tmp.path().join(format!("field-{derivative}"));
        assert_eq!(code(&run(&["simulate", s(&cfg), "--out", s(&dir)])), 0);
        let field = dir.join("field.csv");
        let header = fs::read_to_string(&field)
            .unwrap()
            .lines()
            .next()
            .unwrap()
            .to_string();
        assert_eq!(header, if derivative { "x,u_x" } else { "x,u" });
        let est = |m: &str| {
            code(&run(&[
                "estimate",
                s(&field),
                "--method",
                m,
                "--window-end",
                "1.5",
                "--out",
                s(tmp.path()),
            ]))
        };
        assert_eq!(est("qv"), qv, "qv on derivative = {derivative}");
        assert_eq!(est("qv-fd"), qv_fd, "qv-fd on derivative = {derivative}");
    }
}

#[test]
fn campaign_writes_summary_and_error_files() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "camp.toml",
        &format!("{SMALL_ADDITIVE}\n[campaign]\nreplications = 50\nsweep = [10, 20]\nestimators = [\"sigma-fourier\"]\n"),
    );
    let dir = tmp.path().join("c");
    let out = run(&["campaign", s(&cfg), "--workers", "2", "--out", s(&dir)]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    for f in [
        "summary.csv",
        "errors_N10.csv",
        "errors_N20.csv",
        "histograms.csv",
        "campaign.json",
        "manifest.json",
    ] {
        assert!(dir.join(f).exists(), "{f}");
    }
    let summary = fs::read_to_string(dir.join("summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 3);
}
