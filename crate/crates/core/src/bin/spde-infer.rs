//! Command-line front end: `simulate`, `estimate`, `check` and `campaign`.
//!
//! Exit codes: 0 success, 1 I/O or unexpected failure, 2 invalid
//! configuration or input, 3 a required condition fails, 4 a required
//! condition is undecided, 5 an estimator failed.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use spde_infer::additive_inference::{
    drift_residual, quad_var_estimators, quad_var_estimators_fd, recover_drift_three_point,
    recover_drift_two_point, sigma_mle_fourier, IncrementObservations, Known, SpatialIncrements,
};
use spde_infer::conditions::{check_model, Verdict};
use spde_infer::io::{self, DriftRow, RunConfig, RunManifest};
use spde_infer::montecarlo::run_campaign;
use spde_infer::report::EstimateReport;
use spde_infer::shell_inference::{
    bayes_posterior_mean, mle, mle_numeric, BayesOptions, FlatPrior, ShellObservations,
};
use spde_infer::simulate::{
    reconstruct_field, simulate, uniform_space_grid, uniform_time_grid, FourierPath,
};
use spde_infer::spectra::{ModelSpec, NoiseType};
use spde_infer::Error;

#[derive(Parser)]
#[command(
    name = "spde-infer",
    version,
    about = "Simulate and estimate SPDEs driven by space-only noise"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one path (and optionally a physical-space field).
    Simulate(SimulateArgs),
    /// Estimate parameters from a path or field file.
    Estimate(EstimateArgs),
    /// Evaluate well-posedness and regularity conditions.
    Check(CheckArgs),
    /// Run a replicated Monte Carlo campaign.
    Campaign(CampaignArgs),
}

#[derive(Args)]
struct Common {
    /// Output directory.
    #[arg(long, env = "SPDE_INFER_OUT", default_value = "out")]
    out: PathBuf,
}

#[derive(Args)]
struct SimulateArgs {
    config: PathBuf,
    /// Base seed (overrides the config file).
    #[arg(long, env = "SPDE_INFER_SEED")]
    seed: Option<u64>,
    /// Replication index, i.e. the noise substream.
    #[arg(long, default_value_t = 0)]
    replication: u64,
    /// Proceed even if a required condition fails or is undecided.
    #[arg(long)]
    force: bool,
    #[command(flatten)]
    common: Common,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum MethodArg {
    Mle,
    Newton,
    Bayes,
    Drift2,
    Drift3,
    SigmaFourier,
    Qv,
    QvFd,
}

#[derive(Args)]
struct EstimateArgs {
    /// Path or field CSV written by `simulate` (its .json sidecar must sit next to it).
    input: PathBuf,
    /// Estimator to apply.
    #[arg(long, value_enum)]
    method: MethodArg,
    /// Observation time (shell methods and sigma-fourier).
    #[arg(long)]
    t: Option<f64>,
    /// First drift-recovery time (default: first grid step).
    #[arg(long)]
    t1: Option<f64>,
    /// Second drift-recovery time (default: twice t1).
    #[arg(long)]
    t2: Option<f64>,
    /// Number of modes to use (default: all in the file).
    #[arg(long)]
    modes: Option<usize>,
    /// Treat sigma as known (qv methods; default: the value in the sidecar).
    #[arg(long, conflicts_with = "known_theta")]
    known_sigma: Option<f64>,
    /// Treat theta as known and estimate sigma (qv methods).
    #[arg(long)]
    known_theta: Option<f64>,
    /// Right end(s) of the spatial window [a, x] (qv methods; default: whole grid).
    #[arg(long)]
    window_end: Vec<f64>,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct CheckArgs {
    config: PathBuf,
    /// Also write conditions.csv here.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CampaignArgs {
    config: PathBuf,
    /// Replication count (overrides the config file).
    #[arg(long)]
    replications: Option<usize>,
    /// Worker threads; outputs do not depend on this.
    #[arg(long, default_value_t = 1)]
    workers: usize,
    /// Base seed (overrides the config file).
    #[arg(long, env = "SPDE_INFER_SEED")]
    seed: Option<u64>,
    /// Proceed even if a required condition fails or is undecided.
    #[arg(long)]
    force: bool,
    #[command(flatten)]
    common: Common,
}

/// Failure with its exit code.
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn new(code: u8, message: impl Into<String>) -> Self {
        Failure {
            code,
            message: message.into(),
        }
    }
}

/// Library errors raised while reading configs or inputs.
fn input_error(e: Error) -> Failure {
    match e {
        Error::Io(m) => Failure::new(1, m),
        other => Failure::new(2, other.to_string()),
    }
}

/// Library errors raised by an estimator or the campaign runner.
fn estimator_error(e: Error) -> Failure {
    match e {
        Error::Io(m) => Failure::new(1, m),
        other => Failure::new(5, other.to_string()),
    }
}

type CliResult = Result<(), Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate(a) => cmd_simulate(a),
        Command::Estimate(a) => cmd_estimate(a),
        Command::Check(a) => cmd_check(a),
        Command::Campaign(a) => cmd_campaign(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn load_config(path: &Path) -> Result<RunConfig, Failure> {
    RunConfig::load(path).map_err(|e| match e {
        Error::Io(m) => Failure::new(1, m),
        other => Failure::new(2, format!("{}: {other}", path.display())),
    })
}

fn prepare_dir(dir: &Path) -> CliResult {
    fs::create_dir_all(dir).map_err(|e| Failure::new(1, format!("{}: {e}", dir.display())))
}

/// Prints the condition table and enforces it unless `force` is set.
fn gate_conditions(model: &ModelSpec, force: bool) -> CliResult {
    let report = check_model(model).map_err(input_error)?;
    let overall = report.overall();
    if overall == Verdict::Holds {
        return Ok(());
    }
    let bad: Vec<String> = report
        .rows
        .iter()
        .filter(|r| r.required && r.verdict != Verdict::Holds)
        .map(|r| {
            format!(
                "{} {} ({})",
                r.id.as_str(),
                r.verdict.as_str(),
                r.diagnostic
            )
        })
        .collect();
    if force {
        eprintln!("warning: proceeding despite conditions: {}", bad.join("; "));
        return Ok(());
    }
    let code = if overall == Verdict::Fails { 3 } else { 4 };
    Err(Failure::new(
        code,
        format!(
            "conditions not satisfied (use --force to override): {}",
            bad.join("; ")
        ),
    ))
}

fn cmd_simulate(a: SimulateArgs) -> CliResult {
    let started = io::unix_now();
    let cfg = load_config(&a.config)?;
    gate_conditions(&cfg.model, a.force)?;
    let seed = a.seed.or(cfg.seed).unwrap_or(0);
    let hash = cfg.hash();
    let dir = &a.common.out;
    prepare_dir(dir)?;

    let grid = uniform_time_grid(cfg.model.horizon, cfg.simulation.dt).map_err(input_error)?;
    let path = simulate(&cfg.model, &grid, seed, a.replication).map_err(input_error)?;
    io::write_path(&dir.join("path.csv"), &path, &hash).map_err(input_error)?;
    let mut files = vec!["path.csv".to_string(), "path.json".to_string()];

    if let Some(f) = &cfg.simulation.field {
        let x = uniform_space_grid(f.a, f.b, f.resolution).map_err(input_error)?;
        let field =
            reconstruct_field(&path, f.t, &x, f.truncation, f.derivative).map_err(input_error)?;
        io::write_field(&dir.join("field.csv"), &field, &path, &hash).map_err(input_error)?;
        files.extend(["field.csv".to_string(), "field.json".to_string()]);
    }
    RunManifest::write(dir, "simulate", &hash, seed, started, &files).map_err(input_error)?;
    println!(
        "simulated {} modes on {} time points (seed {seed}, replication {}) -> {}",
        path.modes(),
        grid.len(),
        a.replication,
        dir.display()
    );
    Ok(())
}

fn cmd_check(a: CheckArgs) -> CliResult {
    let cfg = load_config(&a.config)?;
    let report = check_model(&cfg.model).map_err(input_error)?;
    let table = io::conditions_csv(&report);
    print!("{table}");
    if let Some(dir) = &a.out {
        prepare_dir(dir)?;
        io::write_file(&dir.join("conditions.csv"), &table).map_err(input_error)?;
    }
    match report.overall() {
        Verdict::Holds => Ok(()),
        Verdict::Fails => Err(Failure::new(3, "a required condition fails")),
        Verdict::Undecided => Err(Failure::new(4, "a required condition is undecided")),
    }
}

fn cmd_campaign(a: CampaignArgs) -> CliResult {
    let started = io::unix_now();
    let cfg = load_config(&a.config)?;
    gate_conditions(&cfg.model, a.force)?;
    let seed = a.seed.or(cfg.seed).unwrap_or(0);
    let mut campaign = cfg.campaign_config(seed, a.workers);
    if let Some(m) = a.replications {
        campaign.replications = m;
    }
    campaign.validate().map_err(input_error)?;
    let hash = cfg.hash();
    let dir = &a.common.out;
    prepare_dir(dir)?;

    let summary = run_campaign(&campaign).map_err(estimator_error)?;
    let files = io::write_campaign(dir, &campaign, &summary, &hash).map_err(input_error)?;
    RunManifest::write(dir, "campaign", &hash, seed, started, &files).map_err(input_error)?;
    println!(
        "{:>5} {:>14} {:>9} {:>12} {:>12} {:>12} {:>8}",
        "N", "estimator", "param", "mean", "sd", "theory sd", "KS"
    );
    for r in &summary.rows {
        println!(
            "{:>5} {:>14} {:>9} {:>12.6} {:>12} {:>12.4e} {:>8}",
            r.n,
            r.estimator.as_str(),
            r.parameter.as_str(),
            r.mean,
            r.sd.map(|s| format!("{s:.4e}"))
                .unwrap_or_else(|| "-".into()),
            r.theoretical_sd,
            r.normality
                .as_ref()
                .map(|d| format!("{:.4}", d.ks))
                .unwrap_or_else(|| "-".into())
        );
    }
    Ok(())
}

fn require_noise(path: &FourierPath, noise: NoiseType, method: &str) -> CliResult {
    if path.model.noise == noise {
        Ok(())
    } else {
        Err(Failure::new(
            2,
            format!(
                "method {method} does not apply to {:?} data",
                path.model.noise
            ),
        ))
    }
}

fn cmd_estimate(a: EstimateArgs) -> CliResult {
    let started = io::unix_now();
    let dir = a.common.out.clone();
    match a.method {
        MethodArg::Qv | MethodArg::QvFd => estimate_spatial(&a, &dir, started),
        MethodArg::Drift2 | MethodArg::Drift3 => estimate_drift(&a, &dir, started),
        _ => estimate_fourier(&a, &dir, started),
    }
}

fn read_path_input(a: &EstimateArgs) -> Result<FourierPath, Failure> {
    io::read_path(&a.input).map_err(input_error)
}

fn finish_estimates(
    dir: &Path,
    started: f64,
    hash: &str,
    seed: u64,
    reports: &[EstimateReport],
) -> CliResult {
    prepare_dir(dir)?;
    let csv = io::estimates_csv(reports);
    io::write_file(&dir.join("estimates.csv"), &csv).map_err(input_error)?;
    RunManifest::write(
        dir,
        "estimate",
        hash,
        seed,
        started,
        &["estimates.csv".to_string()],
    )
    .map_err(input_error)?;
    print!("{csv}");
    Ok(())
}

fn sidecar_hash(input: &Path) -> String {
    fs::read_to_string(io::sidecar_path(input))
        .ok()
        .and_then(|s| serde_json::from_str::<io::Sidecar>(&s).ok())
        .map(|s| s.config_hash)
        .unwrap_or_default()
}

/// Drift times: `t1` defaults to the first grid step and `t2` to `2 t1`.
fn drift_times(a: &EstimateArgs, path: &FourierPath) -> Result<(f64, f64), Failure> {
    let t1 = match a.t1 {
        Some(t) => t,
        None => *path
            .time_grid
            .get(1)
            .ok_or_else(|| Failure::new(2, "path has a single time point"))?,
    };
    Ok((t1, a.t2.unwrap_or(2.0 * t1)))
}

fn estimate_fourier(a: &EstimateArgs, dir: &Path, started: f64) -> CliResult {
    let path = read_path_input(a)?;
    let hash = sidecar_hash(&a.input);
    let n = a.modes.unwrap_or(path.modes());
    let report = match a.method {
        MethodArg::SigmaFourier => {
            require_noise(&path, NoiseType::Additive, "sigma-fourier")?;
            let (t1, t2) = drift_times(a, &path)?;
            let lam = (1..=n)
                .map(|k| {
                    let obs = IncrementObservations::from_path(&path, k, t1, t2)?;
                    recover_drift_three_point(&obs).or_else(|_| recover_drift_two_point(&obs))
                })
                .collect::<Result<Vec<_>, _>>()
                .map_err(estimator_error)?;
            let t = a.t.unwrap_or(path.model.horizon);
            sigma_mle_fourier(&path, t, &lam).map_err(estimator_error)?
        }
        method => {
            require_noise(&path, NoiseType::Shell, "shell")?;
            let obs = ShellObservations::from_path(&path, a.t, Some(n)).map_err(input_error)?;
            match method {
                MethodArg::Mle => mle(&obs),
                MethodArg::Newton => mle_numeric(&obs, None),
                _ => {
                    let b = path.model.parameter_box;
                    let prior = FlatPrior {
                        theta: (b.theta[0], b.theta[1]),
                        vartheta: (b.sigma[0].powi(2), b.sigma[1].powi(2)),
                    };
                    bayes_posterior_mean(&obs, &prior, BayesOptions::default())
                }
            }
            .map_err(estimator_error)?
        }
    };
    finish_estimates(dir, started, &hash, path.seed, &[report])
}

fn estimate_drift(a: &EstimateArgs, dir: &Path, started: f64) -> CliResult {
    let path = read_path_input(a)?;
    require_noise(&path, NoiseType::Additive, "drift recovery")?;
    let (t1, t2) = drift_times(a, &path)?;
    let three = a.method == MethodArg::Drift3;
    let n = a.modes.unwrap_or(path.modes()).min(path.modes());
    let mut rows = Vec::with_capacity(n);
    for k in 1..=n {
        let obs = IncrementObservations::from_path(&path, k, t1, t2).map_err(input_error)?;
        let est = if three {
            recover_drift_three_point(&obs)
        } else {
            recover_drift_two_point(&obs)
        };
        rows.push(DriftRow {
            obs,
            method: if three { "drift3" } else { "drift2" },
            outcome: est
                .map(|l| (l, drift_residual(&obs, l, three)))
                .map_err(|e| e.to_string()),
        });
    }
    prepare_dir(dir)?;
    let csv = io::drift_csv(&rows);
    io::write_file(&dir.join("drift.csv"), &csv).map_err(input_error)?;
    let hash = sidecar_hash(&a.input);
    RunManifest::write(
        dir,
        "estimate",
        &hash,
        path.seed,
        started,
        &["drift.csv".to_string()],
    )
    .map_err(input_error)?;
    print!("{csv}");
    let failed = rows.iter().filter(|r| r.outcome.is_err()).count();
    if failed > 0 {
        return Err(Failure::new(
            5,
            format!("drift recovery failed for {failed} of {n} modes"),
        ));
    }
    Ok(())
}

fn estimate_spatial(a: &EstimateArgs, dir: &Path, started: f64) -> CliResult {
    let (x, values, side) = io::read_field(&a.input).map_err(input_error)?;
    let meta = side.field.as_ref().expect("field sidecar");
    let fd = a.method == MethodArg::QvFd;
    if meta.derivative == fd {
        let want = if fd { "u" } else { "u_x" };
        return Err(Failure::new(
            2,
            format!("this method needs samples of {want}"),
        ));
    }
    if side.model.noise != NoiseType::Additive {
        return Err(Failure::new(2, "spatial estimators apply to additive data"));
    }
    let known = match (a.known_sigma, a.known_theta) {
        (_, Some(t)) => Known::Theta(t),
        (Some(s), None) => Known::Sigma(s),
        (None, None) => Known::Sigma(side.model.parameters.sigma),
    };
    if x.len() < 2 {
        return Err(Failure::new(2, "field file has fewer than two samples"));
    }
    let full =
        SpatialIncrements::new(x[0], *x.last().unwrap(), meta.t, values).map_err(input_error)?;
    let m = full.intervals();
    let ends = if a.window_end.is_empty() {
        vec![full.b]
    } else {
        a.window_end.clone()
    };
    let mut reports = Vec::with_capacity(ends.len());
    for end in ends {
        let j = (((end - full.a) / (full.b - full.a)) * m as f64).round() as usize;
        let window = full.window(j.min(m)).map_err(input_error)?;
        let r = if fd {
            quad_var_estimators_fd(&window, known)
        } else {
            quad_var_estimators(&window, known)
        };
        reports.push(r.map_err(estimator_error)?);
    }
    finish_estimates(dir, started, &side.config_hash, side.seed, &reports)
}
