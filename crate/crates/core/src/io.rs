//! Run configuration, CSV files and the per-directory manifest.
//!
//! Reals are written with 17 significant digits (`{:.16e}`), which
//! round-trips every `f64` exactly. Every CSV has a header row.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::additive_inference::IncrementObservations;
use crate::conditions::ConditionReport;
use crate::error::{Error, Result};
use crate::montecarlo::{CampaignConfig, CampaignEstimator, CampaignSummary, Histogram};
use crate::report::EstimateReport;
use crate::simulate::{FieldSample, FourierPath};
use crate::spectra::ModelSpec;
use crate::stats::ks_critical_1pct;

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Optional physical-space output of `simulate`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldSection {
    pub t: f64,
    #[serde(default)]
    pub a: f64,
    #[serde(default = "default_b")]
    pub b: f64,
    pub resolution: f64,
    pub truncation: usize,
    /// Write `u_x` instead of `u`.
    #[serde(default)]
    pub derivative: bool,
}

fn default_b() -> f64 {
    std::f64::consts::PI
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationSection {
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub field: Option<FieldSection>,
}

fn default_dt() -> f64 {
    0.01
}

impl Default for SimulationSection {
    fn default() -> Self {
        SimulationSection {
            dt: default_dt(),
            field: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CampaignSection {
    #[serde(default = "default_replications")]
    pub replications: usize,
    /// Defaults to the model's mode count alone.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub estimators: Option<Vec<CampaignEstimator>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub observation_time: Option<f64>,
}

fn default_replications() -> usize {
    100
}

impl Default for CampaignSection {
    fn default() -> Self {
        CampaignSection {
            replications: default_replications(),
            sweep: None,
            estimators: None,
            observation_time: None,
        }
    }
}

/// Contents of a run configuration file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub model: ModelSpec,
    #[serde(default)]
    pub simulation: SimulationSection,
    #[serde(default)]
    pub campaign: CampaignSection,
}

impl RunConfig {
    /// Parses and validates a TOML document. Syntax and schema errors carry
    /// the offending line.
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| {
            let line = e
                .span()
                .map(|s| text[..s.start.min(text.len())].lines().count().max(1));
            let msg = e.message().trim().to_string();
            Error::InvalidModel(match line {
                Some(l) => format!("line {l}: {msg}"),
                None => msg,
            })
        })?;
        cfg.model.validate()?;
        if !(cfg.simulation.dt > 0.0) {
            return Err(Error::InvalidModel(format!(
                "simulation.dt must be positive, got {}",
                cfg.simulation.dt
            )));
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
        Self::parse(&text)
    }

    /// Canonical TOML text: fixed field order, defaults made explicit.
    pub fn canonical(&self) -> String {
        toml::to_string(self).expect("config is serializable")
    }

    /// SHA-256 of the canonical text, hex encoded.
    pub fn hash(&self) -> String {
        sha256_hex(self.canonical().as_bytes())
    }

    pub fn campaign_config(&self, seed: u64, workers: usize) -> CampaignConfig {
        let mut c = CampaignConfig::new(self.model.clone(), self.campaign.replications, seed);
        if let Some(s) = &self.campaign.sweep {
            c.sweep = s.clone();
        }
        if let Some(e) = &self.campaign.estimators {
            c.estimators = e.clone();
        }
        c.observation_time = self.campaign.observation_time;
        c.workers = workers;
        c
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn io_err(path: &Path, e: std::io::Error) -> Error {
    Error::Io(format!("{}: {e}", path.display()))
}

pub fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|e| io_err(path, e))
}

fn read_file(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| io_err(path, e))
}

/// 17 significant digits.
pub fn fmt_real(x: f64) -> String {
    format!("{x:.16e}")
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(fmt_real).unwrap_or_default()
}

fn parse_real(s: &str, line: usize) -> Result<f64> {
    s.trim()
        .parse()
        .map_err(|_| Error::Domain(format!("line {line}: cannot parse '{s}' as a number")))
}

/// Sidecar metadata of a path or field CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sidecar {
    pub seed: u64,
    pub replication: u64,
    pub config_hash: String,
    pub model: ModelSpec,
    /// Field files only: observation time, truncation and derivative flag.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub field: Option<FieldMeta>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldMeta {
    pub t: f64,
    pub truncation: usize,
    pub derivative: bool,
    pub tail_bound: f64,
}

pub fn sidecar_path(csv: &Path) -> PathBuf {
    csv.with_extension("json")
}

/// Wide path table: one row per mode with `k, mu, nu, q, p, xi` followed by
/// `u_k(t_j)` under headers `t=<t_j>`.
pub fn path_csv(path: &FourierPath) -> Result<String> {
    let mut s = String::from("k,mu,nu,q,p,xi");
    for t in &path.time_grid {
        write!(s, ",t={}", fmt_real(*t)).unwrap();
    }
    s.push('\n');
    let f = &path.model.families;
    for k in 1..=path.modes() {
        write!(
            s,
            "{k},{},{},{},{},{}",
            fmt_real(f.mu.eval(k)?),
            fmt_real(f.nu.eval(k)?),
            fmt_real(f.q.eval(k)?),
            fmt_real(f.p.eval(k)?),
            fmt_real(path.noise[k - 1])
        )
        .unwrap();
        for v in &path.values[k - 1] {
            write!(s, ",{}", fmt_real(*v)).unwrap();
        }
        s.push('\n');
    }
    Ok(s)
}

pub fn write_path(csv: &Path, path: &FourierPath, config_hash: &str) -> Result<()> {
    write_file(csv, &path_csv(path)?)?;
    let side = Sidecar {
        seed: path.seed,
        replication: path.replication,
        config_hash: config_hash.to_string(),
        model: path.model.clone(),
        field: None,
    };
    write_file(&sidecar_path(csv), &to_json(&side)?)
}

/// Reads a path CSV and its sidecar back into a [`FourierPath`].
pub fn read_path(csv: &Path) -> Result<FourierPath> {
    let side: Sidecar = serde_json::from_str(&read_file(&sidecar_path(csv))?)
        .map_err(|e| Error::Domain(format!("{}: {e}", sidecar_path(csv).display())))?;
    if side.field.is_some() {
        return Err(Error::Domain(format!(
            "{} is a field file, not a path",
            csv.display()
        )));
    }
    let text = read_file(csv)?;
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().unwrap_or_default().split(',').collect();
    if header.len() < 7 || header[..6] != ["k", "mu", "nu", "q", "p", "xi"] {
        return Err(Error::Domain(format!(
            "{}: not a path file (bad header)",
            csv.display()
        )));
    }
    let time_grid = header[6..]
        .iter()
        .map(|h| {
            h.strip_prefix("t=")
                .ok_or_else(|| Error::Domain(format!("line 1: bad time column '{h}'")))
                .and_then(|v| parse_real(v, 1))
        })
        .collect::<Result<Vec<_>>>()?;
    let (mut values, mut noise) = (Vec::new(), Vec::new());
    for (i, line) in lines.enumerate() {
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != header.len() {
            return Err(Error::Domain(format!(
                "line {}: expected {} columns",
                i + 2,
                header.len()
            )));
        }
        noise.push(parse_real(cells[5], i + 2)?);
        values.push(
            cells[6..]
                .iter()
                .map(|c| parse_real(c, i + 2))
                .collect::<Result<Vec<_>>>()?,
        );
    }
    let mut model = side.model;
    if values.is_empty() {
        return Err(Error::Domain(format!("{}: no modes", csv.display())));
    }
    model.modes = values.len();
    Ok(FourierPath {
        model,
        time_grid,
        values,
        noise,
        seed: side.seed,
        replication: side.replication,
    })
}

pub fn field_csv(field: &FieldSample) -> String {
    let mut s = String::from(if field.derivative { "x,u_x\n" } else { "x,u\n" });
    for (x, v) in field.x.iter().zip(&field.values) {
        writeln!(s, "{},{}", fmt_real(*x), fmt_real(*v)).unwrap();
    }
    s
}

pub fn write_field(
    csv: &Path,
    field: &FieldSample,
    path: &FourierPath,
    config_hash: &str,
) -> Result<()> {
    write_file(csv, &field_csv(field))?;
    let side = Sidecar {
        seed: path.seed,
        replication: path.replication,
        config_hash: config_hash.to_string(),
        model: path.model.clone(),
        field: Some(FieldMeta {
            t: field.t,
            truncation: field.truncation,
            derivative: field.derivative,
            tail_bound: field.tail_bound,
        }),
    };
    write_file(&sidecar_path(csv), &to_json(&side)?)
}

/// Reads a field CSV; returns the grid, the values and the sidecar.
pub fn read_field(csv: &Path) -> Result<(Vec<f64>, Vec<f64>, Sidecar)> {
    let side: Sidecar = serde_json::from_str(&read_file(&sidecar_path(csv))?)
        .map_err(|e| Error::Domain(format!("{}: {e}", sidecar_path(csv).display())))?;
    if side.field.is_none() {
        return Err(Error::Domain(format!(
            "{} is a path file, not a field",
            csv.display()
        )));
    }
    let text = read_file(csv)?;
    let mut lines = text.lines();
    let header = lines.next().unwrap_or_default();
    if header != "x,u" && header != "x,u_x" {
        return Err(Error::Domain(format!(
            "{}: not a field file (bad header)",
            csv.display()
        )));
    }
    let (mut xs, mut vs) = (Vec::new(), Vec::new());
    for (i, line) in lines.enumerate() {
        let (x, v) = line
            .split_once(',')
            .ok_or_else(|| Error::Domain(format!("line {}: expected 2 columns", i + 2)))?;
        xs.push(parse_real(x, i + 2)?);
        vs.push(parse_real(v, i + 2)?);
    }
    Ok((xs, vs, side))
}

pub const ESTIMATES_HEADER: &str =
    "method,n,theta,sigma,vartheta,se_theta,se_sigma,se_vartheta,diagnostics";

pub fn estimate_row(r: &EstimateReport) -> String {
    format!(
        "{},{},{},{},{},{},{},{},{}",
        r.method.as_str(),
        r.n,
        fmt_opt(r.theta),
        fmt_opt(r.sigma()),
        fmt_opt(r.vartheta),
        fmt_opt(r.se_theta),
        fmt_opt(r.se_sigma()),
        fmt_opt(r.se_vartheta),
        r.diagnostics.summary()
    )
}

pub fn estimates_csv(reports: &[EstimateReport]) -> String {
    let mut s = format!("{ESTIMATES_HEADER}\n");
    for r in reports {
        s.push_str(&estimate_row(r));
        s.push('\n');
    }
    s
}

/// One drift-recovery result.
#[derive(Debug, Clone, PartialEq)]
pub struct DriftRow {
    pub obs: IncrementObservations,
    pub method: &'static str,
    pub outcome: std::result::Result<(f64, f64), String>,
}

pub fn drift_csv(rows: &[DriftRow]) -> String {
    let mut s = String::from("k,t1,t2,method,theta_mu,relative_residual,status\n");
    for r in rows {
        let (est, res, status) = match &r.outcome {
            Ok((e, res)) => (fmt_real(*e), fmt_real(*res), "ok".to_string()),
            Err(msg) => (
                String::new(),
                String::new(),
                format!("error: {}", msg.replace(',', ";")),
            ),
        };
        writeln!(
            s,
            "{},{},{},{},{est},{res},{status}",
            r.obs.k,
            fmt_real(r.obs.t1),
            fmt_real(r.obs.t2),
            r.method
        )
        .unwrap();
    }
    s
}

pub fn conditions_csv(report: &ConditionReport) -> String {
    let mut s = String::from("condition,verdict,method,required,diagnostic\n");
    for r in &report.rows {
        writeln!(
            s,
            "{},{},{},{},{}",
            r.id.as_str(),
            r.verdict.as_str(),
            r.method.as_str(),
            r.required,
            r.diagnostic.replace(',', ";")
        )
        .unwrap();
    }
    s
}

fn to_json<T: Serialize>(v: &T) -> Result<String> {
    serde_json::to_string_pretty(v)
        .map(|mut s| {
            s.push('\n');
            s
        })
        .map_err(|e| Error::Domain(e.to_string()))
}

/// Writes `summary.csv`, `errors_N<n>.csv`, `qq_N<n>.csv`, `histograms.csv`
/// and `campaign.json`; returns the file names written.
pub fn write_campaign(
    dir: &Path,
    cfg: &CampaignConfig,
    summary: &CampaignSummary,
    config_hash: &str,
) -> Result<Vec<String>> {
    let mut files = BTreeMap::new();

    let mut s = String::from("n,estimator,parameter,truth,mean,sd,theoretical_sd,ks,ks_critical_1pct,failures,replications\n");
    for r in &summary.rows {
        writeln!(
            s,
            "{},{},{},{},{},{},{},{},{},{},{}",
            r.n,
            r.estimator.as_str(),
            r.parameter.as_str(),
            fmt_real(r.truth),
            fmt_real(r.mean),
            fmt_opt(r.sd),
            fmt_real(r.theoretical_sd),
            fmt_opt(r.normality.as_ref().map(|d| d.ks)),
            fmt_real(ks_critical_1pct(r.estimates.len())),
            r.failures,
            summary.replications
        )
        .unwrap();
    }
    files.insert("summary.csv".to_string(), s);

    let mut hist = String::from("n,estimator,parameter,bin_lo,bin_hi,count\n");
    for &n in &cfg.sweep {
        let mut errors = String::from("estimator,parameter,index,estimate,normalized_error\n");
        let mut qq = String::from("estimator,parameter,level,theoretical,empirical\n");
        for r in summary.rows.iter().filter(|r| r.n == n) {
            let (e, p) = (r.estimator.as_str(), r.parameter.as_str());
            for (i, (est, z)) in r.estimates.iter().zip(&r.normalized_errors).enumerate() {
                writeln!(errors, "{e},{p},{i},{},{}", fmt_real(*est), fmt_real(*z)).unwrap();
            }
            if let Some(d) = &r.normality {
                for (i, (th, em)) in d.qq.iter().enumerate() {
                    writeln!(
                        qq,
                        "{e},{p},{},{},{}",
                        fmt_real((i + 1) as f64 / 100.0),
                        fmt_real(*th),
                        fmt_real(*em)
                    )
                    .unwrap();
                }
            }
            let h = &r.histogram;
            writeln!(
                hist,
                "{n},{e},{p},-inf,{},{}",
                fmt_real(-Histogram::RANGE),
                h.underflow
            )
            .unwrap();
            for (i, c) in h.counts.iter().enumerate() {
                writeln!(
                    hist,
                    "{n},{e},{p},{},{},{c}",
                    fmt_real(h.edges[i]),
                    fmt_real(h.edges[i + 1])
                )
                .unwrap();
            }
            writeln!(
                hist,
                "{n},{e},{p},{},inf,{}",
                fmt_real(Histogram::RANGE),
                h.overflow
            )
            .unwrap();
        }
        files.insert(format!("errors_N{n}.csv"), errors);
        files.insert(format!("qq_N{n}.csv"), qq);
    }
    files.insert("histograms.csv".to_string(), hist);

    // The worker count is deliberately left out: outputs must not depend on it.
    #[derive(Serialize)]
    struct Echo<'a> {
        tool_version: &'a str,
        config_hash: &'a str,
        base_seed: u64,
        replications: usize,
        sweep: &'a [usize],
        estimators: &'a [CampaignEstimator],
        observation_time: f64,
        model: &'a ModelSpec,
    }
    let echo = Echo {
        tool_version: TOOL_VERSION,
        config_hash,
        base_seed: cfg.base_seed,
        replications: cfg.replications,
        sweep: &cfg.sweep,
        estimators: &cfg.estimators,
        observation_time: summary.observation_time,
        model: &cfg.model,
    };
    files.insert("campaign.json".to_string(), to_json(&echo)?);

    for (name, contents) in &files {
        write_file(&dir.join(name), contents)?;
    }
    Ok(files.into_keys().collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub name: String,
    pub bytes: u64,
    pub sha256: String,
}

/// `manifest.json`: provenance of everything in an output directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub command: String,
    pub config_hash: String,
    pub base_seed: u64,
    pub started_unix: f64,
    pub finished_unix: f64,
    pub files: Vec<ManifestEntry>,
}

pub const MANIFEST_NAME: &str = "manifest.json";

pub fn unix_now() -> f64 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs_f64())
        .unwrap_or(0.0)
}

impl RunManifest {
    /// Inventories `names` inside `dir` and writes the manifest there.
    pub fn write(
        dir: &Path,
        command: &str,
        config_hash: &str,
        base_seed: u64,
        started_unix: f64,
        names: &[String],
    ) -> Result<Self> {
        let mut files = Vec::with_capacity(names.len());
        for name in names {
            let p = dir.join(name);
            let bytes = fs::read(&p).map_err(|e| io_err(&p, e))?;
            files.push(ManifestEntry {
                name: name.clone(),
                bytes: bytes.len() as u64,
                sha256: sha256_hex(&bytes),
            });
        }
        files.sort_by(|a, b| a.name.cmp(&b.name));
        let m = RunManifest {
            tool_version: TOOL_VERSION.to_string(),
            command: command.to_string(),
            config_hash: config_hash.to_string(),
            base_seed,
            started_unix,
            finished_unix: unix_now(),
            files,
        };
        write_file(&dir.join(MANIFEST_NAME), &to_json(&m)?)?;
        Ok(m)
    }
}
