//! Replicated simulate-then-estimate campaigns and their normality diagnostics.
//!
//! Replication `r` draws its noise from substream `r` of the base seed, so the
//! outcome of a campaign does not depend on how replications are scheduled.
//! Results are collected in replication order and folded sequentially.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::additive_inference::sigma_mle_fourier;
use crate::error::{Error, Result};
use crate::report::EstimateReport;
use crate::shell_inference::{
    bayes_posterior_mean, mle, mle_numeric, BayesOptions, FisherInfo, FlatPrior, ShellObservations,
};
use crate::simulate::simulate;
use crate::spectra::{ModelSpec, NoiseType};
use crate::stats::{
    ks_statistic_normal, mean, moments, quantile_sorted, sample_sd, standard_normal_quantile,
    Moments,
};

/// Estimators a campaign can run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CampaignEstimator {
    /// Closed form when `p = 0`, Newton otherwise.
    Mle,
    Newton,
    Bayes,
    /// Additive-model variance MLE with the true drift `theta_0 mu_k` taken as known.
    SigmaFourier,
}

impl CampaignEstimator {
    pub fn as_str(self) -> &'static str {
        match self {
            CampaignEstimator::Mle => "mle",
            CampaignEstimator::Newton => "newton",
            CampaignEstimator::Bayes => "bayes",
            CampaignEstimator::SigmaFourier => "sigma-fourier",
        }
    }

    fn supports(self, noise: NoiseType) -> bool {
        matches!(
            (self, noise),
            (CampaignEstimator::SigmaFourier, NoiseType::Additive)
                | (
                    CampaignEstimator::Mle | CampaignEstimator::Newton | CampaignEstimator::Bayes,
                    NoiseType::Shell
                )
        )
    }
}

/// Estimated quantity reported in a summary row.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Parameter {
    Theta,
    Sigma,
    Vartheta,
}

impl Parameter {
    pub fn as_str(self) -> &'static str {
        match self {
            Parameter::Theta => "theta",
            Parameter::Sigma => "sigma",
            Parameter::Vartheta => "vartheta",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignConfig {
    pub model: ModelSpec,
    /// Number of replications `M`.
    pub replications: usize,
    /// Increasing mode counts at which every estimator is evaluated.
    pub sweep: Vec<usize>,
    pub estimators: Vec<CampaignEstimator>,
    pub base_seed: u64,
    pub workers: usize,
    /// Observation time; defaults to `min(0.01, T)`, where no mode underflows.
    pub observation_time: Option<f64>,
}

impl CampaignConfig {
    pub fn new(model: ModelSpec, replications: usize, base_seed: u64) -> Self {
        let estimators = match model.noise {
            NoiseType::Shell => vec![CampaignEstimator::Mle],
            NoiseType::Additive => vec![CampaignEstimator::SigmaFourier],
        };
        CampaignConfig {
            sweep: vec![model.modes],
            model,
            replications,
            estimators,
            base_seed,
            workers: 1,
            observation_time: None,
        }
    }

    pub fn observation_time(&self) -> f64 {
        self.observation_time
            .unwrap_or(self.model.horizon.min(0.01))
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        let bad = |m: String| Err(Error::Campaign(m));
        if self.replications == 0 {
            return bad("replications must be >= 1".into());
        }
        if self.sweep.is_empty()
            || self.sweep[0] == 0
            || self.sweep.windows(2).any(|w| w[1] <= w[0])
        {
            return bad(format!(
                "sweep must be nonempty, positive and increasing, got {:?}",
                self.sweep
            ));
        }
        if self.estimators.is_empty() {
            return bad("no estimators selected".into());
        }
        if let Some(e) = self
            .estimators
            .iter()
            .find(|e| !e.supports(self.model.noise))
        {
            return bad(format!(
                "estimator {} does not apply to a {:?} model",
                e.as_str(),
                self.model.noise
            ));
        }
        if self.workers == 0 {
            return bad("workers must be >= 1".into());
        }
        let t = self.observation_time();
        if !(t > 0.0 && t <= self.model.horizon) {
            return bad(format!(
                "observation time {t} outside (0, {}]",
                self.model.horizon
            ));
        }
        Ok(())
    }
}

/// Histogram of normalized errors on `[-4, 4]` with under- and overflow counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
    pub underflow: usize,
    pub overflow: usize,
}

impl Histogram {
    pub const BINS: usize = 40;
    pub const RANGE: f64 = 4.0;

    pub fn of(xs: &[f64]) -> Self {
        let width = 2.0 * Self::RANGE / Self::BINS as f64;
        let edges = (0..=Self::BINS)
            .map(|i| -Self::RANGE + i as f64 * width)
            .collect();
        let mut counts = vec![0; Self::BINS];
        let (mut underflow, mut overflow) = (0, 0);
        for &x in xs {
            if x < -Self::RANGE {
                underflow += 1;
            } else if x >= Self::RANGE {
                overflow += 1;
            } else {
                counts[(((x + Self::RANGE) / width) as usize).min(Self::BINS - 1)] += 1;
            }
        }
        Histogram {
            edges,
            counts,
            underflow,
            overflow,
        }
    }
}

/// KS distance to `N(0, 1)`, Q-Q pairs at levels `1%, ..., 99%`, and moments.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalityDiagnostics {
    pub ks: f64,
    /// `(theoretical, empirical)` quantiles, both ascending.
    pub qq: Vec<(f64, f64)>,
    pub moments: Moments,
}

pub fn normality_diagnostics(errors: &[f64]) -> Result<NormalityDiagnostics> {
    if errors.len() < 10 {
        return Err(Error::Domain(format!(
            "need at least 10 values, got {}",
            errors.len()
        )));
    }
    let mut sorted = errors.to_vec();
    sorted.sort_by(f64::total_cmp);
    let qq = (1..=99)
        .map(|i| {
            let p = i as f64 / 100.0;
            (standard_normal_quantile(p), quantile_sorted(&sorted, p))
        })
        .collect();
    Ok(NormalityDiagnostics {
        ks: ks_statistic_normal(errors),
        qq,
        moments: moments(errors),
    })
}

/// Aggregates for one `(N, estimator, parameter)` triple.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub n: usize,
    pub estimator: CampaignEstimator,
    pub parameter: Parameter,
    pub truth: f64,
    pub mean: f64,
    /// Absent for a single replication.
    pub sd: Option<f64>,
    /// Standard deviation predicted by the limit law.
    pub theoretical_sd: f64,
    pub failures: usize,
    /// Raw estimates in replication order (failed replications skipped).
    pub estimates: Vec<f64>,
    /// `(estimate - truth) / theoretical_sd`.
    pub normalized_errors: Vec<f64>,
    /// Present when at least 10 replications succeeded.
    pub normality: Option<NormalityDiagnostics>,
    pub histogram: Histogram,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CampaignSummary {
    pub rows: Vec<SummaryRow>,
    pub replications: usize,
    pub observation_time: f64,
}

impl CampaignSummary {
    pub fn row(
        &self,
        n: usize,
        estimator: CampaignEstimator,
        parameter: Parameter,
    ) -> Option<&SummaryRow> {
        self.rows
            .iter()
            .find(|r| r.n == n && r.estimator == estimator && r.parameter == parameter)
    }
}

/// Estimates of one replication, indexed `[sweep][estimator]`.
type Replication = Vec<Vec<Result<EstimateReport>>>;

fn run_replication(cfg: &CampaignConfig, model: &ModelSpec, r: usize) -> Replication {
    let t = cfg.observation_time();
    let path = match simulate(model, &[0.0, t], cfg.base_seed, r as u64) {
        Ok(p) => p,
        Err(e) => return vec![vec![Err(e); cfg.estimators.len()]; cfg.sweep.len()],
    };
    let shell_obs = match model.noise {
        NoiseType::Shell => Some(ShellObservations::from_path(&path, Some(t), None)),
        NoiseType::Additive => None,
    };
    let b = model.parameter_box;
    let prior = FlatPrior {
        theta: (b.theta[0], b.theta[1]),
        vartheta: (b.sigma[0].powi(2), b.sigma[1].powi(2)),
    };
    cfg.sweep
        .iter()
        .map(|&n| {
            cfg.estimators
                .iter()
                .map(|est| match est {
                    CampaignEstimator::SigmaFourier => {
                        let lam = (1..=n)
                            .map(|k| model.mu(k).map(|m| m * model.parameters.theta))
                            .collect::<Result<Vec<_>>>()?;
                        sigma_mle_fourier(&path, t, &lam)
                    }
                    _ => {
                        let obs = shell_obs
                            .as_ref()
                            .expect("shell model")
                            .clone()?
                            .truncate(n)?;
                        match est {
                            CampaignEstimator::Mle => mle(&obs),
                            CampaignEstimator::Newton => mle_numeric(&obs, None),
                            _ => bayes_posterior_mean(&obs, &prior, BayesOptions::default()),
                        }
                    }
                })
                .collect()
        })
        .collect()
}

/// Maximum tolerated failure rate per `(N, estimator)`.
pub const MAX_FAILURE_RATE: f64 = 0.01;

/// Runs all replications on a pool of `cfg.workers` threads and aggregates
/// them per `(N, estimator, parameter)`.
pub fn run_campaign(cfg: &CampaignConfig) -> Result<CampaignSummary> {
    cfg.validate()?;
    let mut model = cfg.model.clone();
    model.modes = *cfg.sweep.last().expect("validated");
    model.validate()?;

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .map_err(|e| Error::Campaign(format!("thread pool: {e}")))?;
    let results: Vec<Replication> = pool.install(|| {
        (0..cfg.replications)
            .into_par_iter()
            .map(|r| run_replication(cfg, &model, r))
            .collect()
    });

    let theta0 = model.parameters.theta;
    let sigma0 = model.parameters.sigma;
    let vartheta0 = sigma0 * sigma0;
    let mut rows = Vec::new();
    for (si, &n) in cfg.sweep.iter().enumerate() {
        for (ei, &est) in cfg.estimators.iter().enumerate() {
            let mut ok = Vec::with_capacity(cfg.replications);
            let mut failures = 0;
            let mut first_error = None;
            for rep in &results {
                match &rep[si][ei] {
                    Ok(r) => ok.push(r),
                    Err(e) => {
                        failures += 1;
                        first_error.get_or_insert_with(|| e.clone());
                    }
                }
            }
            if failures as f64 > MAX_FAILURE_RATE * cfg.replications as f64 || ok.is_empty() {
                return Err(Error::Campaign(format!(
                    "{} of {} replications failed for {} at N = {n}; first error: {}",
                    failures,
                    cfg.replications,
                    est.as_str(),
                    first_error.map(|e| e.to_string()).unwrap_or_default()
                )));
            }
            let params: Vec<(Parameter, f64, f64, Vec<f64>)> = match model.noise {
                NoiseType::Shell => {
                    let f = &model.families;
                    let fi = FisherInfo::from_coefficients(
                        &f.mu.values(n)?,
                        &f.q.values(n)?,
                        &f.p.values(n)?,
                        vartheta0,
                    );
                    vec![
                        (
                            Parameter::Theta,
                            theta0,
                            fi.se_theta(),
                            ok.iter().map(|r| r.theta.unwrap_or(f64::NAN)).collect(),
                        ),
                        (
                            Parameter::Sigma,
                            sigma0,
                            fi.se_sigma(),
                            ok.iter().map(|r| r.sigma().unwrap_or(f64::NAN)).collect(),
                        ),
                    ]
                }
                NoiseType::Additive => vec![(
                    Parameter::Vartheta,
                    vartheta0,
                    (2.0 / n as f64).sqrt() * vartheta0,
                    ok.iter().map(|r| r.vartheta.unwrap_or(f64::NAN)).collect(),
                )],
            };
            for (parameter, truth, theoretical_sd, estimates) in params {
                let normalized_errors: Vec<f64> = estimates
                    .iter()
                    .map(|e| (e - truth) / theoretical_sd)
                    .collect();
                rows.push(SummaryRow {
                    n,
                    estimator: est,
                    parameter,
                    truth,
                    mean: mean(&estimates),
                    sd: sample_sd(&estimates),
                    theoretical_sd,
                    failures,
                    normality: normality_diagnostics(&normalized_errors).ok(),
                    histogram: Histogram::of(&normalized_errors),
                    estimates,
                    normalized_errors,
                });
            }
        }
    }
    Ok(CampaignSummary {
        rows,
        replications: cfg.replications,
        observation_time: cfg.observation_time(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::shell_inference::mle as shell_mle;
    use crate::simulate::simulate_shell;
    use crate::spectra::{example_additive, example_shell};
    use crate::stats::ks_critical_1pct;

    #[test]
    fn single_replication_matches_direct_estimate() {
        let mut cfg = CampaignConfig::new(example_shell(), 1, 11);
        cfg.sweep = vec![60];
        let s = run_campaign(&cfg).unwrap();
        let row = s.row(60, CampaignEstimator::Mle, Parameter::Theta).unwrap();
        assert_eq!(row.sd, None);
        assert!(row.normality.is_none());
        let path = simulate_shell(&example_shell(), &[0.0, 0.01], 11, 0).unwrap();
        let direct = shell_mle(&ShellObservations::from_path(&path, None, None).unwrap()).unwrap();
        assert_eq!(row.mean, direct.theta.unwrap());
    }

    #[test]
    fn workers_do_not_change_results() {
        let mut cfg = CampaignConfig::new(example_shell(), 64, 5);
        cfg.sweep = vec![10, 30];
        cfg.estimators = vec![CampaignEstimator::Mle, CampaignEstimator::Newton];
        let a = run_campaign(&cfg).unwrap();
        cfg.workers = 4;
        let b = run_campaign(&cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn estimator_must_match_model() {
        let mut cfg = CampaignConfig::new(example_additive(), 5, 1);
        cfg.estimators = vec![CampaignEstimator::Mle];
        assert!(matches!(run_campaign(&cfg), Err(Error::Campaign(_))));
    }

    #[test]
    fn normal_sample_passes_ks_and_qq_sorted() {
        let xs = crate::simulate::draw_noise(3, 0, 5000);
        let d = normality_diagnostics(&xs).unwrap();
        assert!(d.ks < ks_critical_1pct(5000));
        assert!(d.qq.windows(2).all(|w| w[1].0 > w[0].0 && w[1].1 >= w[0].1));
        assert!(normality_diagnostics(&xs[..9]).is_err());
    }

    #[test]
    fn histogram_counts_everything() {
        let xs = [-5.0, -4.0, 0.0, 3.99, 4.0, 10.0];
        let h = Histogram::of(&xs);
        assert_eq!(h.underflow, 1);
        assert_eq!(h.overflow, 2);
        assert_eq!(h.counts.iter().sum::<usize>(), 3);
        assert_eq!(h.counts[0], 1);
    }
}
