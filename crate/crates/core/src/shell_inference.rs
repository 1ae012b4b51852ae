//! Joint estimation of `(theta, vartheta = sigma^2)` in the shell model.
//!
//! Everything is driven by the per-mode growth rates
//! `Y_k = ln(u_k(t) / u_k(0)) / t`, which are independent Gaussians with mean
//! `-(theta mu_k + nu_k)` and standard deviation `w_k = sqrt(vartheta) q_k + p_k`.

use crate::error::{Error, Result};
use crate::report::{Diagnostics, EstimateReport, EstimatorMethod, Flag};
use crate::simulate::FourierPath;
use crate::spectra::NoiseType;
use crate::stats::gauss_legendre;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Growth rates `Y_k` together with the known coefficients of the first `N` modes.
#[derive(Debug, Clone, PartialEq)]
pub struct ShellObservations {
    /// Observation time used to form `Y_k`.
    pub t: f64,
    pub y: Vec<f64>,
    pub mu: Vec<f64>,
    pub nu: Vec<f64>,
    pub q: Vec<f64>,
    pub p: Vec<f64>,
}

impl ShellObservations {
    pub fn new(
        t: f64,
        y: Vec<f64>,
        mu: Vec<f64>,
        nu: Vec<f64>,
        q: Vec<f64>,
        p: Vec<f64>,
    ) -> Result<Self> {
        let n = y.len();
        if n == 0
            || [mu.len(), nu.len(), q.len(), p.len()]
                .iter()
                .any(|&l| l != n)
        {
            return Err(Error::Domain(
                "observation vectors must be nonempty and of equal length".into(),
            ));
        }
        if !(t > 0.0) {
            return Err(Error::Domain(format!(
                "observation time must be positive, got {t}"
            )));
        }
        if y.iter().chain(&mu).chain(&nu).any(|v| !v.is_finite()) {
            return Err(Error::Domain("non-finite observation".into()));
        }
        if q.iter().any(|v| !(*v > 0.0)) || p.iter().any(|v| !(*v >= 0.0)) {
            return Err(Error::Domain("need q_k > 0 and p_k >= 0".into()));
        }
        Ok(ShellObservations { t, y, mu, nu, q, p })
    }

    /// Forms `Y_k` from a simulated shell path at time `t` (default: the
    /// earliest positive grid time) for the first `n` modes (default: all).
    ///
    /// `Y_k` does not depend on `t` under the model; the rate at the last grid
    /// time is cross-checked and a mismatch is reported as inconsistent data.
    pub fn from_path(path: &FourierPath, t: Option<f64>, n: Option<usize>) -> Result<Self> {
        if path.model.noise != NoiseType::Shell {
            return Err(Error::Unsupported(
                "shell inference on an additive path".into(),
            ));
        }
        let n = n.unwrap_or(path.modes());
        if n == 0 || n > path.modes() {
            return Err(Error::Domain(format!(
                "requested {n} modes, path has {}",
                path.modes()
            )));
        }
        let t = match t {
            Some(t) => t,
            None => *path
                .time_grid
                .iter()
                .find(|s| **s > 0.0)
                .ok_or_else(|| Error::Domain("path has no positive observation time".into()))?,
        };
        let j = path
            .time_index(t)
            .ok_or_else(|| Error::Domain(format!("time {t} not on the path grid")))?;
        let last = path.time_grid.len() - 1;
        let t_last = path.time_grid[last];
        let mut y = Vec::with_capacity(n);
        for row in &path.values[..n] {
            let ratio = row[j] / row[0];
            if !(ratio > 0.0 && ratio.is_finite()) {
                return Err(Error::Inconsistent(format!(
                    "u_k(t)/u_k(0) = {ratio} is not positive"
                )));
            }
            let yk = ratio.ln() / t;
            // Late values may underflow; only normal ones are comparable.
            let late = row[last] / row[0];
            let check = late.ln() / t_last;
            if late.is_normal() && late > 0.0 && (check - yk).abs() > 1e-8 * (1.0 + yk.abs()) {
                return Err(Error::Inconsistent(format!(
                    "growth rate depends on time: {yk} at t = {t}, {check} at t = {t_last}"
                )));
            }
            y.push(yk);
        }
        let f = &path.model.families;
        ShellObservations::new(
            t,
            y,
            f.mu.values(n)?,
            f.nu.values(n)?,
            f.q.values(n)?,
            f.p.values(n)?,
        )
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    /// First `n` modes.
    pub fn truncate(&self, n: usize) -> Result<Self> {
        if n == 0 || n > self.len() {
            return Err(Error::Domain(format!(
                "cannot take {n} of {} modes",
                self.len()
            )));
        }
        Ok(ShellObservations {
            t: self.t,
            y: self.y[..n].to_vec(),
            mu: self.mu[..n].to_vec(),
            nu: self.nu[..n].to_vec(),
            q: self.q[..n].to_vec(),
            p: self.p[..n].to_vec(),
        })
    }

    pub fn p_is_zero(&self) -> bool {
        self.p.iter().all(|p| *p == 0.0)
    }

    /// `Y_k + theta mu_k + nu_k`.
    fn residual(&self, k: usize, theta: f64) -> f64 {
        self.y[k] + theta * self.mu[k] + self.nu[k]
    }
}

fn check_vartheta(vartheta: f64) -> Result<()> {
    if vartheta > 0.0 && vartheta.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!(
            "vartheta must be positive, got {vartheta}"
        )))
    }
}

/// `ln L_N(theta, vartheta)`.
pub fn log_likelihood(obs: &ShellObservations, theta: f64, vartheta: f64) -> Result<f64> {
    check_vartheta(vartheta)?;
    let s = vartheta.sqrt();
    let mut acc = -0.5 * obs.len() as f64 * LN_2PI;
    for k in 0..obs.len() {
        let w = s * obs.q[k] + obs.p[k];
        let r = obs.residual(k, theta);
        acc -= w.ln() + 0.5 * (r / w).powi(2);
    }
    Ok(acc)
}

/// Gradient of [`log_likelihood`] in `(theta, vartheta)`.
pub fn score(obs: &ShellObservations, theta: f64, vartheta: f64) -> Result<[f64; 2]> {
    check_vartheta(vartheta)?;
    let s = vartheta.sqrt();
    let (mut gt, mut gv) = (0.0, 0.0);
    for k in 0..obs.len() {
        let w = s * obs.q[k] + obs.p[k];
        let r = obs.residual(k, theta);
        gt -= r * obs.mu[k] / (w * w);
        gv += (r * r / (w * w * w) - 1.0 / w) * obs.q[k] / (2.0 * s);
    }
    Ok([gt, gv])
}

/// Diagonal Fisher information of `(theta, vartheta)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FisherInfo {
    /// `Psi_N = sum mu_k^2 / (sqrt(vartheta) q_k + p_k)^2`.
    pub psi: f64,
    /// `Phi_N = (1/2) sum q_k^2 / (vartheta q_k + sqrt(vartheta) p_k)^2`.
    pub phi: f64,
    pub vartheta: f64,
}

impl FisherInfo {
    pub fn new(obs: &ShellObservations, vartheta: f64) -> Self {
        Self::from_coefficients(&obs.mu, &obs.q, &obs.p, vartheta)
    }

    pub fn from_coefficients(mu: &[f64], q: &[f64], p: &[f64], vartheta: f64) -> Self {
        let s = vartheta.sqrt();
        let (mut psi, mut phi) = (0.0, 0.0);
        for k in 0..mu.len() {
            let w = s * q[k] + p[k];
            psi += (mu[k] / w).powi(2);
            phi += (q[k] / (vartheta * q[k] + s * p[k])).powi(2);
        }
        FisherInfo {
            psi,
            phi: 0.5 * phi,
            vartheta,
        }
    }

    /// Information for `sigma`: `4 vartheta Phi_N`.
    pub fn phi_sigma(&self) -> f64 {
        4.0 * self.vartheta * self.phi
    }

    pub fn se_theta(&self) -> f64 {
        1.0 / self.psi.sqrt()
    }

    pub fn se_vartheta(&self) -> f64 {
        1.0 / self.phi.sqrt()
    }

    pub fn se_sigma(&self) -> f64 {
        1.0 / self.phi_sigma().sqrt()
    }
}

fn with_fisher(
    mut report: EstimateReport,
    obs: &ShellObservations,
    theta: f64,
    vartheta: f64,
) -> EstimateReport {
    report.theta = Some(theta);
    report.vartheta = Some(vartheta);
    if vartheta > 0.0 {
        let fi = FisherInfo::new(obs, vartheta);
        report.se_theta = Some(fi.se_theta());
        report.se_vartheta = Some(fi.se_vartheta());
    } else {
        // Information is infinite at vartheta = 0 when p = 0.
        let fi = FisherInfo::new(obs, vartheta);
        report.se_theta = Some(if fi.psi.is_finite() {
            fi.se_theta()
        } else {
            0.0
        });
        report.se_vartheta = Some(0.0);
        report.diagnostics.flags.push(Flag::DegenerateVariance);
    }
    report
}

/// `theta` minimizing the weighted residuals with weights `1 / den_k`.
fn weighted_theta(obs: &ShellObservations, den: impl Fn(usize) -> f64) -> f64 {
    let (mut num, mut d) = (0.0, 0.0);
    for k in 0..obs.len() {
        let w2 = den(k);
        num += obs.mu[k] * (obs.y[k] + obs.nu[k]) / w2;
        d += obs.mu[k] * obs.mu[k] / w2;
    }
    -num / d
}

fn closed_form_values(obs: &ShellObservations) -> (f64, f64) {
    let theta = weighted_theta(obs, |k| obs.q[k] * obs.q[k]);
    let vartheta = (0..obs.len())
        .map(|k| (obs.residual(k, theta) / obs.q[k]).powi(2))
        .sum::<f64>()
        / obs.len() as f64;
    (theta, vartheta)
}

/// Closed-form joint MLE, valid when every `p_k = 0`:
/// `theta = -sum mu_k (Y_k + nu_k) / q_k^2 / sum (mu_k / q_k)^2`,
/// `vartheta = (1/N) sum (Y_k + theta mu_k + nu_k)^2 / q_k^2`.
pub fn mle_closed_form(obs: &ShellObservations) -> Result<EstimateReport> {
    if !obs.p_is_zero() {
        return Err(Error::Unsupported(
            "closed-form MLE needs p_k = 0 for all k".into(),
        ));
    }
    let (theta, vartheta) = closed_form_values(obs);
    Ok(with_fisher(
        EstimateReport::new(EstimatorMethod::ClosedForm, obs.len()),
        obs,
        theta,
        vartheta,
    ))
}

/// Convergence threshold on the Fisher-scaled gradient norm.
pub const NEWTON_TOLERANCE: f64 = 1e-10;
pub const NEWTON_MAX_ITER: usize = 100;
const MAX_PHI_STEP: f64 = 5.0;

/// Log-likelihood, gradient and Hessian in `(theta, phi = ln vartheta)`.
fn local_quadratic(
    obs: &ShellObservations,
    theta: f64,
    phi: f64,
) -> (f64, [f64; 2], [[f64; 3]; 1]) {
    let s = (0.5 * phi).exp();
    let mut ll = -0.5 * obs.len() as f64 * LN_2PI;
    let (mut gt, mut gp) = (0.0, 0.0);
    let (mut htt, mut htp, mut hpp) = (0.0, 0.0, 0.0);
    for k in 0..obs.len() {
        let w = s * obs.q[k] + obs.p[k];
        let a = 0.5 * s * obs.q[k]; // dw/dphi; also d2w/dphi2 = a/2
        let r = obs.residual(k, theta);
        let (w2, w3) = (w * w, w * w * w);
        let mu = obs.mu[k];
        ll -= w.ln() + 0.5 * r * r / w2;
        gt -= r * mu / w2;
        gp += -a / w + r * r * a / w3;
        htt -= mu * mu / w2;
        htp += 2.0 * r * mu * a / w3;
        hpp += -0.5 * a / w + a * a / w2 + r * r * (0.5 * a / w3 - 3.0 * a * a / (w2 * w2));
    }
    (ll, [gt, gp], [[htt, htp, hpp]])
}

fn ll_at(obs: &ShellObservations, theta: f64, phi: f64) -> f64 {
    let s = (0.5 * phi).exp();
    let mut ll = -0.5 * obs.len() as f64 * LN_2PI;
    for k in 0..obs.len() {
        let w = s * obs.q[k] + obs.p[k];
        let r = obs.residual(k, theta);
        ll -= w.ln() + 0.5 * (r / w).powi(2);
    }
    ll
}

/// Damped Newton search for a stationary point of the log-likelihood, with
/// `vartheta = e^phi` kept positive.
///
/// Starts from the closed-form estimate computed as if `p = 0` unless `init`
/// is given. Falls back to a Fisher-scoring step whenever the Hessian is not
/// negative definite, and backtracks until the likelihood does not decrease.
pub fn mle_numeric(obs: &ShellObservations, init: Option<(f64, f64)>) -> Result<EstimateReport> {
    if obs.len() < 2 {
        return Err(Error::Domain("numeric MLE needs at least two modes".into()));
    }
    let (mut theta, v0) = init.unwrap_or_else(|| closed_form_values(obs));
    let v0 = if v0 > 0.0 && v0.is_finite() { v0 } else { 1.0 };
    let mut phi = v0.ln();
    let mut diagnostics = Diagnostics::default();
    let mut grad_norm = f64::INFINITY;
    let mut converged = false;
    let mut iterations = 0;

    for it in 0..=NEWTON_MAX_ITER {
        iterations = it;
        let (ll, g, [[htt, htp, hpp]]) = local_quadratic(obs, theta, phi);
        let vartheta = phi.exp();
        let fi = FisherInfo::new(obs, vartheta);
        // d ln L / d vartheta = g_phi / vartheta.
        grad_norm = (g[0] * g[0] / fi.psi + (g[1] / vartheta).powi(2) / fi.phi).sqrt();
        if grad_norm < NEWTON_TOLERANCE {
            converged = true;
            break;
        }
        if it == NEWTON_MAX_ITER {
            break;
        }
        let det = htt * hpp - htp * htp;
        let (dt, dp) = if htt < 0.0 && det > 0.0 {
            (
                (-hpp * g[0] + htp * g[1]) / det,
                (htp * g[0] - htt * g[1]) / det,
            )
        } else {
            // Fisher scoring: information of phi is vartheta^2 Phi_N.
            (g[0] / fi.psi, g[1] / (vartheta * vartheta * fi.phi))
        };
        // Far from the optimum a full step can move phi by hundreds and
        // overflow w^2; shrink the whole step so phi moves at most MAX_PHI_STEP.
        let shrink = (MAX_PHI_STEP / dp.abs()).min(1.0);
        let (dt, dp) = (dt * shrink, dp * shrink);
        let mut step = 1.0;
        let mut accepted = false;
        for _ in 0..60 {
            let (nt, np) = (theta + step * dt, phi + step * dp);
            let nll = ll_at(obs, nt, np);
            if nll.is_finite() && nll >= ll - 1e-12 * ll.abs().max(1.0) {
                theta = nt;
                phi = np;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            // No ascent possible: accept if the gradient is at roundoff level.
            converged = grad_norm < 1e-6;
            break;
        }
        if phi < v0.ln() - BOUNDARY_DEPTH {
            if let Some(theta_b) = boundary_maximum(obs) {
                diagnostics.iterations = Some(it + 1);
                diagnostics.grad_norm = Some(0.0);
                diagnostics.flags.push(Flag::BoundaryEscape);
                let mut report = EstimateReport::new(EstimatorMethod::Newton, obs.len());
                report.diagnostics = diagnostics;
                return Ok(with_fisher(report, obs, theta_b, 0.0));
            }
        }
    }

    diagnostics.iterations = Some(iterations);
    diagnostics.grad_norm = Some(grad_norm);
    if !converged {
        return Err(Error::NonConvergence {
            iterations,
            grad_norm,
        });
    }
    let mut report = EstimateReport::new(EstimatorMethod::Newton, obs.len());
    report.diagnostics = diagnostics;
    Ok(with_fisher(report, obs, theta, phi.exp()))
}

/// How far (in `ln vartheta`) below the start the iterate may go before the
/// boundary `vartheta = 0` is examined.
const BOUNDARY_DEPTH: f64 = 30.0;

/// Maximizer on the boundary `vartheta = 0`, if it is a local maximum of the
/// constrained problem.
///
/// At `vartheta = 0` the widths reduce to `p_k`, so `theta` is a weighted least
/// squares fit with weights `1 / p_k^2`. The boundary is a maximum when the
/// one-sided derivative in `sqrt(vartheta)`, `sum q_k (r_k^2 / p_k^3 - 1 / p_k)`,
/// is not positive.
fn boundary_maximum(obs: &ShellObservations) -> Option<f64> {
    if obs.p.contains(&0.0) {
        return None;
    }
    let theta = weighted_theta(obs, |k| obs.p[k] * obs.p[k]);
    let slope: f64 = (0..obs.len())
        .map(|k| {
            let r = obs.residual(k, theta);
            obs.q[k] * (r * r / obs.p[k].powi(3) - 1.0 / obs.p[k])
        })
        .sum();
    (slope <= 0.0).then_some(theta)
}

/// Joint MLE: closed form when `p = 0`, Newton otherwise.
pub fn mle(obs: &ShellObservations) -> Result<EstimateReport> {
    if obs.p_is_zero() {
        mle_closed_form(obs)
    } else {
        mle_numeric(obs, None)
    }
}

// ---------------------------------------------------------------------------
// Bayesian estimation

/// Prior density on `(theta, vartheta)`, supported in a box.
pub trait Prior: Sync {
    /// Log density up to an additive constant; `-inf` outside the support.
    fn ln_density(&self, theta: f64, vartheta: f64) -> f64;

    fn theta_support(&self) -> (f64, f64) {
        (f64::NEG_INFINITY, f64::INFINITY)
    }

    fn vartheta_support(&self) -> (f64, f64) {
        (0.0, f64::INFINITY)
    }

    /// Per-coordinate `(mean, sd)` when the prior is close to a product of
    /// normals; used to place the quadrature window.
    fn gaussian_hint(&self) -> Option<[(f64, f64); 2]> {
        None
    }
}

/// Uniform density on a box; unbounded sides make it improper.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlatPrior {
    pub theta: (f64, f64),
    pub vartheta: (f64, f64),
}

impl Default for FlatPrior {
    fn default() -> Self {
        FlatPrior {
            theta: (f64::NEG_INFINITY, f64::INFINITY),
            vartheta: (0.0, f64::INFINITY),
        }
    }
}

impl Prior for FlatPrior {
    fn ln_density(&self, theta: f64, vartheta: f64) -> f64 {
        if theta >= self.theta.0
            && theta <= self.theta.1
            && vartheta >= self.vartheta.0
            && vartheta <= self.vartheta.1
        {
            0.0
        } else {
            f64::NEG_INFINITY
        }
    }

    fn theta_support(&self) -> (f64, f64) {
        self.theta
    }

    fn vartheta_support(&self) -> (f64, f64) {
        (self.vartheta.0.max(0.0), self.vartheta.1)
    }
}

/// Independent normals on `theta` and `vartheta`, truncated to `vartheta > 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianPrior {
    pub theta: (f64, f64),
    pub vartheta: (f64, f64),
}

impl Prior for GaussianPrior {
    fn ln_density(&self, theta: f64, vartheta: f64) -> f64 {
        if vartheta <= 0.0 {
            return f64::NEG_INFINITY;
        }
        let zt = (theta - self.theta.0) / self.theta.1;
        let zv = (vartheta - self.vartheta.0) / self.vartheta.1;
        -0.5 * (zt * zt + zv * zv)
    }

    fn gaussian_hint(&self) -> Option<[(f64, f64); 2]> {
        Some([self.theta, self.vartheta])
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BayesOptions {
    /// Gauss-Legendre nodes per coordinate.
    pub nodes: usize,
    /// Window half-width in standard errors.
    pub half_width: f64,
    /// Tolerated posterior mass in the outer 5% band of the window.
    pub edge_mass_tolerance: f64,
    /// Number of doublings of the window before flagging.
    pub max_widenings: usize,
}

impl Default for BayesOptions {
    fn default() -> Self {
        BayesOptions {
            nodes: 128,
            half_width: 8.0,
            edge_mass_tolerance: 1e-6,
            max_widenings: 3,
        }
    }
}

fn combine(center: f64, se: f64, hint: Option<(f64, f64)>) -> (f64, f64) {
    match hint {
        Some((m, sd)) if sd > 0.0 => {
            let prec = 1.0 / (se * se) + 1.0 / (sd * sd);
            (
                (center / (se * se) + m / (sd * sd)) / prec,
                1.0 / prec.sqrt(),
            )
        }
        _ => (center, se),
    }
}

/// Posterior mean of `(theta, vartheta)` by tensor Gauss-Legendre quadrature
/// on a window of `half_width` standard errors around the MLE.
///
/// Log-posterior values are stabilized by subtracting their maximum. The
/// reported standard errors are posterior standard deviations.
pub fn bayes_posterior_mean(
    obs: &ShellObservations,
    prior: &dyn Prior,
    opts: BayesOptions,
) -> Result<EstimateReport> {
    let (t_sup, v_sup) = (prior.theta_support(), prior.vartheta_support());
    let reference = if obs.len() >= 2 {
        mle(obs).map(|r| (r.theta.unwrap(), r.vartheta.unwrap()))
    } else {
        Err(Error::Domain("single mode".into()))
    };
    let (theta_c, mut vartheta_c) = reference.unwrap_or_else(|_| closed_form_values(obs));
    // A residual variance at roundoff level relative to the data counts as zero.
    let scale = (0..obs.len())
        .map(|k| ((obs.y[k] + obs.nu[k]) / obs.q[k]).powi(2))
        .sum::<f64>()
        / obs.len() as f64;
    if !(vartheta_c > 1e-20 * scale) {
        if v_sup.0.is_finite() && v_sup.1.is_finite() {
            vartheta_c = 0.5 * (v_sup.0 + v_sup.1);
        } else {
            return Err(Error::Degenerate(
                "variance estimate is zero and the prior does not bound vartheta".into(),
            ));
        }
    }
    // Use the widest variance in the support window for the theta scale.
    let fi = FisherInfo::new(
        obs,
        vartheta_c
            .max(if v_sup.1.is_finite() { v_sup.1 } else { 0.0 })
            .max(vartheta_c),
    );
    let fi_c = FisherInfo::new(obs, vartheta_c);
    let hint = prior.gaussian_hint();
    let (tc, tse) = combine(theta_c, fi.se_theta(), hint.map(|h| h[0]));
    let (vc, vse) = combine(vartheta_c, fi_c.se_vartheta(), hint.map(|h| h[1]));

    let (x, wq) = gauss_legendre(opts.nodes);
    let mut half = opts.half_width;
    let mut flags = Vec::new();
    for attempt in 0..=opts.max_widenings {
        let tw = (
            (tc - half * tse).max(t_sup.0),
            (tc + half * tse).min(t_sup.1),
        );
        let mut vw = (
            (vc - half * vse).max(v_sup.0).max(0.0),
            (vc + half * vse).min(v_sup.1),
        );
        if !(vw.1 > vw.0) && v_sup.1.is_finite() {
            vw = (v_sup.0.max(0.0), v_sup.1);
        }
        if !(tw.1 > tw.0 && vw.1 > vw.0) {
            return Err(Error::Degenerate("empty quadrature window".into()));
        }
        let map = |w: (f64, f64), s: f64| 0.5 * (w.0 + w.1) + 0.5 * (w.1 - w.0) * s;
        let thetas: Vec<f64> = x.iter().map(|&s| map(tw, s)).collect();
        let varthetas: Vec<f64> = x.iter().map(|&s| map(vw, s)).collect();

        // For fixed vartheta the log-likelihood is quadratic in theta.
        let mut lp = vec![f64::NEG_INFINITY; opts.nodes * opts.nodes];
        for (j, &v) in varthetas.iter().enumerate() {
            if v <= 0.0 {
                continue;
            }
            let s = v.sqrt();
            let (mut c0, mut a, mut b, mut c) = (-0.5 * obs.len() as f64 * LN_2PI, 0.0, 0.0, 0.0);
            for k in 0..obs.len() {
                let w = s * obs.q[k] + obs.p[k];
                let w2 = w * w;
                let d = obs.y[k] + obs.nu[k];
                c0 -= w.ln();
                a += d * d / w2;
                b += d * obs.mu[k] / w2;
                c += obs.mu[k] * obs.mu[k] / w2;
            }
            for (i, &t) in thetas.iter().enumerate() {
                let ll = c0 - 0.5 * (a + 2.0 * b * t + c * t * t);
                lp[i * opts.nodes + j] = ll + prior.ln_density(t, v);
            }
        }
        let max = lp.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if !max.is_finite() {
            return Err(Error::Degenerate(
                "posterior vanishes on the quadrature window".into(),
            ));
        }
        let (mut z, mut mt, mut mv, mut mtt, mut mvv, mut edge) = (0.0, 0.0, 0.0, 0.0, 0.0, 0.0);
        // Edges pinned to the support carry legitimate mass.
        let t_open = [tw.0 > t_sup.0, tw.1 < t_sup.1];
        let v_open = [vw.0 > v_sup.0.max(0.0), vw.1 < v_sup.1];
        for i in 0..opts.nodes {
            for j in 0..opts.nodes {
                let wgt = wq[i] * wq[j] * (lp[i * opts.nodes + j] - max).exp();
                let (t, v) = (thetas[i], varthetas[j]);
                z += wgt;
                mt += wgt * t;
                mv += wgt * v;
                mtt += wgt * t * t;
                mvv += wgt * v * v;
                let near =
                    |s: f64, open: [bool; 2]| (s < -0.95 && open[0]) || (s > 0.95 && open[1]);
                if near(x[i], t_open) || near(x[j], v_open) {
                    edge += wgt;
                }
            }
        }
        let (mt, mv) = (mt / z, mv / z);
        let edge_frac = edge / z;
        if edge_frac <= opts.edge_mass_tolerance || attempt == opts.max_widenings {
            if edge_frac > opts.edge_mass_tolerance {
                flags.push(Flag::WindowBoundaryMass);
            }
            let mut report = EstimateReport::new(EstimatorMethod::Bayes, obs.len());
            report.theta = Some(mt);
            report.vartheta = Some(mv);
            report.se_theta = Some((mtt / z - mt * mt).max(0.0).sqrt());
            report.se_vartheta = Some((mvv / z - mv * mv).max(0.0).sqrt());
            report.diagnostics.iterations = Some(attempt);
            report.diagnostics.flags = flags;
            return Ok(report);
        }
        half *= 2.0;
    }
    unreachable!()
}

// ---------------------------------------------------------------------------
// Local asymptotic normality

/// Central statistics of the local likelihood ratio at `(theta, vartheta)`,
/// and an evaluator for the ratio itself.
#[derive(Debug, Clone)]
pub struct LanStatistics<'a> {
    /// `-Psi_N^{-1/2} sum mu_k xi_k / w_k`.
    pub eta: f64,
    /// `(2 vartheta Phi_N)^{-1/2} sum (q_k / w_k) (xi_k^2 - 1) / sqrt(2)`.
    pub zeta: f64,
    pub fisher: FisherInfo,
    pub theta: f64,
    obs: &'a ShellObservations,
    base: f64,
}

impl LanStatistics<'_> {
    /// `ln Z(s, tau) = ln L(theta + s / sqrt(Psi_N), vartheta + tau / sqrt(Phi_N)) - ln L(theta, vartheta)`.
    pub fn ln_ratio(&self, s: f64, tau: f64) -> Result<f64> {
        let t = self.theta + s / self.fisher.psi.sqrt();
        let v = self.fisher.vartheta + tau / self.fisher.phi.sqrt();
        if !(v > 0.0) {
            return Err(Error::Domain(format!(
                "perturbed vartheta {v} is not positive"
            )));
        }
        Ok(log_likelihood(self.obs, t, v)? - self.base)
    }

    pub fn ratio(&self, s: f64, tau: f64) -> Result<f64> {
        self.ln_ratio(s, tau).map(f64::exp)
    }

    /// `ln Z(s, tau) - (s eta + tau zeta - s^2/2 - tau^2/2)`.
    pub fn remainder(&self, s: f64, tau: f64) -> Result<f64> {
        Ok(self.ln_ratio(s, tau)?
            - (s * self.eta + tau * self.zeta - 0.5 * s * s - 0.5 * tau * tau))
    }
}

pub fn lan_statistics(
    obs: &ShellObservations,
    theta: f64,
    vartheta: f64,
) -> Result<LanStatistics<'_>> {
    check_vartheta(vartheta)?;
    let fisher = FisherInfo::new(obs, vartheta);
    let s = vartheta.sqrt();
    let (mut a, mut b) = (0.0, 0.0);
    for k in 0..obs.len() {
        let w = s * obs.q[k] + obs.p[k];
        let xi = obs.residual(k, theta) / w;
        a += obs.mu[k] * xi / w;
        b += obs.q[k] / w * (xi * xi - 1.0) / std::f64::consts::SQRT_2;
    }
    Ok(LanStatistics {
        eta: -a / fisher.psi.sqrt(),
        zeta: b / (2.0 * vartheta * fisher.phi).sqrt(),
        fisher,
        theta,
        obs,
        base: log_likelihood(obs, theta, vartheta)?,
    })
}
