//! Estimation in the additive model.
//!
//! With `U_k(t) = u_k(t) - u_k(0)` and `S_k(t) = 1 - e^{-theta mu_k t}` every
//! mode satisfies `U_k(t) = (sigma q_k xi_k / (theta mu_k) - u_k(0)) S_k(t)`,
//! so a single trajectory pins down `theta mu_k` exactly from two or three
//! time points. The variance is then estimated from the normalized offsets,
//! and spatial samples of `u_x` give quadratic-variation estimators.

use crate::error::{Error, Result};
use crate::report::{EstimateReport, EstimatorMethod, Flag};
use crate::simulate::FourierPath;
use crate::spectra::NoiseType;

/// Increments of one additive mode observed at `t1 < t2` (and optionally at `t2 - t1`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IncrementObservations {
    pub k: usize,
    pub t1: f64,
    pub t2: f64,
    /// `U_k(t1)`.
    pub u1: f64,
    /// `U_k(t2)`.
    pub u2: f64,
    /// `U_k(t2 - t1)`, needed by the three-point recovery.
    pub u_gap: Option<f64>,
    pub q: f64,
    pub u0: f64,
}

impl IncrementObservations {
    /// Reads mode `k` of an additive path at `t1` and `t2`; `U_k(t2 - t1)` is
    /// filled in when `t2 - t1` is also a grid time.
    pub fn from_path(path: &FourierPath, k: usize, t1: f64, t2: f64) -> Result<Self> {
        if path.model.noise != NoiseType::Additive {
            return Err(Error::Unsupported(
                "drift recovery needs an additive path".into(),
            ));
        }
        if !(t1 > 0.0 && t2 > t1) {
            return Err(Error::Domain(format!("need 0 < t1 < t2, got {t1}, {t2}")));
        }
        if k == 0 || k > path.modes() {
            return Err(Error::OutOfRange {
                index: k,
                len: path.modes(),
            });
        }
        let u0 = path.values[k - 1][0];
        let u_at = |t: f64| path.value_at(k, t).map(|v| v - u0);
        let u_gap = path.time_index(t2 - t1).map(|j| path.values[k - 1][j] - u0);
        Ok(IncrementObservations {
            k,
            t1,
            t2,
            u1: u_at(t1)?,
            u2: u_at(t2)?,
            u_gap,
            q: path.model.families.q.eval(k)?,
            u0,
        })
    }
}

/// `F_{a,b}(x) = (1 - e^{-a x}) / (1 - e^{-b x})`.
///
/// For `a > b > 0` this is strictly decreasing on `(0, inf)`, from `a / b`
/// at `0+` down to `1` at infinity.
pub fn ratio_function(a: f64, b: f64, x: f64) -> f64 {
    (-a * x).exp_m1() / (-b * x).exp_m1()
}

fn ratio_derivative(a: f64, b: f64, x: f64) -> f64 {
    let (ea, eb) = ((-a * x).exp(), (-b * x).exp());
    let (sa, sb) = (-(-a * x).exp_m1(), -(-b * x).exp_m1());
    (a * ea * sb - b * eb * sa) / (sb * sb)
}

/// Solves `F_{a,b}(x) = y` for `x > 0` by Newton steps safeguarded with a
/// (geometric) bisection bracket, to relative tolerance `1e-13`.
pub fn invert_ratio(a: f64, b: f64, y: f64) -> Result<f64> {
    if !(a > b && b > 0.0) {
        return Err(Error::Domain(format!(
            "need a > b > 0, got a = {a}, b = {b}"
        )));
    }
    if !(y > 1.0 && y < a / b) {
        return Err(Error::Inconsistent(format!(
            "ratio {y} outside the attainable range (1, {})",
            a / b
        )));
    }
    let f = |x: f64| ratio_function(a, b, x) - y;
    let mut lo = 1e-12 / b;
    if f(lo) <= 0.0 {
        return Err(Error::Inconsistent(format!(
            "ratio {y} too close to {} to resolve",
            a / b
        )));
    }
    let mut hi = 1.0 / b;
    while f(hi) > 0.0 {
        lo = hi;
        hi *= 2.0;
        if hi > 1e300 {
            return Err(Error::Inconsistent(format!(
                "ratio {y} too close to 1 to resolve"
            )));
        }
    }
    let mut x = (lo * hi).sqrt();
    for _ in 0..400 {
        let fx = f(x);
        if fx == 0.0 {
            return Ok(x);
        }
        if fx > 0.0 {
            lo = x;
        } else {
            hi = x;
        }
        let d = ratio_derivative(a, b, x);
        let newton = x - fx / d;
        let next = if d < 0.0 && newton > lo && newton < hi {
            newton
        } else if hi / lo > 4.0 {
            (lo * hi).sqrt()
        } else {
            0.5 * (lo + hi)
        };
        let done = (next - x).abs() <= 1e-13 * x || (hi - lo) <= 1e-13 * lo;
        x = next;
        if done {
            return Ok(x);
        }
    }
    Ok(x)
}

/// `theta mu_k = F^{-1}_{t2,t1}(U_k(t2) / U_k(t1))`.
pub fn recover_drift_two_point(obs: &IncrementObservations) -> Result<f64> {
    if obs.u1 == 0.0 {
        return Err(Error::Degenerate(format!("U_{}(t1) = 0", obs.k)));
    }
    invert_ratio(obs.t2, obs.t1, obs.u2 / obs.u1)
}

/// `theta mu_k = ln(U_k(t2 - t1) / (U_k(t2) - U_k(t1))) / t1`.
pub fn recover_drift_three_point(obs: &IncrementObservations) -> Result<f64> {
    let gap = obs
        .u_gap
        .ok_or_else(|| Error::Domain("three-point recovery needs U_k(t2 - t1)".into()))?;
    let diff = obs.u2 - obs.u1;
    if diff == 0.0 {
        return Err(Error::Degenerate(format!(
            "U_{}(t2) = U_{}(t1)",
            obs.k, obs.k
        )));
    }
    let arg = gap / diff;
    if !(arg > 1.0 && arg.is_finite()) {
        return Err(Error::Inconsistent(format!(
            "log argument {arg} implies a nonpositive drift"
        )));
    }
    Ok(arg.ln() / obs.t1)
}

/// Relative residual of the defining identity at a recovered drift `lambda`:
/// `F(lambda) / (U2/U1) - 1` for two points, and
/// `(U2 - U1 - e^{-lambda t1} U(t2 - t1)) / (U2 - U1)` for three points.
pub fn drift_residual(obs: &IncrementObservations, lambda: f64, three_point: bool) -> f64 {
    if three_point {
        let gap = obs.u_gap.unwrap_or(f64::NAN);
        let diff = obs.u2 - obs.u1;
        (diff - (-lambda * obs.t1).exp() * gap) / diff
    } else {
        ratio_function(obs.t2, obs.t1, lambda) / (obs.u2 / obs.u1) - 1.0
    }
}

/// Normalized offsets `X_k = theta mu_k (U_k(t) / S_k(t) + u_k(0)) / q_k`,
/// i.i.d. `N(0, vartheta)` under the model, for `k = 1..=theta_mu.len()`.
pub fn variance_statistics(path: &FourierPath, t: f64, theta_mu: &[f64]) -> Result<Vec<f64>> {
    if path.model.noise != NoiseType::Additive {
        return Err(Error::Unsupported(
            "variance statistics need an additive path".into(),
        ));
    }
    if !(t > 0.0) {
        return Err(Error::Domain(format!("need t > 0, got {t}")));
    }
    if theta_mu.is_empty() || theta_mu.len() > path.modes() {
        return Err(Error::Domain(format!(
            "{} drift values for a path with {} modes",
            theta_mu.len(),
            path.modes()
        )));
    }
    let j = path
        .time_index(t)
        .ok_or_else(|| Error::Domain(format!("time {t} not on the path grid")))?;
    theta_mu
        .iter()
        .enumerate()
        .map(|(i, &lam)| {
            if !(lam > 0.0) {
                return Err(Error::Domain(format!(
                    "theta mu_{} = {lam} must be positive",
                    i + 1
                )));
            }
            let s = -(-lam * t).exp_m1();
            if s == 0.0 {
                return Err(Error::Degenerate(format!("S_{}(t) = 0", i + 1)));
            }
            let u0 = path.values[i][0];
            let u = path.values[i][j] - u0;
            Ok(lam * (u / s + u0) / path.model.families.q.eval(i + 1)?)
        })
        .collect()
}

/// `vartheta = (1/N) sum X_k^2` with standard error `sqrt(2/N) vartheta`.
pub fn sigma_mle_from_statistics(x: &[f64]) -> Result<EstimateReport> {
    if x.is_empty() {
        return Err(Error::Domain("no modes".into()));
    }
    let n = x.len();
    let v = x.iter().map(|x| x * x).sum::<f64>() / n as f64;
    let mut r = EstimateReport::new(EstimatorMethod::SigmaFourier, n);
    r.vartheta = Some(v);
    r.se_vartheta = Some((2.0 / n as f64).sqrt() * v);
    if v == 0.0 {
        r.diagnostics.flags.push(Flag::DegenerateVariance);
    }
    Ok(r)
}

/// Variance MLE from the first `theta_mu.len()` modes of an additive path at time `t`.
pub fn sigma_mle_fourier(path: &FourierPath, t: f64, theta_mu: &[f64]) -> Result<EstimateReport> {
    sigma_mle_from_statistics(&variance_statistics(path, t, theta_mu)?)
}

/// Samples on the uniform grid `x_j = a + (b - a) j / M`, `j = 0..=M`, at a fixed time.
#[derive(Debug, Clone, PartialEq)]
pub struct SpatialIncrements {
    pub a: f64,
    pub b: f64,
    pub t: f64,
    pub values: Vec<f64>,
}

impl SpatialIncrements {
    pub fn new(a: f64, b: f64, t: f64, values: Vec<f64>) -> Result<Self> {
        if !(b > a) {
            return Err(Error::Domain(format!("need a < b, got [{a}, {b}]")));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("non-finite sample".into()));
        }
        Ok(SpatialIncrements { a, b, t, values })
    }

    /// Number of intervals `M`.
    pub fn intervals(&self) -> usize {
        self.values.len().saturating_sub(1)
    }

    /// Restriction to the first `m` intervals, i.e. the window `[a, a + (b - a) m / M]`.
    pub fn window(&self, m: usize) -> Result<Self> {
        if m == 0 || m > self.intervals() {
            return Err(Error::Domain(format!(
                "window of {m} of {} intervals",
                self.intervals()
            )));
        }
        let b = self.a + (self.b - self.a) * m as f64 / self.intervals() as f64;
        Ok(SpatialIncrements {
            a: self.a,
            b,
            t: self.t,
            values: self.values[..=m].to_vec(),
        })
    }
}

/// The parameter assumed known by the spatial estimators.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Known {
    Sigma(f64),
    Theta(f64),
}

/// `sum_j (v_j - v_{j-1})^2`.
pub fn quadratic_variation(values: &[f64]) -> f64 {
    values.windows(2).map(|w| (w[1] - w[0]).powi(2)).sum()
}

fn second_difference_sum(values: &[f64]) -> f64 {
    values
        .windows(3)
        .map(|w| (w[2] - 2.0 * w[1] + w[0]).powi(2))
        .sum()
}

/// Estimates from a scaled quadratic-variation statistic `stat`, which tends
/// to `sigma^2 / theta^2` on rough input.
fn from_statistic(
    stat: f64,
    m: usize,
    known: Known,
    method: EstimatorMethod,
) -> Result<EstimateReport> {
    if !(stat > 0.0) {
        return Err(Error::Degenerate("zero quadratic variation".into()));
    }
    let rate = (2.0 / m as f64).sqrt();
    let mut r = EstimateReport::new(method, m);
    match known {
        Known::Sigma(sigma) => {
            let theta2 = sigma * sigma / stat;
            let theta = theta2.sqrt();
            r.theta = Some(theta);
            // se(theta^2) = sqrt(2/M) theta^2, mapped to the theta scale.
            r.se_theta = Some(rate * theta2 / (2.0 * theta));
            r.vartheta = Some(sigma * sigma);
            r.se_vartheta = Some(0.0);
        }
        Known::Theta(theta) => {
            let v = theta * theta * stat;
            r.theta = Some(theta);
            r.se_theta = Some(0.0);
            r.vartheta = Some(v);
            r.se_vartheta = Some(rate * v);
        }
    }
    Ok(r)
}

/// Rough input keeps its quadratic variation when the grid is halved; for
/// smooth input it roughly halves.
fn looks_smooth(stat_full: f64, stat_half: f64) -> bool {
    stat_half > 0.0 && stat_full / stat_half < 0.75
}

/// `theta^2 = sigma^2 (b - a) / Q` or `sigma^2 = theta^2 Q / (b - a)` from
/// samples of `u_x`, with `Q` the sum of squared increments.
pub fn quad_var_estimators(samples: &SpatialIncrements, known: Known) -> Result<EstimateReport> {
    let m = samples.intervals();
    if m < 2 {
        return Err(Error::Domain("need at least two intervals".into()));
    }
    let len = samples.b - samples.a;
    let stat = quadratic_variation(&samples.values) / len;
    let mut r = from_statistic(stat, m, known, EstimatorMethod::QuadVar)?;
    if m >= 16 {
        let half: Vec<f64> = samples.values.iter().step_by(2).cloned().collect();
        if m.is_multiple_of(2) && looks_smooth(stat, quadratic_variation(&half) / len) {
            r.diagnostics.flags.push(Flag::OutOfModel);
        }
    }
    Ok(r)
}

/// Finite-difference analogue from samples of `u` itself:
/// `D = M^2 sum_j (u_{j+1} - 2 u_j + u_{j-1})^2 / (b - a)^3`,
/// `theta^2 = sigma^2 / D`, `sigma^2 = theta^2 D`. Always flagged experimental.
pub fn quad_var_estimators_fd(samples: &SpatialIncrements, known: Known) -> Result<EstimateReport> {
    let m = samples.intervals();
    if m < 3 {
        return Err(Error::Domain("need at least three intervals".into()));
    }
    let len = samples.b - samples.a;
    let d = |vals: &[f64], m: usize| (m * m) as f64 * second_difference_sum(vals) / len.powi(3);
    let stat = d(&samples.values, m);
    let mut r = from_statistic(stat, m, known, EstimatorMethod::QuadVarFd)?;
    r.diagnostics.flags.push(Flag::Experimental);
    if m >= 16 && m.is_multiple_of(2) {
        let half: Vec<f64> = samples.values.iter().step_by(2).cloned().collect();
        if looks_smooth(stat, d(&half, m / 2)) {
            r.diagnostics.flags.push(Flag::OutOfModel);
        }
    }
    Ok(r)
}
