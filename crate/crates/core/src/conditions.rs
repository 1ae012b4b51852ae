//! Well-posedness and identifiability conditions.
//!
//! For closed-form coefficient families every condition reduces to the
//! leading-order term `c e^{-a k} k^r (ln k)^s` of a ratio or series, which is
//! decided exactly. Explicit families fall back to a tail-slope heuristic that
//! reports `Undecided` when the data is inconclusive.
//!
//! Conditions quantified over the parameter box are checked at its extremal
//! corner: `theta mu_k + nu_k` increases in `theta` and `sigma q_k + p_k`
//! increases in `sigma`, so `(theta_lo, sigma_hi)` is the worst case.

use std::cmp::Ordering;
use std::fmt;

use crate::error::Result;
use crate::spectra::{Asymptote, CoefficientFamily, ModelSpec, NoiseType};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Holds,
    Fails,
    Undecided,
}

impl Verdict {
    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::Holds => "holds",
            Verdict::Fails => "fails",
            Verdict::Undecided => "undecided",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    ExponentRule,
    PartialSumHeuristic,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::ExponentRule => "exponent_rule",
            Method::PartialSumHeuristic => "partial_sum_heuristic",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConditionId {
    /// `theta mu_k + nu_k > 0` for all large `k` over the box.
    DriftPositive,
    /// `(sigma q_k + p_k)^2 / (theta mu_k + nu_k) -> 0`.
    GlobalSolution,
    /// `sup_k T (sigma q_k + p_k)^2 - 4 (theta mu_k + nu_k) < infinity` at the model horizon.
    FiniteHorizonSolution,
    /// `sum mu_k^2 / (q_k + p_k)^2 = infinity`.
    ThetaRegularity,
    /// `sum q_k^2 / (q_k + p_k)^2 = infinity`.
    SigmaRegularity,
    /// `limsup p_k / (sqrt(k) q_k) < infinity`.
    PqSufficient,
    /// `sum q_k^2 / mu_k^2 < infinity`.
    AdditiveSolution,
}

impl ConditionId {
    pub fn as_str(self) -> &'static str {
        match self {
            ConditionId::DriftPositive => "drift-positive",
            ConditionId::GlobalSolution => "global-solution",
            ConditionId::FiniteHorizonSolution => "finite-horizon-solution",
            ConditionId::ThetaRegularity => "theta-regularity",
            ConditionId::SigmaRegularity => "sigma-regularity",
            ConditionId::PqSufficient => "pq-sufficient",
            ConditionId::AdditiveSolution => "additive-solution",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConditionRow {
    pub id: ConditionId,
    pub verdict: Verdict,
    pub method: Method,
    /// Whether the condition gates simulation and estimation.
    pub required: bool,
    pub diagnostic: String,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ConditionReport {
    pub rows: Vec<ConditionRow>,
}

impl ConditionReport {
    pub fn get(&self, id: ConditionId) -> Option<&ConditionRow> {
        self.rows.iter().find(|r| r.id == id)
    }

    pub fn verdict(&self, id: ConditionId) -> Option<Verdict> {
        self.get(id).map(|r| r.verdict)
    }

    /// `Fails` if a required row fails, else `Undecided` if one is undecided.
    pub fn overall(&self) -> Verdict {
        let req = self.rows.iter().filter(|r| r.required);
        let mut out = Verdict::Holds;
        for r in req {
            match r.verdict {
                Verdict::Fails => return Verdict::Fails,
                Verdict::Undecided => out = Verdict::Undecided,
                Verdict::Holds => {}
            }
        }
        out
    }

    fn merge(mut self, other: ConditionReport) -> Self {
        self.rows.extend(other.rows);
        self
    }
}

// ---------------------------------------------------------------------------
// Leading-order algebra

fn mul(a: Asymptote, b: Asymptote) -> Asymptote {
    if a.is_zero() || b.is_zero() {
        return Asymptote::ZERO;
    }
    Asymptote {
        coeff: a.coeff * b.coeff,
        rate: a.rate + b.rate,
        power: a.power + b.power,
        log_power: a.log_power + b.log_power,
    }
}

fn scale(a: Asymptote, c: f64) -> Asymptote {
    if c == 0.0 {
        return Asymptote::ZERO;
    }
    Asymptote {
        coeff: a.coeff * c,
        ..a
    }
}

fn recip(a: Asymptote) -> Asymptote {
    Asymptote {
        coeff: 1.0 / a.coeff,
        rate: -a.rate,
        power: -a.power,
        log_power: -a.log_power,
    }
}

/// Growth order; `Greater` means `a` dominates `b`.
fn order(a: &Asymptote, b: &Asymptote) -> Ordering {
    (-a.rate, a.power, a.log_power)
        .partial_cmp(&(-b.rate, b.power, b.log_power))
        .unwrap_or(Ordering::Equal)
}

/// Leading term of `a + b`; `None` when equal orders cancel exactly.
fn add(a: Asymptote, b: Asymptote) -> Option<Asymptote> {
    if a.is_zero() {
        return Some(b);
    }
    if b.is_zero() {
        return Some(a);
    }
    match order(&a, &b) {
        Ordering::Greater => Some(a),
        Ordering::Less => Some(b),
        Ordering::Equal => {
            let c = a.coeff + b.coeff;
            (c != 0.0).then_some(Asymptote { coeff: c, ..a })
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Limit {
    Zero,
    Finite(f64),
    PosInf,
    NegInf,
}

fn limit(a: Asymptote) -> Limit {
    if a.is_zero() {
        return Limit::Zero;
    }
    let key = if a.rate != 0.0 {
        -a.rate
    } else if a.power != 0.0 {
        a.power
    } else {
        a.log_power
    };
    match key.partial_cmp(&0.0) {
        Some(Ordering::Less) => Limit::Zero,
        Some(Ordering::Greater) if a.coeff > 0.0 => Limit::PosInf,
        Some(Ordering::Greater) => Limit::NegInf,
        _ => Limit::Finite(a.coeff),
    }
}

/// Convergence of `sum_k a_k` for eventually positive terms.
fn series_converges(a: Asymptote) -> bool {
    if a.is_zero() || a.rate > 0.0 {
        return true;
    }
    if a.rate < 0.0 {
        return false;
    }
    a.power < -1.0 || (a.power == -1.0 && a.log_power < -1.0)
}

struct Fmt(Asymptote);

impl fmt::Display for Fmt {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let a = self.0;
        if a.is_zero() {
            return write!(f, "0");
        }
        write!(f, "{:.6}", a.coeff)?;
        if a.rate != 0.0 {
            write!(f, "*e^({}k)", -a.rate)?;
        }
        if a.power != 0.0 {
            write!(f, "*k^{}", a.power)?;
        }
        if a.log_power != 0.0 {
            write!(f, "*ln(k)^{}", a.log_power)?;
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Tail heuristic for explicit families

/// Local log-log slope of a positive sequence over `[kmax/2, kmax]`.
#[derive(Debug, Clone, Copy, PartialEq)]
enum Tail {
    /// Terms underflow to zero.
    Vanishes,
    /// Terms overflow or turn non-finite.
    Explodes,
    /// Changes sign or hits zero irregularly.
    Irregular,
    Slope(f64),
}

fn tail_slope(term: &dyn Fn(usize) -> f64, kmax: usize) -> Tail {
    let lo = (kmax / 2).max(1);
    if kmax < 8 {
        return Tail::Irregular;
    }
    let samples = 64.min(kmax - lo + 1);
    let (lnlo, lnhi) = ((lo as f64).ln(), (kmax as f64).ln());
    let mut pts = Vec::with_capacity(samples);
    for i in 0..samples {
        let k = if samples == 1 {
            kmax
        } else {
            (lnlo + (lnhi - lnlo) * i as f64 / (samples - 1) as f64)
                .exp()
                .round() as usize
        };
        let v = term(k.clamp(lo, kmax));
        if !v.is_finite() {
            return Tail::Explodes;
        }
        pts.push(((k as f64).ln(), v));
    }
    if pts.iter().all(|(_, v)| *v == 0.0) {
        return Tail::Vanishes;
    }
    if pts.iter().any(|(_, v)| *v <= 0.0) {
        return Tail::Irregular;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1.ln()).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1.ln() - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    Tail::Slope(sxy / sxx)
}

const SLOPE_MARGIN: f64 = 0.1;

/// Heuristic verdict on `sum_k term(k) = infinity` from terms up to `kmax`.
pub fn divergence_heuristic(term: &dyn Fn(usize) -> f64, kmax: usize) -> Verdict {
    match tail_slope(term, kmax) {
        Tail::Vanishes => Verdict::Fails,
        Tail::Explodes => Verdict::Holds,
        Tail::Irregular => Verdict::Undecided,
        Tail::Slope(s) if s > -1.0 + SLOPE_MARGIN => Verdict::Holds,
        Tail::Slope(s) if s < -1.0 - SLOPE_MARGIN => Verdict::Fails,
        Tail::Slope(_) => Verdict::Undecided,
    }
}

/// Heuristic verdict on `term(k) -> 0`.
pub fn vanishing_heuristic(term: &dyn Fn(usize) -> f64, kmax: usize) -> Verdict {
    match tail_slope(term, kmax) {
        Tail::Vanishes => Verdict::Holds,
        Tail::Explodes => Verdict::Fails,
        Tail::Irregular => Verdict::Undecided,
        Tail::Slope(s) if s < -SLOPE_MARGIN => Verdict::Holds,
        Tail::Slope(s) if s > SLOPE_MARGIN => Verdict::Fails,
        Tail::Slope(_) => Verdict::Undecided,
    }
}

/// Heuristic verdict on `sup_k term(k) < infinity`.
fn bounded_heuristic(term: &dyn Fn(usize) -> f64, kmax: usize) -> Verdict {
    match tail_slope(term, kmax) {
        Tail::Vanishes => Verdict::Holds,
        Tail::Explodes => Verdict::Fails,
        Tail::Irregular => Verdict::Undecided,
        Tail::Slope(s) if s < -SLOPE_MARGIN => Verdict::Holds,
        Tail::Slope(s) if s > SLOPE_MARGIN => Verdict::Fails,
        Tail::Slope(_) => Verdict::Undecided,
    }
}

// ---------------------------------------------------------------------------
// Model-level checks

struct Asymptotes {
    mu: Asymptote,
    nu: Asymptote,
    q: Asymptote,
    p: Asymptote,
}

fn asymptotes(model: &ModelSpec) -> Option<Asymptotes> {
    let f = &model.families;
    Some(Asymptotes {
        mu: f.mu.asymptote()?,
        nu: f.nu.asymptote()?,
        q: f.q.asymptote()?,
        p: f.p.asymptote()?,
    })
}

/// Number of terms available to the heuristic: the shortest explicit family.
fn heuristic_range(model: &ModelSpec) -> usize {
    let f = &model.families;
    [&f.mu, &f.nu, &f.q, &f.p]
        .iter()
        .filter_map(|fam| match fam {
            CoefficientFamily::Explicit { values } => Some(values.len()),
            _ => None,
        })
        .min()
        .unwrap_or(1_000_000)
}

fn term_fn<'a>(
    model: &'a ModelSpec,
    f: impl Fn(f64, f64, f64, f64) -> f64 + 'a,
) -> impl Fn(usize) -> f64 + 'a {
    move |k| {
        let fam = &model.families;
        let get = |c: &CoefficientFamily| c.eval(k).unwrap_or(f64::NAN);
        f(get(&fam.mu), get(&fam.nu), get(&fam.q), get(&fam.p))
    }
}

fn row(
    id: ConditionId,
    verdict: Verdict,
    method: Method,
    required: bool,
    diagnostic: String,
) -> ConditionRow {
    ConditionRow {
        id,
        verdict,
        method,
        required,
        diagnostic,
    }
}

/// Existence conditions for the shell model at the box corner
/// `(theta_lo, sigma_hi)`, with the finite-horizon check at the model's `T`.
pub fn check_wellposed_shell(model: &ModelSpec) -> Result<ConditionReport> {
    let theta = model.parameter_box.theta[0];
    let sigma = model.parameter_box.sigma[1];
    let horizon = model.horizon;
    let mut rows = Vec::new();

    let Some(a) = asymptotes(model) else {
        let kmax = heuristic_range(model);
        let m = Method::PartialSumHeuristic;
        let drift = term_fn(model, move |mu, nu, _, _| theta * mu + nu);
        let positive = (1..=kmax).all(|k| drift(k) > 0.0);
        rows.push(row(
            ConditionId::DriftPositive,
            if positive {
                Verdict::Holds
            } else {
                Verdict::Fails
            },
            m,
            true,
            format!("checked k <= {kmax}"),
        ));
        let ratio = term_fn(model, move |mu, nu, q, p| {
            (sigma * q + p).powi(2) / (theta * mu + nu)
        });
        let global = vanishing_heuristic(&ratio, kmax);
        rows.push(row(
            ConditionId::GlobalSolution,
            global,
            m,
            false,
            format!("tail of ratio up to k = {kmax}"),
        ));
        let g = term_fn(model, move |mu, nu, q, p| {
            (horizon * (sigma * q + p).powi(2) - 4.0 * (theta * mu + nu)).max(0.0)
        });
        let fin = if global == Verdict::Holds {
            Verdict::Holds
        } else {
            bounded_heuristic(&g, kmax)
        };
        rows.push(row(
            ConditionId::FiniteHorizonSolution,
            fin,
            m,
            true,
            format!("T = {horizon}; positive part of T n^2 - 4 d up to k = {kmax}"),
        ));
        return Ok(ConditionReport { rows });
    };

    let m = Method::ExponentRule;
    let drift = add(scale(a.mu, theta), a.nu);
    let noise = add(scale(a.q, sigma), a.p).expect("q and p are nonnegative");
    let noise_sq = mul(noise, noise);

    let Some(drift) = drift else {
        for id in [
            ConditionId::DriftPositive,
            ConditionId::GlobalSolution,
            ConditionId::FiniteHorizonSolution,
        ] {
            rows.push(row(
                id,
                Verdict::Undecided,
                m,
                id != ConditionId::GlobalSolution,
                format!("leading terms of theta mu_k + nu_k cancel at theta = {theta}"),
            ));
        }
        return Ok(ConditionReport { rows });
    };

    let drift_ok = drift.coeff > 0.0;
    rows.push(row(
        ConditionId::DriftPositive,
        if drift_ok {
            Verdict::Holds
        } else {
            Verdict::Fails
        },
        m,
        true,
        format!("theta mu_k + nu_k ~ {} at theta = {theta}", Fmt(drift)),
    ));
    if !drift_ok {
        for id in [
            ConditionId::GlobalSolution,
            ConditionId::FiniteHorizonSolution,
        ] {
            rows.push(row(
                id,
                Verdict::Fails,
                m,
                id == ConditionId::FiniteHorizonSolution,
                "theta mu_k + nu_k is eventually nonpositive".into(),
            ));
        }
        return Ok(ConditionReport { rows });
    }

    let ratio = mul(noise_sq, recip(drift));
    let global = if limit(ratio) == Limit::Zero {
        Verdict::Holds
    } else {
        Verdict::Fails
    };
    rows.push(row(
        ConditionId::GlobalSolution,
        global,
        m,
        false,
        format!(
            "(sigma q_k + p_k)^2 / (theta mu_k + nu_k) ~ {} at sigma = {sigma}",
            Fmt(ratio)
        ),
    ));

    // Largest T with bounded T n^2 - 4 d.
    let t_star = match order(&noise_sq, &drift) {
        Ordering::Less => f64::INFINITY,
        Ordering::Greater => 0.0,
        Ordering::Equal => 4.0 * drift.coeff / noise_sq.coeff,
    };
    let fin = if global == Verdict::Holds {
        Verdict::Holds
    } else {
        match add(scale(noise_sq, horizon), scale(drift, -4.0)) {
            None => Verdict::Undecided,
            Some(g) => match limit(g) {
                Limit::PosInf => Verdict::Fails,
                _ => Verdict::Holds,
            },
        }
    };
    rows.push(row(
        ConditionId::FiniteHorizonSolution,
        fin,
        m,
        true,
        format!("T = {horizon}; bounded for T < {t_star}"),
    ));
    Ok(ConditionReport { rows })
}

/// Divergence of the information series for `theta` and `sigma`, plus the
/// sufficient bound on `p_k / q_k`.
pub fn check_regularity(model: &ModelSpec) -> Result<ConditionReport> {
    let mut rows = Vec::new();
    let Some(a) = asymptotes(model) else {
        let kmax = heuristic_range(model);
        let m = Method::PartialSumHeuristic;
        let c1 = term_fn(model, |mu, _, q, p| (mu / (q + p)).powi(2));
        let c2 = term_fn(model, |_, _, q, p| (q / (q + p)).powi(2));
        let pq = |k: usize| {
            let f = &model.families;
            let q = f.q.eval(k).unwrap_or(f64::NAN);
            let p = f.p.eval(k).unwrap_or(f64::NAN);
            p / ((k as f64).sqrt() * q)
        };
        rows.push(row(
            ConditionId::ThetaRegularity,
            divergence_heuristic(&c1, kmax),
            m,
            true,
            format!("tail up to k = {kmax}"),
        ));
        rows.push(row(
            ConditionId::SigmaRegularity,
            divergence_heuristic(&c2, kmax),
            m,
            true,
            format!("tail up to k = {kmax}"),
        ));
        rows.push(row(
            ConditionId::PqSufficient,
            bounded_heuristic(&pq, kmax),
            m,
            false,
            format!("tail up to k = {kmax}"),
        ));
        return Ok(ConditionReport { rows });
    };
    let m = Method::ExponentRule;
    let qp = add(a.q, a.p).expect("q and p are nonnegative");
    let inv_qp_sq = recip(mul(qp, qp));

    let c1 = mul(mul(a.mu, a.mu), inv_qp_sq);
    rows.push(row(
        ConditionId::ThetaRegularity,
        if series_converges(c1) {
            Verdict::Fails
        } else {
            Verdict::Holds
        },
        m,
        true,
        format!("mu_k^2 / (q_k + p_k)^2 ~ {}", Fmt(c1)),
    ));
    let c2 = mul(mul(a.q, a.q), inv_qp_sq);
    rows.push(row(
        ConditionId::SigmaRegularity,
        if series_converges(c2) {
            Verdict::Fails
        } else {
            Verdict::Holds
        },
        m,
        true,
        format!("q_k^2 / (q_k + p_k)^2 ~ {}", Fmt(c2)),
    ));
    let pq = mul(a.p, recip(mul(Asymptote::power_law(1.0, 0.5), a.q)));
    let bounded = !matches!(limit(pq), Limit::PosInf);
    rows.push(row(
        ConditionId::PqSufficient,
        if bounded {
            Verdict::Holds
        } else {
            Verdict::Fails
        },
        m,
        false,
        format!("p_k / (sqrt(k) q_k) ~ {}", Fmt(pq)),
    ));
    Ok(ConditionReport { rows })
}

/// `sum q_k^2 / mu_k^2 < infinity`.
pub fn check_wellposed_additive(model: &ModelSpec) -> Result<ConditionReport> {
    let f = &model.families;
    let row = match (f.mu.asymptote(), f.q.asymptote()) {
        (Some(mu), Some(q)) => {
            let t = mul(mul(q, q), recip(mul(mu, mu)));
            row(
                ConditionId::AdditiveSolution,
                if series_converges(t) {
                    Verdict::Holds
                } else {
                    Verdict::Fails
                },
                Method::ExponentRule,
                true,
                format!("q_k^2 / mu_k^2 ~ {}", Fmt(t)),
            )
        }
        _ => {
            let kmax = heuristic_range(model);
            let t = term_fn(model, |mu, _, q, _| (q / mu).powi(2));
            let v = match divergence_heuristic(&t, kmax) {
                Verdict::Holds => Verdict::Fails,
                Verdict::Fails => Verdict::Holds,
                Verdict::Undecided => Verdict::Undecided,
            };
            row(
                ConditionId::AdditiveSolution,
                v,
                Method::PartialSumHeuristic,
                true,
                format!("tail up to k = {kmax}"),
            )
        }
    };
    Ok(ConditionReport { rows: vec![row] })
}

/// All conditions relevant to the model's noise type.
pub fn check_model(model: &ModelSpec) -> Result<ConditionReport> {
    match model.noise {
        NoiseType::Shell => Ok(check_wellposed_shell(model)?.merge(check_regularity(model)?)),
        NoiseType::Additive => check_wellposed_additive(model),
    }
}
