//! Exact Fourier-mode trajectories and truncated physical-space fields.
//!
//! Every mode is a closed-form function of time and of one standard normal
//! draw `xi_k`, so no time stepping is involved. The draw for mode `k` of
//! replication `r` comes from its own ChaCha substream: stream `r`, word
//! offset `k << 16` under the key derived from the seed. Paths are therefore
//! reproducible independently of scheduling, and extending the truncation
//! never changes the earlier modes.

use std::f64::consts::PI;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::spectra::{ModelSpec, NoiseType};

const MODE_BLOCK_BITS: u32 = 16;

/// The standard normal draw `xi_k` of replication `replication`.
pub fn mode_noise(seed: u64, replication: u64, k: usize) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(replication);
    rng.set_word_pos((k as u128) << MODE_BLOCK_BITS);
    StandardNormal.sample(&mut rng)
}

/// Draws `xi_1, ..., xi_n`.
pub fn draw_noise(seed: u64, replication: u64, n: usize) -> Vec<f64> {
    (1..=n).map(|k| mode_noise(seed, replication, k)).collect()
}

/// Uniform grid `0, dt, 2 dt, ...` up to `horizon` (inclusive when `horizon`
/// is a multiple of `dt` up to rounding).
pub fn uniform_time_grid(horizon: f64, dt: f64) -> Result<Vec<f64>> {
    if !(dt > 0.0 && horizon > 0.0) {
        return Err(Error::Domain(format!(
            "need dt, horizon > 0, got {dt}, {horizon}"
        )));
    }
    let steps = (horizon / dt + 1e-9).floor() as usize;
    Ok((0..=steps).map(|j| j as f64 * dt).collect())
}

/// Simulated modes `u_k(t_j)`, `k = 1..=N`.
#[derive(Debug, Clone, PartialEq)]
pub struct FourierPath {
    pub model: ModelSpec,
    pub time_grid: Vec<f64>,
    /// `values[k - 1][j] = u_k(t_j)`.
    pub values: Vec<Vec<f64>>,
    /// `noise[k - 1] = xi_k`.
    pub noise: Vec<f64>,
    pub seed: u64,
    pub replication: u64,
}

impl FourierPath {
    pub fn modes(&self) -> usize {
        self.values.len()
    }

    /// Index of `t` in the time grid, matched to a relative tolerance of 1e-12.
    pub fn time_index(&self, t: f64) -> Option<usize> {
        self.time_grid
            .iter()
            .position(|&s| (s - t).abs() <= 1e-12 * t.abs().max(1.0))
    }

    /// `u_k(t)` for a grid time `t`.
    pub fn value_at(&self, k: usize, t: f64) -> Result<f64> {
        let j = self
            .time_index(t)
            .ok_or_else(|| Error::Domain(format!("time {t} not on the path grid")))?;
        self.values
            .get(k.wrapping_sub(1))
            .map(|row| row[j])
            .ok_or(Error::OutOfRange {
                index: k,
                len: self.values.len(),
            })
    }
}

fn check_grid(grid: &[f64], horizon: f64) -> Result<()> {
    if grid.first() != Some(&0.0) {
        return Err(Error::Domain("time grid must start at t = 0".into()));
    }
    if grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::Domain(
            "time grid must be strictly increasing".into(),
        ));
    }
    if grid
        .iter()
        .any(|t| !t.is_finite() || *t > horizon * (1.0 + 1e-12))
    {
        return Err(Error::Domain(format!(
            "time grid must lie in [0, {horizon}]"
        )));
    }
    Ok(())
}

/// Closed-form value of mode `k` at time `t` given its draw.
fn mode_value(model: &ModelSpec, k: usize, u0: f64, xi: f64, t: f64) -> Result<f64> {
    match model.noise {
        NoiseType::Shell => {
            let rate = -model.drift_rate(k)? + model.noise_scale(k)? * xi;
            Ok(u0 * (rate * t).exp())
        }
        NoiseType::Additive => {
            let x = model.parameters.theta * model.mu(k)?;
            let q = model.families.q.eval(k)?;
            let relax = -(-x * t).exp_m1();
            Ok(u0 * (-x * t).exp() + model.parameters.sigma * q / x * relax * xi)
        }
    }
}

fn simulate_with(
    model: &ModelSpec,
    grid: &[f64],
    noise: Vec<f64>,
    seed: u64,
    replication: u64,
) -> Result<FourierPath> {
    model.validate()?;
    check_grid(grid, model.horizon)?;
    if noise.len() != model.modes {
        return Err(Error::Domain(format!(
            "expected {} noise values, got {}",
            model.modes,
            noise.len()
        )));
    }
    let initial = model.initial.coefficients(model.modes)?;
    let values = (1..=model.modes)
        .map(|k| {
            grid.iter()
                .map(|&t| mode_value(model, k, initial[k - 1], noise[k - 1], t))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(FourierPath {
        model: model.clone(),
        time_grid: grid.to_vec(),
        values,
        noise,
        seed,
        replication,
    })
}

fn require_noise(model: &ModelSpec, noise: NoiseType) -> Result<()> {
    if model.noise != noise {
        return Err(Error::Unsupported(format!(
            "{:?} simulator called with a {:?} model",
            noise, model.noise
        )));
    }
    Ok(())
}

/// `u_k(t) = u_k(0) exp(-(theta mu_k + nu_k) t + (sigma q_k + p_k) xi_k t)`.
pub fn simulate_shell(
    model: &ModelSpec,
    grid: &[f64],
    seed: u64,
    replication: u64,
) -> Result<FourierPath> {
    require_noise(model, NoiseType::Shell)?;
    simulate_with(
        model,
        grid,
        draw_noise(seed, replication, model.modes),
        seed,
        replication,
    )
}

/// Shell simulation with caller-supplied draws (seed and replication recorded as 0).
pub fn simulate_shell_with_noise(
    model: &ModelSpec,
    grid: &[f64],
    noise: Vec<f64>,
) -> Result<FourierPath> {
    require_noise(model, NoiseType::Shell)?;
    simulate_with(model, grid, noise, 0, 0)
}

/// `u_k(t) = u_k(0) e^{-theta mu_k t} + sigma q_k / (theta mu_k) (1 - e^{-theta mu_k t}) xi_k`.
pub fn simulate_additive(
    model: &ModelSpec,
    grid: &[f64],
    seed: u64,
    replication: u64,
) -> Result<FourierPath> {
    require_noise(model, NoiseType::Additive)?;
    check_additive_drift(model)?;
    simulate_with(
        model,
        grid,
        draw_noise(seed, replication, model.modes),
        seed,
        replication,
    )
}

pub fn simulate_additive_with_noise(
    model: &ModelSpec,
    grid: &[f64],
    noise: Vec<f64>,
) -> Result<FourierPath> {
    require_noise(model, NoiseType::Additive)?;
    check_additive_drift(model)?;
    simulate_with(model, grid, noise, 0, 0)
}

fn check_additive_drift(model: &ModelSpec) -> Result<()> {
    for k in 1..=model.modes {
        if model.parameters.theta * model.mu(k)? == 0.0 {
            return Err(Error::InvalidModel(format!(
                "theta mu_{k} = 0 in the additive model"
            )));
        }
    }
    Ok(())
}

/// Dispatches on the model's noise type.
pub fn simulate(
    model: &ModelSpec,
    grid: &[f64],
    seed: u64,
    replication: u64,
) -> Result<FourierPath> {
    match model.noise {
        NoiseType::Shell => simulate_shell(model, grid, seed, replication),
        NoiseType::Additive => simulate_additive(model, grid, seed, replication),
    }
}

/// Values of `u(t, .)` or `u_x(t, .)` on a spatial grid from a truncated sine series.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldSample {
    pub t: f64,
    pub x: Vec<f64>,
    pub values: Vec<f64>,
    /// Number of series terms `K`.
    pub truncation: usize,
    pub derivative: bool,
    /// `sum_{k > K} k^{-2}`, the scale of the omitted variance.
    pub tail_bound: f64,
}

/// Uniform grid `a + (b - a) j / M`, `M = round((b - a) / resolution)`.
pub fn uniform_space_grid(a: f64, b: f64, resolution: f64) -> Result<Vec<f64>> {
    if !(b > a && resolution > 0.0) {
        return Err(Error::Domain(format!(
            "bad spatial grid [{a}, {b}] at {resolution}"
        )));
    }
    let m = ((b - a) / resolution).round().max(1.0) as usize;
    Ok((0..=m).map(|j| a + (b - a) * j as f64 / m as f64).collect())
}

/// `sum_{k > K} 1/k^2` by its Euler-Maclaurin expansion (exact to ~1e-12 relative for K >= 10).
pub fn inverse_square_tail(k: usize) -> f64 {
    if k < 10 {
        let head: f64 = (1..=k).map(|j| 1.0 / (j * j) as f64).sum();
        return PI * PI / 6.0 - head;
    }
    let n = k as f64;
    1.0 / n - 1.0 / (2.0 * n * n) + 1.0 / (6.0 * n.powi(3)) - 1.0 / (30.0 * n.powi(5))
        + 1.0 / (42.0 * n.powi(7))
        - 1.0 / (30.0 * n.powi(9))
        + 5.0 / (66.0 * n.powi(11))
}

/// Sums the first `truncation` terms of the sine (or cosine, for `derivative`)
/// series of the solution at time `t`. Draws beyond the path's modes come from
/// the same seeded substreams.
pub fn reconstruct_field(
    path: &FourierPath,
    t: f64,
    x_grid: &[f64],
    truncation: usize,
    derivative: bool,
) -> Result<FieldSample> {
    let model = &path.model;
    if model.dimension != 1 {
        return Err(Error::Unsupported(
            "field reconstruction needs dimension 1".into(),
        ));
    }
    if derivative && model.noise == NoiseType::Shell {
        return Err(Error::Unsupported(
            "spatial derivative of a shell-model field".into(),
        ));
    }
    if !(0.0..=model.horizon * (1.0 + 1e-12)).contains(&t) {
        return Err(Error::Domain(format!(
            "t = {t} outside [0, {}]",
            model.horizon
        )));
    }
    if x_grid.iter().any(|x| !(0.0..=PI).contains(x)) {
        return Err(Error::Domain("spatial grid must lie in [0, pi]".into()));
    }

    let norm = (2.0 / PI).sqrt();
    let coeffs = (1..=truncation)
        .into_par_iter()
        .map(|k| {
            let xi = match path.noise.get(k - 1) {
                Some(v) => *v,
                None => mode_noise(path.seed, path.replication, k),
            };
            let u0 = model.initial.coefficient(k)?;
            let c = mode_value(model, k, u0, xi, t)?;
            Ok(if derivative {
                norm * c * k as f64
            } else {
                norm * c
            })
        })
        .collect::<Result<Vec<f64>>>()?;

    let values = x_grid
        .par_iter()
        .map(|&x| trig_series(&coeffs, x, derivative))
        .collect();

    Ok(FieldSample {
        t,
        x: x_grid.to_vec(),
        values,
        truncation,
        derivative,
        tail_bound: inverse_square_tail(truncation),
    })
}

/// `sum_k c_k cos(k x)` or `sum_k c_k sin(k x)`, `k` from 1, by rotation with
/// periodic re-anchoring.
fn trig_series(coeffs: &[f64], x: f64, cosine: bool) -> f64 {
    const ANCHOR: usize = 64;
    let (s1, c1) = x.sin_cos();
    let (mut s, mut c) = (0.0, 1.0);
    let mut acc = 0.0;
    for (i, a) in coeffs.iter().enumerate() {
        let k = i + 1;
        if k % ANCHOR == 0 {
            let (sk, ck) = (k as f64 * x).sin_cos();
            s = sk;
            c = ck;
        } else {
            let ns = s * c1 + c * s1;
            c = c * c1 - s * s1;
            s = ns;
        }
        acc += a * if cosine { c } else { s };
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectra::{example_additive, example_shell, CoefficientFamily, InitialCondition};

    #[test]
    fn noise_is_a_pure_function_of_indices() {
        let a = mode_noise(7, 3, 11);
        assert_eq!(a, mode_noise(7, 3, 11));
        assert_ne!(a, mode_noise(7, 4, 11));
        assert_ne!(a, mode_noise(8, 3, 11));
        let short = draw_noise(7, 3, 10);
        let long = draw_noise(7, 3, 40);
        assert_eq!(&long[..10], &short[..]);
    }

    #[test]
    fn deterministic_decay() {
        let mut m = example_shell();
        m.modes = 1;
        m.families.mu = CoefficientFamily::Constant { c: 1.0 };
        m.families.nu = CoefficientFamily::zero();
        m.parameters.theta = 1.0;
        m.initial = InitialCondition::Constant { value: 1.0 };
        // sigma q + p = 0 is not admissible, so force xi = 0 instead.
        let p = simulate_shell_with_noise(&m, &[0.0, 1.0], vec![0.0]).unwrap();
        assert_eq!(p.values[0][1], (-1f64).exp());
    }

    #[test]
    fn example_shell_zero_noise() {
        let m = example_shell();
        let grid = uniform_time_grid(1.0, 0.01).unwrap();
        let p = simulate_shell_with_noise(&m, &grid, vec![0.0; m.modes]).unwrap();
        let u0 = m.initial.coefficient(1).unwrap();
        let got = p.value_at(1, 1.0).unwrap();
        assert!((got - u0 * (-1.5f64).exp()).abs() < 1e-15 * u0);
    }

    #[test]
    fn first_column_is_initial_value() {
        let m = example_shell();
        let grid = uniform_time_grid(1.0, 0.01).unwrap();
        assert_eq!(grid.len(), 101);
        assert_eq!(*grid.last().unwrap(), 1.0);
        let p = simulate_shell(&m, &grid, 1, 0).unwrap();
        for k in 1..=m.modes {
            assert_eq!(p.values[k - 1][0], m.initial.coefficient(k).unwrap());
            assert!(p.values[k - 1].iter().all(|v| v.is_finite() && *v >= 0.0));
            // High modes decay like e^{-1860 t} and underflow late, never at the first step.
            assert!(p.values[k - 1][1].is_normal());
        }
    }

    #[test]
    fn shell_log_linearity() {
        let m = example_shell();
        let grid = uniform_time_grid(1.0, 0.01).unwrap();
        let p = simulate_shell(&m, &grid, 99, 5).unwrap();
        for row in &p.values {
            let rates: Vec<f64> = grid[1..]
                .iter()
                .zip(&row[1..])
                .filter(|(_, u)| u.is_normal())
                .map(|(t, u)| (u / row[0]).ln() / t)
                .collect();
            let r0 = rates[0];
            for r in &rates {
                assert!((r - r0).abs() <= 1e-13 * r0.abs().max(1.0), "{r} vs {r0}");
            }
        }
    }

    #[test]
    fn additive_example_value() {
        let mut m = example_additive();
        m.modes = 1;
        let p = simulate_additive_with_noise(&m, &[0.0, 1.0], vec![1.0]).unwrap();
        let expected = 1.0 - (-0.1f64).exp();
        assert!((p.values[0][1] - expected).abs() < 1e-15);
        assert!((p.values[0][1] - 0.0951626).abs() < 1e-7);
    }

    #[test]
    fn additive_stationary_limit() {
        let mut m = example_additive();
        m.modes = 3;
        m.horizon = 1e4;
        let xi = vec![0.7, -1.3, 2.1];
        for k in 1..=3 {
            let rate = m.parameters.theta * m.mu(k).unwrap();
            let t = 1e3 / rate;
            let p = simulate_additive_with_noise(&m, &[0.0, t], xi.clone()).unwrap();
            let limit = m.parameters.sigma * xi[k - 1] / rate;
            assert!(((p.values[k - 1][1] - limit) / limit).abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        let m = example_shell();
        assert!(simulate_additive(&m, &[0.0, 1.0], 0, 0).is_err());
        assert!(simulate_shell(&m, &[0.1, 1.0], 0, 0).is_err());
        assert!(simulate_shell(&m, &[0.0, 0.5, 0.5], 0, 0).is_err());
        let mut z = example_shell();
        z.initial = InitialCondition::Parabola;
        assert!(matches!(
            simulate_shell(&z, &[0.0, 1.0], 0, 0),
            Err(Error::InvalidModel(_))
        ));
    }

    #[test]
    fn field_zero_noise_and_single_term() {
        let mut m = example_additive();
        m.modes = 1;
        let grid = [0.0, 0.5];
        let zero = simulate_additive_with_noise(&m, &grid, vec![0.0]).unwrap();
        let f = reconstruct_field(&zero, 0.5, &[0.0, 1.0, 2.0], 1, true).unwrap();
        assert!(f.values.iter().all(|v| *v == 0.0));

        let one = simulate_additive_with_noise(&m, &grid, vec![1.0]).unwrap();
        let f = reconstruct_field(&one, 0.5, &[0.0], 1, true).unwrap();
        let (s, th) = (0.1f64, 0.1f64);
        let expected = (2.0 / PI).sqrt() * (s / th) * (1.0 - (-th * 0.5f64).exp());
        assert!((f.values[0] - expected).abs() < 1e-15);
    }

    #[test]
    fn field_vanishes_at_boundary() {
        let m = example_additive();
        let p = simulate_additive(&m, &[0.0, 0.2], 4, 0).unwrap();
        let f = reconstruct_field(&p, 0.2, &[0.0, PI], 2000, false).unwrap();
        assert_eq!(f.values[0], 0.0);
        assert!(f.values[1].abs() < 1e-10);
    }

    #[test]
    fn field_matches_direct_summation() {
        let m = example_additive();
        let p = simulate_additive(&m, &[0.0, 0.2], 4, 0).unwrap();
        let xs = [0.3, 1.7, 3.0];
        let f = reconstruct_field(&p, 0.2, &xs, 500, true).unwrap();
        for (x, v) in xs.iter().zip(&f.values) {
            let direct: f64 = (1..=500)
                .map(|k| {
                    let xi = mode_noise(4, 0, k);
                    let kf = k as f64;
                    (2.0 / PI).sqrt()
                        * (0.1 / 0.1)
                        * xi
                        * (1.0 - (-kf * kf * 0.1 * 0.2).exp())
                        * (kf * x).cos()
                        / kf
                })
                .sum();
            assert!((v - direct).abs() < 1e-11, "{v} vs {direct}");
        }
        assert!(reconstruct_field(
            &simulate_shell(&example_shell(), &[0.0, 1.0], 1, 0).unwrap(),
            0.5,
            &[1.0],
            10,
            true
        )
        .is_err());
    }

    #[test]
    fn tail_bound_accuracy() {
        for k in [1usize, 5, 10, 100, 30000] {
            // Backward summation of a long stretch plus the midpoint-rule remainder.
            let far = k + 2_000_000;
            let direct: f64 = (k + 1..=far)
                .rev()
                .map(|j| 1.0 / (j as f64).powi(2))
                .sum::<f64>()
                + 1.0 / (far as f64 + 0.5);
            assert!(
                (inverse_square_tail(k) - direct).abs() < 1e-10 * direct,
                "{k}"
            );
        }
    }

    #[test]
    fn space_grid_resolution() {
        let g = uniform_space_grid(0.0, PI, 0.0015).unwrap();
        assert_eq!(g.len(), 2095);
        assert_eq!(g[0], 0.0);
        assert_eq!(*g.last().unwrap(), PI);
    }
}
