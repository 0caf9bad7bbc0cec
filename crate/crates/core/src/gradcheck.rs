//! Central finite-difference check of the analytic gradients.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::f64::consts::TAU;

use crate::error::{Error, Result};
use crate::optimizer::{cost, forward, grad_alpha, grad_omega, MnnState};
use crate::signal::Signal;

/// Pass/fail bound on the maximum relative error.
pub const GRADCHECK_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GradcheckConfig {
    /// Largest signal length drawn.
    pub n: usize,
    /// Largest node count drawn.
    pub m: usize,
    pub trials: usize,
    pub seed: u64,
    pub step: f64,
    /// Scales the analytic gradients by `1 + perturb` as a negative control.
    pub perturb: f64,
}

impl Default for GradcheckConfig {
    fn default() -> Self {
        Self { n: 16, m: 4, trials: 100, seed: 0, step: 1e-6, perturb: 0.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradcheckResult {
    pub max_rel_error: f64,
    pub trials: usize,
    pub passed: bool,
}

fn random_instance(rng: &mut ChaCha8Rng, n: usize, m: usize) -> Result<(MnnState, Signal)> {
    let omegas = (0..m).map(|_| rng.random_range(0.0..TAU)).collect();
    let alphas = (0..m)
        .map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
        .collect();
    let y = (0..n)
        .map(|_| Complex64::new(rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)))
        .collect();
    Ok((MnnState::new(omegas, alphas)?, Signal::new(y)?))
}

fn cost_of(state: &MnnState, y: &Signal) -> f64 {
    cost(y, &forward(state, y.len())).unwrap_or(f64::NAN)
}

/// Relative error of one instance: worst component error over the largest
/// finite-difference component, for each gradient block.
pub fn instance_error(state: &MnnState, y: &Signal, step: f64, perturb: f64) -> Result<f64> {
    let ga = grad_alpha(state, y)?;
    let gw = grad_omega(state, y)?;
    let h = step;
    let mut fd_a = Vec::with_capacity(state.len());
    let mut fd_w = Vec::with_capacity(state.len());
    for i in 0..state.len() {
        let bump_a = |d: Complex64| {
            let mut p = state.clone();
            p.alphas[i] += d;
            cost_of(&p, y)
        };
        let dre = (bump_a(Complex64::new(h, 0.0)) - bump_a(Complex64::new(-h, 0.0))) / (2.0 * h);
        let dim = (bump_a(Complex64::new(0.0, h)) - bump_a(Complex64::new(0.0, -h))) / (2.0 * h);
        // ∂C/∂α* = ½(∂C/∂Re α + j ∂C/∂Im α)
        fd_a.push(Complex64::new(0.5 * dre, 0.5 * dim));
        let bump_w = |d: f64| {
            let mut p = state.clone();
            p.omegas[i] += d;
            cost_of(&p, y)
        };
        fd_w.push((bump_w(h) - bump_w(-h)) / (2.0 * h));
    }
    let scale_a = fd_a.iter().map(|z| z.norm()).fold(f64::MIN_POSITIVE, f64::max);
    let scale_w = fd_w.iter().map(|z| z.abs()).fold(f64::MIN_POSITIVE, f64::max);
    let k = 1.0 + perturb;
    let err_a = ga.iter().zip(&fd_a).map(|(g, f)| (g * k - f).norm()).fold(0.0, f64::max) / scale_a;
    let err_w = gw.iter().zip(&fd_w).map(|(g, f)| (g * k - f).abs()).fold(0.0, f64::max) / scale_w;
    Ok(err_a.max(err_w))
}

/// Draws `trials` instances with `N ∈ [max(2, M), n]`, `M ∈ [1, m]` and reports the worst error.
pub fn run_gradcheck(cfg: &GradcheckConfig) -> Result<GradcheckResult> {
    if cfg.n < 2 || cfg.m < 1 || cfg.m > cfg.n {
        return Err(Error::DomainError(format!("need n >= 2 and 1 <= m <= n, got n = {}, m = {}", cfg.n, cfg.m)));
    }
    if !(cfg.step > 0.0) || cfg.trials == 0 {
        return Err(Error::DomainError("step and trials must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut worst = 0.0f64;
    for _ in 0..cfg.trials {
        let m = rng.random_range(1..=cfg.m);
        let n = rng.random_range(m.max(2)..=cfg.n);
        let (state, y) = random_instance(&mut rng, n, m)?;
        let e = instance_error(&state, &y, cfg.step, cfg.perturb)?;
        worst = if e.is_nan() { f64::INFINITY } else { worst.max(e) };
    }
    Ok(GradcheckResult {
        max_rel_error: worst,
        trials: cfg.trials,
        passed: worst < GRADCHECK_TOLERANCE,
    })
}
