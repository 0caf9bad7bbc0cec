//! Network state, forward pass, least-squares cost, analytic Wirtinger
//! gradients and the momentum training loop.

use std::f64::consts::TAU;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::{wrap_omega, Signal};

const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };

/// Hidden-layer weights plus momentum buffers.
///
/// `omegas[i]` connects the time-index input to node `i`, `alphas[i]`
/// connects node `i` to the output.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MnnState {
    pub omegas: Vec<f64>,
    pub alphas: Vec<Complex64>,
    pub mom_omega: Vec<f64>,
    pub mom_alpha: Vec<Complex64>,
}

impl MnnState {
    /// Builds a state with zeroed momentum.
    pub fn new(omegas: Vec<f64>, alphas: Vec<Complex64>) -> Result<Self> {
        if omegas.len() != alphas.len() {
            return Err(Error::InvalidDimension(format!(
                "{} frequencies but {} amplitudes",
                omegas.len(),
                alphas.len()
            )));
        }
        if omegas.iter().any(|w| !w.is_finite()) || alphas.iter().any(|a| !a.re.is_finite() || !a.im.is_finite()) {
            return Err(Error::DegenerateInput("network weights must be finite".into()));
        }
        let m = omegas.len();
        Ok(Self {
            omegas,
            alphas,
            mom_omega: vec![0.0; m],
            mom_alpha: vec![ZERO; m],
        })
    }

    pub fn empty() -> Self {
        Self::default()
    }

    /// Number of hidden nodes `M`.
    pub fn len(&self) -> usize {
        self.omegas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.omegas.is_empty()
    }

    pub fn reset_momentum(&mut self) {
        self.mom_omega.iter_mut().for_each(|d| *d = 0.0);
        self.mom_alpha.iter_mut().for_each(|d| *d = ZERO);
    }

    /// Keeps only the nodes whose mask entry is true.
    pub(crate) fn retain(&mut self, keep: &[bool]) {
        fn filter<T: Copy>(v: &[T], keep: &[bool]) -> Vec<T> {
            v.iter().zip(keep).filter(|(_, &k)| k).map(|(x, _)| *x).collect()
        }
        self.omegas = filter(&self.omegas, keep);
        self.alphas = filter(&self.alphas, keep);
        self.mom_omega = filter(&self.mom_omega, keep);
        self.mom_alpha = filter(&self.mom_alpha, keep);
    }

    /// Reorders nodes by ascending frequency.
    pub(crate) fn sort_by_frequency(&mut self) {
        let mut order: Vec<usize> = (0..self.len()).collect();
        order.sort_by(|&a, &b| self.omegas[a].total_cmp(&self.omegas[b]));
        self.omegas = order.iter().map(|&i| self.omegas[i]).collect();
        self.alphas = order.iter().map(|&i| self.alphas[i]).collect();
        self.mom_omega = order.iter().map(|&i| self.mom_omega[i]).collect();
        self.mom_alpha = order.iter().map(|&i| self.mom_alpha[i]).collect();
    }
}

/// Resolved learning rates for the amplitude and frequency blocks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rates {
    pub alpha: f64,
    pub omega: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    /// Amplitude learning rate; `None` selects `0.5 / N`.
    pub gamma_alpha: Option<f64>,
    /// Frequency learning rate; `None` selects `0.5 / (ρ₁ · P)` where `P` is the
    /// larger of `‖y‖²/N` and the largest starting `|α̃_i|²`.
    pub gamma_omega: Option<f64>,
    /// Momentum parameter in `[0, 1)`.
    pub lambda: f64,
    /// Stop once the mean residual changes by less than this between iterations.
    pub eps_tol: f64,
    /// Compare the change with `eps_tol` times the current mean residual.
    #[serde(default = "default_relative_tol")]
    pub relative_tol: bool,
    /// Number of consecutive iterations the change must stay below tolerance.
    #[serde(default = "default_settle_window")]
    pub settle_window: usize,
    pub max_iter: usize,
    /// Consecutive cost increases tolerated before the step sizes are halved.
    pub safeguard_patience: usize,
}

fn default_relative_tol() -> bool {
    true
}

fn default_settle_window() -> usize {
    20
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            gamma_alpha: None,
            gamma_omega: None,
            lambda: 0.9,
            eps_tol: 3e-4,
            relative_tol: default_relative_tol(),
            settle_window: default_settle_window(),
            max_iter: 20_000,
            safeguard_patience: 20,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad_rate = |g: Option<f64>| matches!(g, Some(v) if !(v > 0.0 && v.is_finite()));
        if bad_rate(self.gamma_alpha) || bad_rate(self.gamma_omega) {
            return Err(Error::DomainError("learning rates must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.lambda) {
            return Err(Error::DomainError(format!("momentum must lie in [0,1), got {}", self.lambda)));
        }
        if !(self.eps_tol > 0.0) {
            return Err(Error::DomainError("tolerance must be positive".into()));
        }
        if self.max_iter == 0 || self.safeguard_patience == 0 || self.settle_window == 0 {
            return Err(Error::DomainError(
                "max_iter, safeguard_patience and settle_window must be >= 1".into(),
            ));
        }
        Ok(())
    }

    /// Learning rates for a signal of `n_samples` with mean power `power`.
    pub fn rates(&self, n_samples: usize, power: f64) -> Rates {
        let n = n_samples as f64;
        let rho1 = sum_n_squared(n_samples);
        let power = if power > 0.0 && power.is_finite() { power } else { 1.0 };
        Rates {
            alpha: self.gamma_alpha.unwrap_or(0.5 / n),
            omega: self.gamma_omega.unwrap_or(0.5 / (rho1.max(1.0) * power)),
        }
    }
}

/// `Σ_{n=0}^{N-1} n²`
pub fn sum_n_squared(n_samples: usize) -> f64 {
    let n = n_samples as f64;
    (n - 1.0) * n * (2.0 * n - 1.0) / 6.0
}

/// Mean-residual trajectory of one training run.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct CostTrace {
    /// `C̄(t) = ‖y - x̂(t)‖²/N` for the initial state and every accepted step.
    pub costs: Vec<f64>,
    pub iterations_run: usize,
    pub converged: bool,
}

fn atoms(omegas: &[f64], n_samples: usize) -> Vec<Vec<Complex64>> {
    omegas
        .iter()
        .map(|&w| (0..n_samples).map(|n| Complex64::from_polar(1.0, w * n as f64)).collect())
        .collect()
}

fn synthesize_from(atoms: &[Vec<Complex64>], alphas: &[Complex64], n_samples: usize) -> Vec<Complex64> {
    let mut x = vec![ZERO; n_samples];
    for (a, &alpha) in atoms.iter().zip(alphas) {
        for (xn, an) in x.iter_mut().zip(a) {
            *xn += alpha * an;
        }
    }
    x
}

/// Model output `x̂ = A(ω̃) α̃`.
pub fn forward(state: &MnnState, n_samples: usize) -> Vec<Complex64> {
    let mut x = vec![ZERO; n_samples];
    for (&w, &alpha) in state.omegas.iter().zip(&state.alphas) {
        for (n, xn) in x.iter_mut().enumerate() {
            *xn += alpha * Complex64::from_polar(1.0, w * n as f64);
        }
    }
    x
}

/// Least-squares cost `‖y - x̂‖²`.
pub fn cost(observed: &Signal, model: &[Complex64]) -> Result<f64> {
    if observed.len() != model.len() {
        return Err(Error::InvalidDimension(format!(
            "signal has {} samples, model has {}",
            observed.len(),
            model.len()
        )));
    }
    Ok(observed
        .samples()
        .iter()
        .zip(model)
        .map(|(y, x)| (y - x).norm_sqr())
        .sum())
}

/// Cost and both gradients from one set of atoms.
struct Evaluation {
    cost: f64,
    g_alpha: Vec<Complex64>,
    g_omega: Vec<f64>,
}

fn evaluate(state: &MnnState, y: &[Complex64]) -> Evaluation {
    let n_samples = y.len();
    let a = atoms(&state.omegas, n_samples);
    let x = synthesize_from(&a, &state.alphas, n_samples);
    // r = y - x̂
    let r: Vec<Complex64> = y.iter().zip(&x).map(|(yn, xn)| yn - xn).collect();
    let cost = r.iter().map(|z| z.norm_sqr()).sum();
    let mut g_alpha = Vec::with_capacity(state.len());
    let mut g_omega = Vec::with_capacity(state.len());
    for (ai, &alpha) in a.iter().zip(&state.alphas) {
        let mut proj = ZERO;
        let mut weighted = ZERO;
        for (n, (an, rn)) in ai.iter().zip(&r).enumerate() {
            proj += an.conj() * rn;
            weighted += an * rn.conj() * n as f64;
        }
        // Aᴴ(x̂ - y)
        g_alpha.push(-proj);
        // 2 Im{α ⊙ Aᵀ[n ⊙ (y - x̂)*]}
        g_omega.push(2.0 * (alpha * weighted).im);
    }
    Evaluation { cost, g_alpha, g_omega }
}

fn check_len(state: &MnnState, observed: &Signal) -> Result<()> {
    if state.is_empty() {
        return Err(Error::InvalidDimension("gradient needs at least one node".into()));
    }
    if observed.is_empty() {
        return Err(Error::InvalidDimension("empty signal".into()));
    }
    Ok(())
}

/// `∂C/∂α̃* = Aᴴ(x̂ - y)`.
pub fn grad_alpha(state: &MnnState, observed: &Signal) -> Result<Vec<Complex64>> {
    check_len(state, observed)?;
    Ok(evaluate(state, observed.samples()).g_alpha)
}

/// `∂C/∂ω̃ = 2 Im{α̃ ⊙ Aᵀ[n ⊙ (y - x̂)*]}`.
pub fn grad_omega(state: &MnnState, observed: &Signal) -> Result<Vec<f64>> {
    check_len(state, observed)?;
    Ok(evaluate(state, observed.samples()).g_omega)
}

/// One momentum update: `d ← λ d + (1 - λ) g`, then `w ← w - γ d`.
pub fn momentum_step(
    state: &MnnState,
    g_alpha: &[Complex64],
    g_omega: &[f64],
    lambda: f64,
    rates: Rates,
) -> Result<MnnState> {
    let m = state.len();
    if g_alpha.len() != m || g_omega.len() != m {
        return Err(Error::InvalidDimension(format!(
            "gradients of length ({}, {}) for {m} nodes",
            g_alpha.len(),
            g_omega.len()
        )));
    }
    if g_alpha.iter().any(|g| !g.re.is_finite() || !g.im.is_finite()) || g_omega.iter().any(|g| !g.is_finite()) {
        return Err(Error::NumericalDivergence { iteration: 0, partial: None });
    }
    let mut next = state.clone();
    for i in 0..m {
        next.mom_alpha[i] = state.mom_alpha[i] * lambda + g_alpha[i] * (1.0 - lambda);
        next.mom_omega[i] = lambda * state.mom_omega[i] + (1.0 - lambda) * g_omega[i];
        next.alphas[i] = state.alphas[i] - next.mom_alpha[i] * rates.alpha;
        next.omegas[i] = state.omegas[i] - rates.omega * next.mom_omega[i];
    }
    Ok(next)
}

/// Replaces every frequency by `mod(ω̃, 2π)`.
pub fn wrap_frequencies(mut state: MnnState) -> MnnState {
    state.omegas.iter_mut().for_each(|w| *w = wrap_omega(*w));
    state
}

const MAX_HALVINGS: usize = 60;

/// Trains the network from `state` until the mean residual settles.
///
/// Momentum buffers start at zero. When the cost rises for
/// `safeguard_patience` consecutive iterations (one iteration when
/// `lambda == 0`), the run rewinds to the last non-increasing iterate, halves
/// both learning rates and clears the momentum.
pub fn train_inner(observed: &Signal, state: &MnnState, cfg: &TrainConfig) -> Result<(MnnState, CostTrace)> {
    cfg.validate()?;
    let y = observed.samples();
    let n = y.len() as f64;
    let mut current = state.clone();
    current.reset_momentum();

    let mut eval = evaluate(&current, y);
    if !eval.cost.is_finite() {
        return Err(Error::NumericalDivergence { iteration: 0, partial: None });
    }
    let mut trace = CostTrace {
        costs: vec![eval.cost / n],
        iterations_run: 0,
        converged: false,
    };
    if current.is_empty() {
        trace.converged = true;
        return Ok((current, trace));
    }

    let peak = current.alphas.iter().map(|a| a.norm_sqr()).fold(0.0, f64::max);
    let mut rates = cfg.rates(y.len(), (observed.energy() / n).max(peak));
    let patience = if cfg.lambda == 0.0 { 1 } else { cfg.safeguard_patience };
    let mut rises = 0usize;
    let mut halvings = 0usize;
    let mut settled = 0usize;
    // last iterate that did not raise the cost
    let mut anchor = (current.clone(), trace.costs.len());
    let mut anchor_eval = Evaluation {
        cost: eval.cost,
        g_alpha: eval.g_alpha.clone(),
        g_omega: eval.g_omega.clone(),
    };

    for t in 1..=cfg.max_iter {
        trace.iterations_run = t;
        let candidate = momentum_step(&current, &eval.g_alpha, &eval.g_omega, cfg.lambda, rates)
            .map_err(|e| match e {
                Error::NumericalDivergence { .. } => Error::NumericalDivergence { iteration: t, partial: None },
                other => other,
            })?;
        let next = evaluate(&candidate, y);
        if !next.cost.is_finite() {
            return Err(Error::NumericalDivergence { iteration: t, partial: None });
        }
        let prev = *trace.costs.last().unwrap();
        let cbar = next.cost / n;
        let delta = cbar - prev;
        let tol = if cfg.relative_tol { cfg.eps_tol * prev } else { cfg.eps_tol };
        let small = delta.abs() < tol || delta == 0.0;

        if delta > 0.0 {
            rises += 1;
            if rises >= patience {
                if small {
                    trace.converged = true;
                    break;
                }
                halvings += 1;
                if halvings > MAX_HALVINGS {
                    break;
                }
                rates.alpha *= 0.5;
                rates.omega *= 0.5;
                current = anchor.0.clone();
                current.reset_momentum();
                trace.costs.truncate(anchor.1);
                eval = Evaluation {
                    cost: anchor_eval.cost,
                    g_alpha: anchor_eval.g_alpha.clone(),
                    g_omega: anchor_eval.g_omega.clone(),
                };
                rises = 0;
                settled = 0;
                continue;
            }
        } else {
            rises = 0;
        }

        current = candidate;
        eval = next;
        trace.costs.push(cbar);
        if rises == 0 {
            anchor = (current.clone(), trace.costs.len());
            anchor_eval = Evaluation {
                cost: eval.cost,
                g_alpha: eval.g_alpha.clone(),
                g_omega: eval.g_omega.clone(),
            };
        }
        if small {
            settled += 1;
            if settled >= cfg.settle_window {
                trace.converged = true;
                break;
            }
        } else {
            settled = 0;
        }
    }
    Ok((current, trace))
}

/// Shortest distance between two angles on the circle.
pub(crate) fn circular_distance(a: f64, b: f64) -> f64 {
    let d = (wrap_omega(a) - wrap_omega(b)).abs();
    d.min(TAU - d)
}
