//! End-to-end estimator: initialize, then alternate training with merge and
//! prune passes until the network structure stops changing.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::init::{initialize, ls_amplitudes_for, InitConfig};
use crate::optimizer::{forward, train_inner, wrap_frequencies, CostTrace, MnnState, TrainConfig};
use crate::order::{apply_merges, apply_prunes, estimate_noise_var, MergeEvent, OrderConfig, PruneEvent};
use crate::signal::{Signal, Sinusoid, SinusoidSet};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimatorConfig {
    pub init: InitConfig,
    pub train: TrainConfig,
    pub order: OrderConfig,
    pub max_outer: usize,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        Self {
            init: InitConfig::default(),
            train: TrainConfig::default(),
            order: OrderConfig::default(),
            max_outer: 20,
        }
    }
}

impl EstimatorConfig {
    pub fn validate(&self) -> Result<()> {
        self.init.validate()?;
        self.train.validate()?;
        self.order.validate()?;
        if self.max_outer == 0 {
            return Err(Error::DomainError("max_outer must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    /// Sorted by frequency, each in `[0, 2π)`.
    pub estimates: SinusoidSet,
    pub sigma2_hat: f64,
    pub outer_iterations: usize,
    pub initial_nodes: usize,
    /// Costs of every inner pass, concatenated.
    pub cost_trace: Vec<f64>,
    pub inner_traces: Vec<CostTrace>,
    pub merge_events: Vec<MergeEvent>,
    pub prune_events: Vec<PruneEvent>,
    /// False when `max_outer` was hit while the structure was still changing.
    pub settled: bool,
}

impl RunReport {
    pub fn k_hat(&self) -> usize {
        self.estimates.len()
    }
}

/// Runs the full estimator from an FFT initialization.
pub fn estimate_spectrum(observed: &Signal, cfg: &EstimatorConfig) -> Result<RunReport> {
    check_inputs(observed, cfg)?;
    let state = initialize(observed, &cfg.init)?;
    run(observed, state, cfg)
}

/// Runs the estimator from caller-chosen frequencies with least-squares amplitudes.
pub fn estimate_with_fixed_order(observed: &Signal, omegas0: &[f64], cfg: &EstimatorConfig) -> Result<RunReport> {
    check_inputs(observed, cfg)?;
    let alphas = ls_amplitudes_for(omegas0, observed)?;
    let state = MnnState::new(omegas0.to_vec(), alphas)?;
    run(observed, state, cfg)
}

fn check_inputs(observed: &Signal, cfg: &EstimatorConfig) -> Result<()> {
    cfg.validate()?;
    if observed.len() < 2 {
        return Err(Error::InvalidDimension(format!("need N >= 2 samples, got {}", observed.len())));
    }
    Ok(())
}

struct Progress {
    initial_nodes: usize,
    outer_iterations: usize,
    inner_traces: Vec<CostTrace>,
    merge_events: Vec<MergeEvent>,
    prune_events: Vec<PruneEvent>,
    settled: bool,
}

impl Progress {
    fn report(&self, observed: &Signal, state: &MnnState) -> RunReport {
        let finished = finalize(state);
        let model = forward(&finished, observed.len());
        let sigma2_hat = estimate_noise_var(observed, &model).unwrap_or(f64::NAN);
        RunReport {
            estimates: finished
                .omegas
                .iter()
                .zip(&finished.alphas)
                .map(|(&w, &a)| Sinusoid::new(a, w))
                .collect::<Vec<_>>()
                .into(),
            sigma2_hat,
            outer_iterations: self.outer_iterations,
            initial_nodes: self.initial_nodes,
            cost_trace: self.inner_traces.iter().flat_map(|t| t.costs.iter().copied()).collect(),
            inner_traces: self.inner_traces.clone(),
            merge_events: self.merge_events.clone(),
            prune_events: self.prune_events.clone(),
            settled: self.settled,
        }
    }
}

/// Wraps, sorts, and folds nodes that landed on the same frequency.
fn finalize(state: &MnnState) -> MnnState {
    let mut s = wrap_frequencies(state.clone());
    s.sort_by_frequency();
    let mut omegas: Vec<f64> = Vec::with_capacity(s.len());
    let mut alphas: Vec<Complex64> = Vec::with_capacity(s.len());
    for (&w, &a) in s.omegas.iter().zip(&s.alphas) {
        match omegas.last() {
            Some(&prev) if prev == w => *alphas.last_mut().unwrap() += a,
            _ => {
                omegas.push(w);
                alphas.push(a);
            }
        }
    }
    MnnState {
        mom_omega: vec![0.0; omegas.len()],
        mom_alpha: vec![Complex64::new(0.0, 0.0); omegas.len()],
        omegas,
        alphas,
    }
}

fn run(observed: &Signal, mut state: MnnState, cfg: &EstimatorConfig) -> Result<RunReport> {
    let mut progress = Progress {
        initial_nodes: state.len(),
        outer_iterations: 0,
        inner_traces: Vec::new(),
        merge_events: Vec::new(),
        prune_events: Vec::new(),
        settled: true,
    };
    if state.is_empty() {
        return Ok(progress.report(observed, &state));
    }

    progress.settled = false;
    for tau in 1..=cfg.max_outer {
        let (trained, trace) = match train_inner(observed, &state, &cfg.train) {
            Ok(r) => r,
            Err(Error::NumericalDivergence { iteration, .. }) => {
                let partial = progress.report(observed, &state);
                return Err(Error::NumericalDivergence {
                    iteration,
                    partial: Some(Box::new(partial)),
                });
            }
            Err(e) => return Err(e),
        };
        progress.outer_iterations = tau;
        progress.inner_traces.push(trace);

        let (merged, merges) = apply_merges(&trained, observed, &cfg.order);
        let (pruned, report) = apply_prunes(&merged, observed, &cfg.order);
        let prunes: Vec<PruneEvent> = report
            .keep_mask
            .iter()
            .enumerate()
            .filter(|(_, &keep)| !keep)
            .map(|(i, _)| PruneEvent {
                omega: merged.omegas[i],
                amplitude: merged.alphas[i],
                xi: report.xi[i],
                threshold: report.threshold,
            })
            .collect();
        log::debug!(
            "outer pass {tau}: {} nodes, {} merged, {} pruned",
            trained.len(),
            merges.len(),
            prunes.len()
        );
        let changed = !merges.is_empty() || !prunes.is_empty();
        progress.merge_events.extend(merges);
        progress.prune_events.extend(prunes);

        if !changed {
            state = trained;
            progress.settled = true;
            break;
        }
        state = pruned;
        if state.is_empty() {
            progress.settled = true;
            break;
        }
    }
    Ok(progress.report(observed, &state))
}
