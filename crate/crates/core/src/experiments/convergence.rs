use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{noisy_at_snr, param_rng, with_random_phases, CsvRow, RunMetadata, SweepResult, TrialSpec};
use crate::error::Result;
use crate::init::initialize;
use crate::optimizer::{train_inner, TrainConfig};

/// Training behaviour for one (learning-rate scale, momentum) setting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRow {
    /// Multiplier applied to both default learning rates.
    pub gamma_scale: f64,
    pub lambda: f64,
    pub trials: usize,
    pub converged: usize,
    pub median_iterations: f64,
    /// Accepted costs never rose, in every trial.
    pub monotone: bool,
    /// Cost trajectory of the first trial.
    pub trace: Vec<f64>,
}

impl CsvRow for ConvergenceRow {
    fn header() -> Vec<&'static str> {
        vec!["gamma_scale", "lambda", "trials", "converged", "median_iterations", "monotone", "trace_len"]
    }

    fn fields(&self) -> Vec<String> {
        vec![
            self.gamma_scale.to_string(),
            self.lambda.to_string(),
            self.trials.to_string(),
            self.converged.to_string(),
            self.median_iterations.to_string(),
            self.monotone.to_string(),
            self.trace.len().to_string(),
        ]
    }
}

/// Trains from the FFT initialization once per seed for every setting and
/// records the cost trajectories.
pub fn convergence_trace(spec: &TrialSpec, gamma_grid: &[f64], lambda_grid: &[f64]) -> Result<SweepResult<ConvergenceRow>> {
    spec.validate()?;
    let n = spec.n_samples;
    let mut rows = Vec::new();
    for &scale in gamma_grid {
        for &lambda in lambda_grid {
            let runs: Vec<(usize, bool, Vec<f64>)> = (0..spec.trials)
                .into_par_iter()
                .map(|t| -> Result<_> {
                    let seed = spec.seed(t);
                    let truth = with_random_phases(&spec.truth, &mut param_rng(seed));
                    let (y, _) = noisy_at_snr(&truth, n, spec.snr_db, seed)?;
                    let base = spec.estimator.train.rates(n, y.energy() / n as f64);
                    let cfg = TrainConfig {
                        gamma_alpha: Some(scale * base.alpha),
                        gamma_omega: Some(scale * base.omega),
                        lambda,
                        ..spec.estimator.train
                    };
                    let state = initialize(&y, &spec.estimator.init)?;
                    let (_, trace) = train_inner(&y, &state, &cfg)?;
                    Ok((trace.iterations_run, trace.converged, trace.costs))
                })
                .collect::<Result<Vec<_>>>()?;
            let mut iters: Vec<usize> = runs.iter().map(|r| r.0).collect();
            iters.sort_unstable();
            let mid = iters.len() / 2;
            let median = if iters.len().is_multiple_of(2) {
                0.5 * (iters[mid - 1] + iters[mid]) as f64
            } else {
                iters[mid] as f64
            };
            rows.push(ConvergenceRow {
                gamma_scale: scale,
                lambda,
                trials: spec.trials,
                converged: runs.iter().filter(|r| r.1).count(),
                median_iterations: median,
                monotone: runs.iter().all(|r| r.2.windows(2).all(|w| w[1] <= w[0])),
                trace: runs[0].2.clone(),
            });
        }
    }
    Ok(SweepResult {
        metadata: RunMetadata {
            experiment: "converge".into(),
            base_seed: spec.base_seed,
            trials: spec.trials,
            n_samples: n,
            config: spec.estimator,
            notes: vec![
                format!("truth (rad/sample, magnitude): {:?}, SNR {} dB, random phases", spec.truth.iter().map(|s| (s.omega, s.amplitude.norm())).collect::<Vec<_>>(), spec.snr_db),
                "gamma_scale multiplies the default learning rates 0.5/N and 0.5/(sum n^2 * mean power)".into(),
                "one training pass from the FFT initialization, no merging or pruning".into(),
            ],
        },
        conditions: rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::{Sinusoid, SinusoidSet};
    use num_complex::Complex64;

    fn spec() -> TrialSpec {
        let truth = SinusoidSet::new(
            [0.1, 0.115, 0.37]
                .iter()
                .map(|&f| Sinusoid::from_normalized(Complex64::new(1.0, 0.0), f))
                .collect(),
        );
        TrialSpec::new(truth, 32, 10.0, 20, 21)
    }

    #[test]
    fn default_grid_converges_and_larger_rates_are_faster() {
        let r = convergence_trace(&spec(), &[0.25, 0.5, 1.0], &[0.0, 0.5, 0.9]).unwrap();
        for row in &r.conditions {
            assert_eq!(row.converged, row.trials, "{row:?}");
            if row.lambda == 0.0 {
                assert!(row.monotone);
            }
        }
        for &lambda in &[0.0, 0.5, 0.9] {
            let med: Vec<f64> = r.conditions.iter().filter(|c| c.lambda == lambda).map(|c| c.median_iterations).collect();
            assert!(med.windows(2).all(|w| w[1] <= w[0]), "lambda {lambda}: {med:?}");
        }
    }
}
