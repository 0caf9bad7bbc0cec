//! Seeded Monte Carlo harness: MSE against the Cramér–Rao bound, merge and
//! prune ROC curves, model-order accuracy, convergence traces and the
//! two-cluster scenario.
//!
//! Trial `i` of a sweep uses seed `base_seed + i` for both its noise and its
//! random phases, trials run in parallel, and results are reduced in trial
//! order so output never depends on scheduling.

mod cluster;
mod convergence;
mod mse;
mod order_sweep;
mod roc;

pub use cluster::{cluster_case, cluster_config, cluster_truth, ClusterReport, ComponentError, CLUSTER_N, CLUSTER_SNR_DB};
pub use convergence::{convergence_trace, ConvergenceRow};
pub use mse::{mc_mse, MseRow};
pub use order_sweep::{mc_order, random_separated_truth, OrderRow};
pub use roc::{mc_roc_merge, mc_roc_prune, roc_area, two_node_init, PruneScenario, RocRow};

use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::optimizer::{circular_distance, train_inner, MnnState, TrainConfig};
use crate::pipeline::EstimatorConfig;
use crate::signal::{noise_var_for_snr, synthesize, NoiseSpec, Signal, Sinusoid, SinusoidSet};

/// Monte Carlo setup shared by the sweeps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialSpec {
    /// Frequencies and magnitudes; phases are redrawn per trial when `random_phases` is set.
    pub truth: SinusoidSet,
    pub n_samples: usize,
    pub snr_db: f64,
    pub trials: usize,
    pub base_seed: u64,
    pub estimator: EstimatorConfig,
    pub random_phases: bool,
}

impl TrialSpec {
    pub fn new(truth: SinusoidSet, n_samples: usize, snr_db: f64, trials: usize, base_seed: u64) -> Self {
        Self {
            truth,
            n_samples,
            snr_db,
            trials,
            base_seed,
            estimator: EstimatorConfig::default(),
            random_phases: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::DomainError("trials must be >= 1".into()));
        }
        if self.n_samples < 2 {
            return Err(Error::InvalidDimension("n_samples must be >= 2".into()));
        }
        if !self.snr_db.is_finite() {
            return Err(Error::DomainError("snr_db must be finite".into()));
        }
        self.estimator.validate()
    }

    pub fn seed(&self, trial: usize) -> u64 {
        self.base_seed.wrapping_add(trial as u64)
    }
}

/// Independent stream for per-trial parameter draws, distinct from the noise stream.
pub fn param_rng(seed: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    rng
}

/// Keeps magnitudes and frequencies, draws fresh uniform phases.
pub fn with_random_phases(truth: &SinusoidSet, rng: &mut ChaCha8Rng) -> SinusoidSet {
    truth
        .iter()
        .map(|s| {
            let phase = rng.random_range(0.0..std::f64::consts::TAU);
            Sinusoid::new(Complex64::from_polar(s.amplitude.norm(), phase), s.omega)
        })
        .collect::<Vec<_>>()
        .into()
}

/// Clean signal plus noise at `snr_db = 10 log10(‖x‖² / (N σ²))`; returns the signal and σ².
pub fn noisy_at_snr(truth: &SinusoidSet, n: usize, snr_db: f64, seed: u64) -> Result<(Signal, f64)> {
    let clean = synthesize(truth, n, &NoiseSpec::noiseless())?;
    let sigma2 = noise_var_for_snr(&clean, snr_db)?;
    Ok((synthesize(truth, n, &NoiseSpec::new(sigma2, seed)?)?, sigma2))
}

/// Fisher information over `(Re α₁, Im α₁, ω₁, Re α₂, …)`: `(2/σ²) Re[DᴴD]`.
pub fn general_fim(truth: &SinusoidSet, n_samples: usize, sigma2: f64) -> Result<DMatrix<f64>> {
    if !(sigma2 > 0.0 && sigma2.is_finite()) {
        return Err(Error::DomainError(format!("sigma2 must be positive, got {sigma2}")));
    }
    let k = truth.len();
    let j = Complex64::new(0.0, 1.0);
    let mut d = DMatrix::<Complex64>::zeros(n_samples, 3 * k);
    for (c, s) in truth.iter().enumerate() {
        for n in 0..n_samples {
            let a = Complex64::from_polar(1.0, s.omega * n as f64);
            d[(n, 3 * c)] = a;
            d[(n, 3 * c + 1)] = j * a;
            d[(n, 3 * c + 2)] = j * n as f64 * s.amplitude * a;
        }
    }
    let g = d.adjoint() * d;
    Ok(g.map(|z| 2.0 / sigma2 * z.re))
}

/// Diagonal of the inverse Fisher information, ordered like [`general_fim`].
pub fn general_crb(truth: &SinusoidSet, n_samples: usize, sigma2: f64) -> Result<Vec<f64>> {
    let fim = general_fim(truth, n_samples, sigma2)?;
    let inv = fim.cholesky().ok_or(Error::SingularInformation)?.inverse();
    let diag: Vec<f64> = inv.diagonal().iter().copied().collect();
    if diag.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
        return Err(Error::SingularInformation);
    }
    Ok(diag)
}

/// Frequency entries of [`general_crb`].
pub fn frequency_crb(truth: &SinusoidSet, n_samples: usize, sigma2: f64) -> Result<Vec<f64>> {
    Ok(general_crb(truth, n_samples, sigma2)?.chunks(3).map(|c| c[2]).collect())
}

/// Pairs true and estimated components by repeatedly taking the closest
/// remaining pair (circular frequency distance). Returns `(truth, estimate)` indices.
pub fn match_components(truth: &[f64], estimates: &[f64]) -> Vec<(usize, usize)> {
    let mut pairs: Vec<(f64, usize, usize)> = Vec::with_capacity(truth.len() * estimates.len());
    for (i, &t) in truth.iter().enumerate() {
        for (j, &e) in estimates.iter().enumerate() {
            pairs.push((circular_distance(t, e), i, j));
        }
    }
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut used_t = vec![false; truth.len()];
    let mut used_e = vec![false; estimates.len()];
    let mut out = Vec::new();
    for (_, i, j) in pairs {
        if !used_t[i] && !used_e[j] {
            used_t[i] = true;
            used_e[j] = true;
            out.push((i, j));
        }
    }
    out.sort_unstable();
    out
}

/// Reproducibility record attached to every sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetadata {
    pub experiment: String,
    pub base_seed: u64,
    pub trials: usize,
    pub n_samples: usize,
    pub config: EstimatorConfig,
    /// Scenario description and modelling assumptions.
    pub notes: Vec<String>,
}

/// One CSV row per condition.
pub trait CsvRow {
    fn header() -> Vec<&'static str>;
    fn fields(&self) -> Vec<String>;
}

pub(crate) fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult<T> {
    pub metadata: RunMetadata,
    pub conditions: Vec<T>,
}

impl<T: Serialize + CsvRow> SweepResult<T> {
    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let map = |e: csv::Error| Error::Parse(e.to_string());
        w.write_record(T::header()).map_err(map)?;
        for row in &self.conditions {
            w.write_record(row.fields()).map_err(map)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Parse(e.to_string()))?;
        String::from_utf8(bytes).map_err(|e| Error::Parse(e.to_string()))
    }

    /// Writes `<stem>.json` and `<stem>.csv` into `dir`.
    pub fn write(&self, dir: &Path, stem: &str) -> Result<(PathBuf, PathBuf)> {
        fs::create_dir_all(dir)?;
        let json = dir.join(format!("{stem}.json"));
        let csv = dir.join(format!("{stem}.csv"));
        fs::write(&json, self.to_json()?)?;
        fs::write(&csv, self.to_csv()?)?;
        Ok((json, csv))
    }
}

/// Median wall time of one training iteration for `m` nodes on `n` samples.
pub fn iteration_time(n: usize, m: usize, iterations: usize, repeats: usize, seed: u64) -> Result<f64> {
    let mut rng = param_rng(seed);
    let omegas: Vec<f64> = (0..m).map(|_| rng.random_range(0.0..std::f64::consts::TAU)).collect();
    let truth: SinusoidSet = omegas
        .iter()
        .map(|&w| Sinusoid::new(Complex64::new(1.0, 0.0), w))
        .collect::<Vec<_>>()
        .into();
    let (y, _) = noisy_at_snr(&truth, n, 10.0, seed)?;
    let start = MnnState::new(omegas.iter().map(|w| w + 0.01).collect(), vec![Complex64::new(0.9, 0.0); m])?;
    let cfg = TrainConfig {
        eps_tol: f64::MIN_POSITIVE,
        max_iter: iterations,
        lambda: 0.0,
        ..Default::default()
    };
    let mut times: Vec<f64> = (0..repeats.max(1))
        .map(|_| {
            let t = std::time::Instant::now();
            let out = train_inner(&y, &start, &cfg);
            let elapsed = t.elapsed().as_secs_f64();
            let iters = out.map(|(_, tr)| tr.iterations_run.max(1)).unwrap_or(1);
            elapsed / iters as f64
        })
        .collect();
    times.sort_by(f64::total_cmp);
    Ok(times[times.len() / 2])
}
