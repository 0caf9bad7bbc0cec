use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::{frequency_crb, match_components, noisy_at_snr};
use crate::error::Result;
use crate::init::{initialize_report, Neighbors};
use crate::optimizer::circular_distance;
use crate::pipeline::{estimate_spectrum, EstimatorConfig, RunReport};
use crate::signal::{Sinusoid, SinusoidSet};

pub const CLUSTER_N: usize = 128;
pub const CLUSTER_SNR_DB: f64 = 20.0;

/// Two clusters of five tones each around normalized 0.3 and 0.7.
pub fn cluster_truth() -> SinusoidSet {
    let n = CLUSTER_N as f64;
    let offsets_a = [0.0, 0.75, -0.75, 1.8, -1.8];
    let offsets_b = [0.0, 0.8, -0.8, 2.0, -2.0];
    let mags = [1.0, 0.8, 0.8, 0.6, 0.6];
    let phases = [[4.52, 3.10, 4.46, 5.83, 2.18], [4.06, 3.03, 4.13, 5.80, 1.37]];
    let mut comps = Vec::with_capacity(10);
    for (c, (center, offsets)) in [(0.3, offsets_a), (0.7, offsets_b)].into_iter().enumerate() {
        for i in 0..5 {
            comps.push(Sinusoid::from_normalized(
                Complex64::from_polar(mags[i], phases[c][i]),
                center + offsets[i] / n,
            ));
        }
    }
    SinusoidSet::new(comps).sorted()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentError {
    pub omega_true: f64,
    pub omega_est: f64,
    pub abs_error: f64,
    /// `3 sqrt(CRB(ω))`.
    pub bound: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterReport {
    pub seed: u64,
    pub sigma2: f64,
    pub fft_peaks: usize,
    pub initial_nodes: usize,
    pub k_hat: usize,
    pub truth: SinusoidSet,
    /// Filled when `k_hat` equals the true order.
    pub errors: Vec<ComponentError>,
    pub within_bound: Option<bool>,
    pub run: RunReport,
}

/// The default estimator with both neighbors of every FFT peak as candidates.
pub fn cluster_config() -> EstimatorConfig {
    let mut cfg = EstimatorConfig::default();
    cfg.init.neighbors = Neighbors::Both;
    cfg
}

/// Runs the two-cluster scenario for one noise seed.
pub fn cluster_case(seed: u64, cfg: &EstimatorConfig) -> Result<ClusterReport> {
    let truth = cluster_truth();
    let (y, sigma2) = noisy_at_snr(&truth, CLUSTER_N, CLUSTER_SNR_DB, seed)?;
    let init = initialize_report(&y, &cfg.init)?;
    let run = estimate_spectrum(&y, cfg)?;
    let mut errors = Vec::new();
    let mut within_bound = None;
    if run.k_hat() == truth.len() {
        let crb = frequency_crb(&truth, CLUSTER_N, sigma2)?;
        let est = run.estimates.as_slice();
        for (ti, ei) in match_components(&truth.omegas(), &run.estimates.omegas()) {
            let t = truth.as_slice()[ti].omega;
            let e = est[ei].omega;
            errors.push(ComponentError {
                omega_true: t,
                omega_est: e,
                abs_error: circular_distance(t, e),
                bound: 3.0 * crb[ti].sqrt(),
            });
        }
        within_bound = Some(errors.iter().all(|e| e.abs_error <= e.bound));
    }
    Ok(ClusterReport {
        seed,
        sigma2,
        fft_peaks: init.peaks.len(),
        initial_nodes: init.state.len(),
        k_hat: run.k_hat(),
        truth,
        errors,
        within_bound,
        run,
    })
}
