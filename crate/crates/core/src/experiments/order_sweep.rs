use std::f64::consts::TAU;

use num_complex::Complex64;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{noisy_at_snr, param_rng, CsvRow, RunMetadata, SweepResult};
use crate::error::{Error, Result};
use crate::optimizer::circular_distance;
use crate::pipeline::{estimate_spectrum, EstimatorConfig};
use crate::signal::{Sinusoid, SinusoidSet};

/// Largest estimated order with its own histogram bin; larger orders share the last bin.
pub const MAX_ORDER_BIN: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrderRow {
    pub k_true: usize,
    pub trials: usize,
    /// Counts of `K̂ = 0, 1, …, 4` and `K̂ ≥ 5`.
    pub histogram: Vec<usize>,
    pub fraction_correct: f64,
}

impl CsvRow for OrderRow {
    fn header() -> Vec<&'static str> {
        vec!["k_true", "trials", "khat_0", "khat_1", "khat_2", "khat_3", "khat_4", "khat_5_plus", "fraction_correct"]
    }

    fn fields(&self) -> Vec<String> {
        let mut f = vec![self.k_true.to_string(), self.trials.to_string()];
        f.extend(self.histogram.iter().map(|c| c.to_string()));
        f.push(self.fraction_correct.to_string());
        f
    }
}

/// `k` unit-magnitude tones with random phases and frequencies at least
/// `min_sep` apart on the circle.
pub fn random_separated_truth(k: usize, min_sep: f64, rng: &mut ChaCha8Rng) -> Result<SinusoidSet> {
    if k as f64 * min_sep >= TAU {
        return Err(Error::DomainError(format!("{k} tones cannot be {min_sep} apart")));
    }
    let mut omegas: Vec<f64> = Vec::with_capacity(k);
    let mut attempts = 0usize;
    while omegas.len() < k {
        attempts += 1;
        if attempts > 100_000 {
            // restart; dense packings can paint themselves into a corner
            omegas.clear();
            attempts = 0;
        }
        let w = rng.random_range(0.0..TAU);
        if omegas.iter().all(|&o| circular_distance(o, w) >= min_sep) {
            omegas.push(w);
        }
    }
    Ok(omegas
        .into_iter()
        .map(|w| Sinusoid::new(Complex64::from_polar(1.0, rng.random_range(0.0..TAU)), w))
        .collect::<Vec<_>>()
        .into())
}

/// Histogram of the estimated order for each true order in `orders`.
pub fn mc_order(
    orders: &[usize],
    n_samples: usize,
    snr_db: f64,
    trials: usize,
    base_seed: u64,
    cfg: &EstimatorConfig,
) -> Result<SweepResult<OrderRow>> {
    cfg.validate()?;
    if trials == 0 {
        return Err(Error::DomainError("trials must be >= 1".into()));
    }
    let min_sep = 4.0 * TAU / n_samples as f64;
    let mut rows = Vec::with_capacity(orders.len());
    for &k in orders {
        let k_hats: Vec<usize> = (0..trials)
            .into_par_iter()
            .map(|t| -> Result<usize> {
                let seed = base_seed.wrapping_add(t as u64);
                let truth = random_separated_truth(k, min_sep, &mut param_rng(seed))?;
                let (y, _) = noisy_at_snr(&truth, n_samples, snr_db, seed)?;
                Ok(estimate_spectrum(&y, cfg)?.k_hat())
            })
            .collect::<Result<Vec<_>>>()?;
        let mut histogram = vec![0usize; MAX_ORDER_BIN + 1];
        for &h in &k_hats {
            histogram[h.min(MAX_ORDER_BIN)] += 1;
        }
        let correct = k_hats.iter().filter(|&&h| h == k).count();
        rows.push(OrderRow {
            k_true: k,
            trials,
            histogram,
            fraction_correct: correct as f64 / trials as f64,
        });
    }
    Ok(SweepResult {
        metadata: RunMetadata {
            experiment: "order".into(),
            base_seed,
            trials,
            n_samples,
            config: *cfg,
            notes: vec![
                format!("SNR {snr_db} dB over the whole signal"),
                "unit magnitudes, uniform random phases, frequencies uniform with circular separation >= 4*2pi/N".into(),
                "the same seeds are reused for every true order".into(),
            ],
        },
        conditions: rows,
    })
}
