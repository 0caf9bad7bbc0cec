//! Network initialization from a zero-padded FFT, and the plain periodogram
//! estimator used as a comparison baseline.

use std::collections::BTreeSet;
use std::f64::consts::{LN_2, PI, TAU};

use nalgebra::DVector;
use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::optimizer::{circular_distance, MnnState};
use crate::signal::{design_matrix, Signal, Sinusoid, SinusoidSet};

/// Condition number above which the least-squares amplitudes are refused.
pub const MAX_CONDITION: f64 = 1e12;

/// Initial nodes whose amplitude is below this fraction of the largest are dropped.
const TIE_TOLERANCE: f64 = 1e-12;
const SIDELOBE_OFFSETS: usize = 32;

pub const NEGLIGIBLE_AMPLITUDE: f64 = 1e-10;

/// Which FFT bins next to a peak join the candidate set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Neighbors {
    /// The adjacent bin with more power (ties go to `k + 1`).
    Larger,
    /// Both adjacent bins.
    Both,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InitConfig {
    /// FFT length is `l_factor · N`.
    pub l_factor: usize,
    /// False-alarm level of the noise gate applied to spectral peaks.
    pub peak_gate_epsilon: f64,
    pub neighbors: Neighbors,
    /// Reject peaks that fit under the sidelobe envelope of stronger peaks.
    pub sidelobe_guard: bool,
}

impl Default for InitConfig {
    fn default() -> Self {
        Self {
            l_factor: 4,
            peak_gate_epsilon: 1e-3,
            neighbors: Neighbors::Larger,
            sidelobe_guard: true,
        }
    }
}

impl InitConfig {
    pub fn validate(&self) -> Result<()> {
        if self.l_factor == 0 {
            return Err(Error::DomainError("l_factor must be >= 1".into()));
        }
        if !(self.peak_gate_epsilon > 0.0 && self.peak_gate_epsilon < 1.0) {
            return Err(Error::DomainError("peak_gate_epsilon must lie in (0,1)".into()));
        }
        Ok(())
    }
}

/// Sorted, duplicate-free initial frequencies in `[0, 2π)`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct CandidateSet {
    omegas: Vec<f64>,
}

impl CandidateSet {
    /// Builds a set from arbitrary frequencies (wrapped, sorted, deduplicated).
    pub fn from_omegas(omegas: impl IntoIterator<Item = f64>) -> Self {
        let mut v: Vec<f64> = omegas.into_iter().map(crate::signal::wrap_omega).collect();
        v.sort_by(f64::total_cmp);
        v.dedup();
        Self { omegas: v }
    }

    pub fn omegas(&self) -> &[f64] {
        &self.omegas
    }

    pub fn len(&self) -> usize {
        self.omegas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.omegas.is_empty()
    }
}

/// `L`-point DFT of `y` zero-padded to `L = l_factor · N`; bin `k` is `ω = 2πk/L`.
pub fn zero_padded_fft(observed: &Signal, cfg: &InitConfig) -> Vec<Complex64> {
    let l = cfg.l_factor.max(1) * observed.len();
    let mut buf = vec![Complex64::new(0.0, 0.0); l];
    buf[..observed.len()].copy_from_slice(observed.samples());
    FftPlanner::new().plan_fft_forward(l).process(&mut buf);
    buf
}

/// Per-sample noise variance estimated from the spectrum median.
///
/// Under noise alone `|y^f_k|²` is exponential with mean `Nσ²`, whose median
/// is `Nσ² ln 2`.
pub fn noise_floor(spectrum_mag: &[f64], n_samples: usize) -> f64 {
    if spectrum_mag.is_empty() || n_samples == 0 {
        return 0.0;
    }
    let mut p: Vec<f64> = spectrum_mag.iter().map(|m| m * m).collect();
    p.sort_by(f64::total_cmp);
    let mid = p.len() / 2;
    let median = if p.len().is_multiple_of(2) { 0.5 * (p[mid - 1] + p[mid]) } else { p[mid] };
    median / (LN_2 * n_samples as f64)
}

/// `|Σ_n e^{jxn}|` over `n` samples.
fn dirichlet(x: f64, n: usize) -> f64 {
    let half = (0.5 * x).sin();
    if half.abs() < 1e-12 {
        return n as f64;
    }
    ((0.5 * n as f64 * x).sin() / half).abs()
}

/// Local maxima of the magnitude spectrum that clear the noise gate.
///
/// A bin is a peak when it is strictly above its left neighbor and not below
/// its right neighbor (circularly), and its power exceeds
/// `noise_floor · N · ln(1/ε)`. With the sidelobe guard on, a peak must also
/// rise above the summed worst-case Dirichlet leakage of the stronger peaks
/// already accepted. Returned indices are ascending.
pub fn find_peaks(spectrum_mag: &[f64], noise_floor: f64, cfg: &InitConfig) -> Vec<usize> {
    let l = spectrum_mag.len();
    if l < 3 {
        return Vec::new();
    }
    let n = (l / cfg.l_factor.max(1)).max(1);
    let gate_power = noise_floor * n as f64 * (1.0 / cfg.peak_gate_epsilon).ln();

    let mut local: Vec<usize> = (0..l)
        .filter(|&k| {
            let m = spectrum_mag[k];
            let left = spectrum_mag[(k + l - 1) % l];
            let right = spectrum_mag[(k + 1) % l];
            m > left && m >= right && m * m > gate_power
        })
        .collect();
    if !cfg.sidelobe_guard {
        return local;
    }

    local.sort_by(|&a, &b| spectrum_mag[b].total_cmp(&spectrum_mag[a]).then(a.cmp(&b)));
    let gate_mag = gate_power.max(0.0).sqrt();
    let main_lobe = TAU / n as f64;
    let half_bin = PI / l as f64;
    let mut accepted: Vec<usize> = Vec::new();
    for k in local {
        let wk = TAU * k as f64 / l as f64;
        let envelope: f64 = accepted
            .iter()
            .map(|&p| {
                let d = circular_distance(wk, TAU * p as f64 / l as f64);
                if d < main_lobe * (1.0 - 1e-9) {
                    return 0.0;
                }
                // worst case over where the tone behind peak p sits inside its bin
                let ratio = (0..=SIDELOBE_OFFSETS)
                    .map(|i| {
                        let delta = half_bin * (2.0 * i as f64 / SIDELOBE_OFFSETS as f64 - 1.0);
                        dirichlet(d + delta, n) / dirichlet(delta, n)
                    })
                    .fold(0.0, f64::max);
                spectrum_mag[p] * ratio
            })
            .sum();
        if spectrum_mag[k] > envelope * (1.0 + 1e-9) + gate_mag {
            accepted.push(k);
        }
    }
    accepted.sort_unstable();
    accepted
}

/// Adds each peak and its neighbor(s), then converts bins to frequencies.
pub fn augment_adjacent(peaks: &[usize], spectrum_mag: &[f64], cfg: &InitConfig) -> CandidateSet {
    let l = spectrum_mag.len();
    if l == 0 {
        return CandidateSet::default();
    }
    let mut bins = BTreeSet::new();
    for &k in peaks {
        let k = k % l;
        let lo = (k + l - 1) % l;
        let hi = (k + 1) % l;
        bins.insert(k);
        match cfg.neighbors {
            Neighbors::Larger => {
                // differences at rounding level count as ties, which go up
                let slack = TIE_TOLERANCE * spectrum_mag[k];
                bins.insert(if spectrum_mag[lo] > spectrum_mag[hi] + slack { lo } else { hi });
            }
            Neighbors::Both => {
                bins.insert(lo);
                bins.insert(hi);
            }
        }
    }
    CandidateSet {
        omegas: bins.into_iter().map(|k| TAU * k as f64 / l as f64).collect(),
    }
}

/// Least-squares amplitudes `(AᴴA)⁻¹Aᴴy`, solved through an SVD of `A`.
pub fn ls_amplitudes(candidates: &CandidateSet, observed: &Signal) -> Result<Vec<Complex64>> {
    ls_amplitudes_for(candidates.omegas(), observed)
}

pub fn ls_amplitudes_for(omegas: &[f64], observed: &Signal) -> Result<Vec<Complex64>> {
    let (m, n) = (omegas.len(), observed.len());
    if m == 0 {
        return Ok(Vec::new());
    }
    if m > n {
        return Err(Error::Overdetermined { m, n });
    }
    let a = design_matrix(omegas, n)?;
    let svd = a.svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    let condition = if smin > 0.0 { smax / smin } else { f64::INFINITY };
    if !(condition <= MAX_CONDITION) {
        return Err(Error::IllConditioned { condition });
    }
    let y = DVector::from_column_slice(observed.samples());
    let alpha = svd
        .solve(&y, 0.0)
        .map_err(|e| Error::DegenerateInput(e.to_string()))?;
    Ok(alpha.iter().copied().collect())
}

/// Intermediate products of [`initialize`], kept for diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InitReport {
    pub noise_floor: f64,
    pub peaks: Vec<usize>,
    pub candidates: CandidateSet,
    pub state: MnnState,
}

/// FFT → peaks → neighbor augmentation → least-squares amplitudes.
pub fn initialize(observed: &Signal, cfg: &InitConfig) -> Result<MnnState> {
    Ok(initialize_report(observed, cfg)?.state)
}

pub fn initialize_report(observed: &Signal, cfg: &InitConfig) -> Result<InitReport> {
    cfg.validate()?;
    let spectrum = zero_padded_fft(observed, cfg);
    let mag: Vec<f64> = spectrum.iter().map(|z| z.norm()).collect();
    let floor = noise_floor(&mag, observed.len());
    let peaks = find_peaks(&mag, floor, cfg);
    let candidates = augment_adjacent(&peaks, &mag, cfg);
    let l = mag.len();
    let power_at = |w: f64| mag[((w * l as f64 / TAU).round() as usize) % l];

    let mut omegas = candidates.omegas().to_vec();
    // more unknowns than samples: keep the strongest
    while omegas.len() > observed.len() {
        let weakest = (0..omegas.len())
            .min_by(|&a, &b| power_at(omegas[a]).total_cmp(&power_at(omegas[b])))
            .unwrap();
        omegas.remove(weakest);
    }
    let alphas = loop {
        match ls_amplitudes_for(&omegas, observed) {
            Ok(a) => break a,
            Err(Error::IllConditioned { .. }) if omegas.len() > 1 => {
                // drop the weaker member of the closest pair
                let m = omegas.len();
                let (i, j) = (0..m)
                    .map(|i| (i, (i + 1) % m))
                    .filter(|&(i, j)| i != j)
                    .min_by(|a, b| {
                        circular_distance(omegas[a.0], omegas[a.1])
                            .total_cmp(&circular_distance(omegas[b.0], omegas[b.1]))
                    })
                    .unwrap();
                let drop = if power_at(omegas[i]) < power_at(omegas[j]) { i } else { j };
                omegas.remove(drop);
            }
            Err(e) => return Err(e),
        }
    };
    // a candidate whose least-squares amplitude is numerically zero carries nothing
    let peak = alphas.iter().map(|a| a.norm()).fold(0.0, f64::max);
    let (omegas, alphas) = if alphas.iter().any(|a| a.norm() <= NEGLIGIBLE_AMPLITUDE * peak) {
        let kept: Vec<f64> = omegas
            .iter()
            .zip(&alphas)
            .filter(|(_, a)| a.norm() > NEGLIGIBLE_AMPLITUDE * peak)
            .map(|(w, _)| *w)
            .collect();
        let refit = ls_amplitudes_for(&kept, observed)?;
        (kept, refit)
    } else {
        (omegas, alphas)
    };
    let state = MnnState::new(omegas, alphas)?;
    Ok(InitReport {
        noise_floor: floor,
        peaks,
        candidates,
        state,
    })
}

/// Plain FFT estimator: peak frequencies with amplitudes `y^f_k / N`.
pub fn periodogram_estimate(observed: &Signal, cfg: &InitConfig) -> Result<SinusoidSet> {
    cfg.validate()?;
    let spectrum = zero_padded_fft(observed, cfg);
    let mag: Vec<f64> = spectrum.iter().map(|z| z.norm()).collect();
    let floor = noise_floor(&mag, observed.len());
    let l = spectrum.len() as f64;
    let n = observed.len() as f64;
    Ok(find_peaks(&mag, floor, cfg)
        .into_iter()
        .map(|k| Sinusoid::new(spectrum[k] / n, TAU * k as f64 / l))
        .collect::<Vec<_>>()
        .into())
}
