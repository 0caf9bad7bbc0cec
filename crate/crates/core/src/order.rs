//! Model-order control: merging nodes whose frequencies are statistically
//! indistinguishable and pruning nodes that fail a CFAR power test.

use std::f64::consts::TAU;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::optimizer::{forward, sum_n_squared, wrap_frequencies, MnnState};
use crate::signal::{atom_unchecked, wrap_omega, Signal};
use crate::stats::{f_inv_cdf, f_sf, noncentral_f_cdf, std_normal_inv_cdf, FParams};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrderConfig {
    /// Frequency separation (rad/sample) below which two nodes count as one.
    pub delta_omega_min: f64,
    /// Merge significance level.
    pub epsilon_f: f64,
    /// Prune false-alarm rate.
    pub epsilon_a: f64,
}

impl Default for OrderConfig {
    fn default() -> Self {
        Self {
            delta_omega_min: 0.0,
            epsilon_f: 1e-6,
            epsilon_a: 1e-6,
        }
    }
}

impl OrderConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.delta_omega_min >= 0.0 && self.delta_omega_min.is_finite()) {
            return Err(Error::DomainError("delta_omega_min must be finite and >= 0".into()));
        }
        for (name, v) in [("epsilon_f", self.epsilon_f), ("epsilon_a", self.epsilon_a)] {
            if !(v > 0.0 && v < 1.0) {
                return Err(Error::DomainError(format!("{name} must lie in (0,1), got {v}")));
            }
        }
        Ok(())
    }
}

/// Cramér–Rao bound for the frequencies of two nodes, amplitudes known.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CrbPair {
    pub matrix: [[f64; 2]; 2],
    /// Bound on the variance of `ω_j − ω_i`.
    pub crb_delta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PruneReport {
    pub xi: Vec<f64>,
    pub threshold: f64,
    pub keep_mask: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MergeEvent {
    pub omega_lo: f64,
    pub omega_hi: f64,
    pub merged_omega: f64,
    pub merged_amplitude: Complex64,
    /// `None` when the pair's information matrix was singular.
    pub crb_delta: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PruneEvent {
    pub omega: f64,
    pub amplitude: Complex64,
    pub xi: f64,
    pub threshold: f64,
}

/// `‖x̂ − y‖² / N`.
pub fn estimate_noise_var(observed: &Signal, model: &[Complex64]) -> Result<f64> {
    if model.len() != observed.len() {
        return Err(Error::InvalidDimension(format!(
            "model has {} samples, observation has {}",
            model.len(),
            observed.len()
        )));
    }
    let sse: f64 = observed
        .samples()
        .iter()
        .zip(model)
        .map(|(y, x)| (x - y).norm_sqr())
        .sum();
    Ok(sse / observed.len() as f64)
}

/// `(Σ n², Σ n² e^{j(ω_j − ω_i)n})`.
pub fn rho(omega_i: f64, omega_j: f64, n_samples: usize) -> (f64, Complex64) {
    let d = omega_j - omega_i;
    let rho2 = (0..n_samples)
        .map(|n| {
            let n = n as f64;
            Complex64::from_polar(n * n, d * n)
        })
        .sum();
    (sum_n_squared(n_samples), rho2)
}

pub fn crb_pair(
    alpha_i: Complex64,
    alpha_j: Complex64,
    omega_i: f64,
    omega_j: f64,
    sigma2: f64,
    n_samples: usize,
) -> Result<CrbPair> {
    if !(sigma2 > 0.0 && sigma2.is_finite()) {
        return Err(Error::DomainError(format!("sigma2 must be positive, got {sigma2}")));
    }
    let (rho1, rho2) = rho(omega_i, omega_j, n_samples);
    let pi = alpha_i.norm_sqr() * rho1;
    let pj = alpha_j.norm_sqr() * rho1;
    let cross = (alpha_i.conj() * alpha_j * rho2).re;
    let det = pi * pj - cross * cross;
    if !(det > 0.0 && det.is_finite()) {
        return Err(Error::SingularInformation);
    }
    let s = 0.5 * sigma2 / det;
    let matrix = [[s * pj, -s * cross], [-s * cross, s * pi]];
    let crb_delta = s * (pi + pj + 2.0 * cross);
    if !(crb_delta > 0.0 && crb_delta.is_finite()) {
        return Err(Error::SingularInformation);
    }
    Ok(CrbPair { matrix, crb_delta })
}

/// True when the pair should be merged:
/// `ω_hi − ω_lo < Δω_min − sqrt(CRB_Δ)·Φ⁻¹(ε_f)`.
pub fn merge_test(omega_lo: f64, omega_hi: f64, crb_delta: f64, cfg: &OrderConfig) -> bool {
    let Ok(z) = std_normal_inv_cdf(cfg.epsilon_f) else {
        return false;
    };
    omega_hi - omega_lo < cfg.delta_omega_min - crb_delta.sqrt() * z
}

fn pair_merges(
    state: &MnnState,
    i: usize,
    j: usize,
    omega_hi: f64,
    sigma2: f64,
    n: usize,
    cfg: &OrderConfig,
) -> (bool, Option<f64>) {
    let lo = state.omegas[i];
    match crb_pair(state.alphas[i], state.alphas[j], lo, omega_hi, sigma2, n) {
        Ok(c) => (merge_test(lo, omega_hi, c.crb_delta, cfg), Some(c.crb_delta)),
        // no information to tell the two apart
        Err(_) => (true, None),
    }
}

fn merge_into(state: &mut MnnState, keep: usize, drop: usize, omega: f64) {
    state.omegas[keep] = omega;
    let extra = state.alphas[drop];
    state.alphas[keep] += extra;
    state.mom_omega[keep] = 0.0;
    state.mom_alpha[keep] = Complex64::new(0.0, 0.0);
    state.omegas.remove(drop);
    state.alphas.remove(drop);
    state.mom_omega.remove(drop);
    state.mom_alpha.remove(drop);
}

/// One greedy merge pass over frequency-adjacent pairs, including the
/// wrap-around pair. The noise variance is estimated once from the input state.
pub fn apply_merges(state: &MnnState, observed: &Signal, cfg: &OrderConfig) -> (MnnState, Vec<MergeEvent>) {
    let mut s = state.clone();
    let mut events = Vec::new();
    if s.len() < 2 {
        return (s, events);
    }
    let n = observed.len();
    let sigma2 = estimate_noise_var(observed, &forward(&s, n))
        .unwrap_or(0.0)
        .max(f64::MIN_POSITIVE);
    s = wrap_frequencies(s);
    s.sort_by_frequency();

    let mut i = 0;
    while i + 1 < s.len() {
        let (lo, hi) = (s.omegas[i], s.omegas[i + 1]);
        let (merge, crb) = pair_merges(&s, i, i + 1, hi, sigma2, n, cfg);
        if merge {
            let merged = 0.5 * (lo + hi);
            merge_into(&mut s, i, i + 1, merged);
            events.push(MergeEvent {
                omega_lo: lo,
                omega_hi: hi,
                merged_omega: merged,
                merged_amplitude: s.alphas[i],
                crb_delta: crb,
            });
        } else {
            i += 1;
        }
    }

    while s.len() >= 2 {
        let last = s.len() - 1;
        let lo = s.omegas[last];
        let hi = s.omegas[0] + TAU;
        let (merge, crb) = pair_merges(&s, last, 0, hi, sigma2, n, cfg);
        if !merge {
            break;
        }
        let merged = wrap_omega(0.5 * (lo + hi));
        merge_into(&mut s, last, 0, merged);
        events.push(MergeEvent {
            omega_lo: lo,
            omega_hi: wrap_omega(hi),
            merged_omega: merged,
            merged_amplitude: s.alphas[last - 1],
            crb_delta: crb,
        });
        s.sort_by_frequency();
    }
    (s, events)
}

fn residual_energy(state: &MnnState, observed: &Signal) -> Result<f64> {
    let model = forward(state, observed.len());
    let r: f64 = observed
        .samples()
        .iter()
        .zip(&model)
        .map(|(y, x)| (y - x).norm_sqr())
        .sum();
    if r <= f64::EPSILON * f64::EPSILON * observed.energy() || r == 0.0 {
        return Err(Error::DegenerateResidual);
    }
    Ok(r)
}

fn projected_power(omega: f64, observed: &Signal) -> f64 {
    atom_unchecked(omega, observed.len())
        .iter()
        .zip(observed.samples())
        .map(|(a, y)| a.conj() * y)
        .sum::<Complex64>()
        .norm_sqr()
}

/// `ξ_i = |a(ω_i)ᴴ y|² / ‖y − Aα‖²`.
pub fn prune_statistic(node_index: usize, state: &MnnState, observed: &Signal) -> Result<f64> {
    if node_index >= state.len() {
        return Err(Error::InvalidDimension(format!(
            "node {node_index} out of range for {} nodes",
            state.len()
        )));
    }
    let r = residual_energy(state, observed)?;
    Ok(projected_power(state.omegas[node_index], observed) / r)
}

/// `Ξ = N/(N−M) · F⁻¹_{2, 2(N−M)}(1 − ε_a)`.
pub fn prune_threshold(n_samples: usize, m_nodes: usize, cfg: &OrderConfig) -> Result<f64> {
    if m_nodes == 0 || m_nodes >= n_samples {
        return Err(Error::InvalidDimension(format!(
            "prune threshold needs N > M >= 1, got N = {n_samples}, M = {m_nodes}"
        )));
    }
    let dof = (n_samples - m_nodes) as f64;
    let params = FParams::central(2.0, 2.0 * dof)?;
    Ok(n_samples as f64 / dof * f_inv_cdf(1.0 - cfg.epsilon_a, &params)?)
}

/// Removes every node with `ξ < Ξ` in a single evaluation.
pub fn apply_prunes(state: &MnnState, observed: &Signal, cfg: &OrderConfig) -> (MnnState, PruneReport) {
    let m = state.len();
    let n = observed.len();
    let empty = PruneReport {
        xi: Vec::new(),
        threshold: f64::NAN,
        keep_mask: Vec::new(),
    };
    if m == 0 || n < 2 {
        return (state.clone(), empty);
    }
    let m_eff = if m >= n {
        log::warn!("{m} nodes for {n} samples; prune threshold computed with M = {}", n - 1);
        n - 1
    } else {
        m
    };
    let Ok(threshold) = prune_threshold(n, m_eff, cfg) else {
        return (state.clone(), empty);
    };
    let xi: Vec<f64> = match residual_energy(state, observed) {
        Ok(r) => state.omegas.iter().map(|&w| projected_power(w, observed) / r).collect(),
        Err(_) => vec![f64::INFINITY; m],
    };
    let keep_mask: Vec<bool> = xi.iter().map(|&x| x >= threshold).collect();
    let mut next = state.clone();
    next.retain(&keep_mask);
    (next, PruneReport { xi, threshold, keep_mask })
}

/// `Pr(ξ ≥ Ξ)` for a node carrying a tone with `|α|²/σ² = snr_linear`.
pub fn detection_prob(snr_linear: f64, n_samples: usize, m_nodes: usize, cfg: &OrderConfig) -> Result<f64> {
    if !(snr_linear >= 0.0 && snr_linear.is_finite()) {
        return Err(Error::DomainError(format!("snr must be finite and >= 0, got {snr_linear}")));
    }
    let threshold = prune_threshold(n_samples, m_nodes, cfg)?;
    let dof = (n_samples - m_nodes) as f64;
    let x = threshold * dof / n_samples as f64;
    let lambda = 2.0 * n_samples as f64 * snr_linear;
    if lambda == 0.0 {
        return Ok(f_sf(x, &FParams::central(2.0, 2.0 * dof)?));
    }
    let params = FParams::noncentral(2.0, 2.0 * dof, lambda)?;
    Ok((1.0 - noncentral_f_cdf(x, &params)).clamp(0.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::init::ls_amplitudes_for;
    use crate::signal::{atom, synthesize, NoiseSpec, Sinusoid, SinusoidSet};
    use crate::stats::{f_cdf, ks_test};
    use nalgebra::{DMatrix, Matrix2};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn noise(n: usize, sigma2: f64, seed: u64) -> Signal {
        synthesize(&SinusoidSet::empty(), n, &NoiseSpec::new(sigma2, seed).unwrap()).unwrap()
    }

    fn fitted(omegas: Vec<f64>, y: &Signal) -> MnnState {
        let a = ls_amplitudes_for(&omegas, y).unwrap();
        MnnState::new(omegas, a).unwrap()
    }

    #[test]
    fn noise_var_examples() {
        let y = Signal::new(vec![c(0.5, 0.0), c(0.0, 0.5), c(-0.5, 0.0), c(0.0, -0.5)]).unwrap();
        assert_eq!(estimate_noise_var(&y, y.samples()).unwrap(), 0.0);
        assert!((estimate_noise_var(&y, &[c(0.0, 0.0); 4]).unwrap() - 0.25).abs() < 1e-15);
        assert!(estimate_noise_var(&y, &[c(0.0, 0.0); 3]).is_err());
    }

    #[test]
    fn noise_var_consistency() {
        let sigma2 = 2.5;
        for seed in 0..100 {
            let y = noise(4096, sigma2, seed);
            let s = estimate_noise_var(&y, &vec![c(0.0, 0.0); 4096]).unwrap();
            assert!((s / sigma2 - 1.0).abs() < 0.1, "seed {seed}: {s}");
        }
    }

    #[test]
    fn rho_examples() {
        let (r1, r2) = rho(1.3, 1.3, 32);
        assert_eq!(r1, 10416.0);
        assert!((r2 - c(r1, 0.0)).norm() < 1e-9);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..200 {
            let (r1, r2) = rho(rng.random_range(0.0..TAU), rng.random_range(0.0..TAU), rng.random_range(2..64));
            assert!(r2.norm() <= r1 * (1.0 + 1e-12));
        }
    }

    /// Information matrix built from the derivative vectors `∂x/∂ω = j n α e^{jωn}`.
    fn fim_oracle(ai: Complex64, aj: Complex64, wi: f64, wj: f64, sigma2: f64, n: usize) -> Matrix2<f64> {
        let d = |a: Complex64, w: f64| -> Vec<Complex64> {
            (0..n).map(|k| c(0.0, k as f64) * a * Complex64::from_polar(1.0, w * k as f64)).collect()
        };
        let cols = [d(ai, wi), d(aj, wj)];
        let mut f = Matrix2::zeros();
        for r in 0..2 {
            for s in 0..2 {
                let pi: Complex64 = cols[r].iter().zip(&cols[s]).map(|(p, q)| p.conj() * q).sum();
                f[(r, s)] = 2.0 / sigma2 * pi.re;
            }
        }
        f
    }

    #[test]
    fn crb_matches_inverse_fim() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..100 {
            let n = rng.random_range(4..64);
            let ai = Complex64::from_polar(rng.random_range(0.2..3.0), rng.random_range(0.0..TAU));
            let aj = Complex64::from_polar(rng.random_range(0.2..3.0), rng.random_range(0.0..TAU));
            let wi = rng.random_range(0.0..TAU);
            let wj = wi + rng.random_range(0.01..1.0);
            let sigma2 = rng.random_range(0.01..5.0);
            let crb = crb_pair(ai, aj, wi, wj, sigma2, n).unwrap();
            let inv = fim_oracle(ai, aj, wi, wj, sigma2, n).try_inverse().unwrap();
            for r in 0..2 {
                for s in 0..2 {
                    let scale = inv[(r, r)].abs().max(inv[(s, s)].abs());
                    assert!((crb.matrix[r][s] - inv[(r, s)]).abs() <= 1e-8 * scale);
                }
            }
            let delta = inv[(0, 0)] + inv[(1, 1)] - inv[(0, 1)] - inv[(1, 0)];
            assert!((crb.crb_delta - delta).abs() <= 1e-8 * delta.abs());
            assert!(crb.matrix[0][0] > 0.0 && crb.matrix[1][1] > 0.0);
            assert_eq!(crb.matrix[0][1], crb.matrix[1][0]);
        }
    }

    #[test]
    fn crb_examples() {
        let a = c(0.6, 0.8);
        let n = 32;
        let sigma2 = 0.3;
        // α_i* α_j purely imaginary and ρ₂ real, so the cross term vanishes
        let crb = crb_pair(a, a * c(0.0, 1.0), 1.0, 1.0, sigma2, n).unwrap();
        assert!((crb.crb_delta - sigma2 / (a.norm_sqr() * 10416.0)).abs() < 1e-15);

        let base = crb_pair(c(1.0, 0.2), c(-0.3, 0.9), 0.4, 0.55, 1.0, n).unwrap();
        let scaled = crb_pair(c(1.0, 0.2), c(-0.3, 0.9), 0.4, 0.55, 7.0, n).unwrap();
        assert!((scaled.crb_delta - 7.0 * base.crb_delta).abs() < 1e-12 * scaled.crb_delta);
        assert!((scaled.matrix[0][1] - 7.0 * base.matrix[0][1]).abs() < 1e-12 * scaled.matrix[0][0]);

        assert!(matches!(crb_pair(a, a, 1.0, 1.0, sigma2, n), Err(Error::SingularInformation)));
        assert!(matches!(crb_pair(a, c(0.0, 0.0), 1.0, 2.0, sigma2, n), Err(Error::SingularInformation)));
        assert!(crb_pair(a, a, 1.0, 2.0, 0.0, n).is_err());
    }

    #[test]
    fn merge_test_examples() {
        let cfg = OrderConfig::default();
        assert!(merge_test(1.0, 1.0, 1e-6, &cfg));
        let crb: f64 = 2.5e-5;
        assert!(!merge_test(1.0, 1.0 + 10.0 * crb.sqrt(), crb, &cfg));
        assert!(merge_test(1.0, 1.0 + 4.7 * crb.sqrt(), crb, &cfg));
        assert!(!merge_test(1.0, 1.0 + 4.76 * crb.sqrt(), crb, &cfg));
        let wide = OrderConfig { delta_omega_min: 0.1, ..cfg };
        assert!(merge_test(1.0, 1.09, 1e-12, &wide));
    }

    #[test]
    fn merges_identical_nodes() {
        let n = 32;
        let y = synthesize(&SinusoidSet::new(vec![Sinusoid::new(c(2.0, 0.0), 1.0)]), n, &NoiseSpec::new(0.1, 3).unwrap()).unwrap();
        let s = MnnState::new(vec![1.0, 1.0], vec![c(1.0, 0.0), c(1.0, 0.0)]).unwrap();
        let (m, ev) = apply_merges(&s, &y, &OrderConfig::default());
        assert_eq!(m.len(), 1);
        assert_eq!(ev.len(), 1);
        assert!((m.omegas[0] - 1.0).abs() < 1e-15);
        assert_eq!(m.alphas[0], c(2.0, 0.0));
        assert_eq!(m.mom_omega[0], 0.0);
    }

    #[test]
    fn well_separated_nodes_survive() {
        let n = 32;
        let cfg = OrderConfig::default();
        let y = synthesize(
            &SinusoidSet::new(vec![Sinusoid::new(c(1.0, 0.0), 0.6), Sinusoid::new(c(0.0, 1.0), 2.5), Sinusoid::new(c(-1.0, 0.0), 5.0)]),
            n,
            &NoiseSpec::new(0.05, 4).unwrap(),
        )
        .unwrap();
        let s = fitted(vec![0.6, 2.5, 5.0], &y);
        let sigma2 = estimate_noise_var(&y, &forward(&s, n)).unwrap();
        for (i, j) in [(0, 1), (1, 2)] {
            let crb = crb_pair(s.alphas[i], s.alphas[j], s.omegas[i], s.omegas[j], sigma2, n).unwrap();
            assert!(s.omegas[j] - s.omegas[i] >= 10.0 * crb.crb_delta.sqrt());
        }
        let (m, ev) = apply_merges(&s, &y, &cfg);
        assert!(ev.is_empty());
        assert_eq!(m, s);
    }

    #[test]
    fn trivial_merge_inputs_unchanged() {
        let y = noise(16, 1.0, 5);
        let cfg = OrderConfig::default();
        assert_eq!(apply_merges(&MnnState::empty(), &y, &cfg).0, MnnState::empty());
        let one = MnnState::new(vec![2.0], vec![c(1.0, 1.0)]).unwrap();
        assert_eq!(apply_merges(&one, &y, &cfg).0, one);
    }

    #[test]
    fn merges_across_wrap_point() {
        let n = 32;
        let y = synthesize(&SinusoidSet::new(vec![Sinusoid::new(c(1.0, 0.0), 0.0)]), n, &NoiseSpec::new(0.1, 6).unwrap()).unwrap();
        let s = MnnState::new(vec![TAU - 1e-4, 1e-4, PI], vec![c(0.5, 0.0), c(0.5, 0.0), c(0.01, 0.0)]).unwrap();
        let (m, ev) = apply_merges(&s, &y, &OrderConfig::default());
        assert_eq!(ev.len(), 1);
        assert_eq!(m.len(), 2);
        let near_zero = m.omegas.iter().position(|&w| w < 1e-9 || w > TAU - 1e-9).unwrap();
        assert_eq!(m.alphas[near_zero], c(1.0, 0.0));
        assert!(m.omegas.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn merged_node_can_merge_again() {
        let n = 32;
        let y = synthesize(&SinusoidSet::new(vec![Sinusoid::new(c(3.0, 0.0), 1.0)]), n, &NoiseSpec::new(0.1, 7).unwrap()).unwrap();
        let s = MnnState::new(vec![1.0 - 1e-5, 1.0, 1.0 + 1e-5], vec![c(1.0, 0.0); 3]).unwrap();
        let (m, ev) = apply_merges(&s, &y, &OrderConfig::default());
        assert_eq!(m.len(), 1);
        assert_eq!(ev.len(), 2);
        assert_eq!(m.alphas[0], c(3.0, 0.0));
    }

    #[test]
    fn prune_statistic_examples() {
        let n = 16;
        let w0 = 0.9;
        let y = Signal::new(atom(w0, n).unwrap()).unwrap();
        let s = MnnState::new(vec![w0], vec![c(1.0, 0.0)]).unwrap();
        assert!(matches!(prune_statistic(0, &s, &y), Err(Error::DegenerateResidual)));

        // y is the DFT atom at bin 3; a node at bin 5 is orthogonal to it
        let y = Signal::new(atom(TAU * 3.0 / n as f64, n).unwrap()).unwrap();
        let s = MnnState::new(vec![TAU * 5.0 / n as f64], vec![c(0.3, 0.0)]).unwrap();
        assert!(prune_statistic(0, &s, &y).unwrap() < 1e-25);
        assert!(prune_statistic(1, &s, &y).is_err());
    }

    #[test]
    fn prune_statistic_null_distribution() {
        let n = 32;
        let m = 1;
        let params = FParams::central(2.0, 2.0 * (n - m) as f64).unwrap();
        let scaled: Vec<f64> = (0..2000)
            .map(|seed| {
                let y = noise(n, 1.0, 10_000 + seed);
                let s = fitted(vec![PI], &y);
                prune_statistic(0, &s, &y).unwrap() * (n - m) as f64 / n as f64
            })
            .collect();
        let (_, p) = ks_test(&scaled, |x| f_cdf(x, &params));
        assert!(p > 0.01, "KS p = {p}");
    }

    #[test]
    fn prune_threshold_examples() {
        let cfg = OrderConfig::default();
        let t = prune_threshold(32, 2, &cfg).unwrap();
        let closed = 32.0 / 30.0 * 30.0 * (10f64.powf(0.2) - 1.0);
        assert!((t - closed).abs() < 1e-9 * closed);
        assert!((t - 18.7166).abs() < 1e-3);

        let loose = OrderConfig { epsilon_a: 1.0 - 1e-12, ..cfg };
        assert!(prune_threshold(32, 2, &loose).unwrap() < 1e-9);

        let mut prev = f64::INFINITY;
        for eps in [1e-9, 1e-6, 1e-3, 0.01, 0.1, 0.5, 0.9] {
            let t = prune_threshold(32, 3, &OrderConfig { epsilon_a: eps, ..cfg }).unwrap();
            assert!(t < prev);
            prev = t;
        }
        assert!(matches!(prune_threshold(4, 4, &cfg), Err(Error::InvalidDimension(_))));
        assert!(prune_threshold(4, 0, &cfg).is_err());
    }

    #[test]
    fn prunes_noise_nodes_and_keeps_strong_tone() {
        let n = 32;
        let cfg = OrderConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut all_pruned = 0;
        for seed in 0..50 {
            let y = noise(n, 1.0, 500 + seed);
            let s = fitted((0..3).map(|_| rng.random_range(0.0..TAU)).collect(), &y);
            if apply_prunes(&s, &y, &cfg).0.is_empty() {
                all_pruned += 1;
            }
        }
        assert!(all_pruned >= 48, "{all_pruned}/50");

        let w0 = TAU * 6.0 / n as f64;
        let y = synthesize(&SinusoidSet::new(vec![Sinusoid::new(c(1.0, 0.0), w0)]), n, &NoiseSpec::new(0.01, 9).unwrap()).unwrap();
        let s = fitted(vec![w0], &y);
        let (kept, report) = apply_prunes(&s, &y, &cfg);
        assert_eq!(kept.len(), 1);
        assert_eq!(report.keep_mask, vec![true]);

        let (same, report) = apply_prunes(&MnnState::empty(), &y, &cfg);
        assert!(same.is_empty() && report.xi.is_empty());
    }

    #[test]
    fn overcomplete_state_still_prunes() {
        let n = 4;
        let y = noise(n, 1.0, 3);
        let s = MnnState::new(vec![0.1, 1.0, 2.0, 3.0, 4.0], vec![c(0.01, 0.0); 5]).unwrap();
        let (_, report) = apply_prunes(&s, &y, &OrderConfig::default());
        assert!(report.threshold.is_finite());
        assert_eq!(report.xi.len(), 5);
    }

    #[test]
    fn detection_prob_examples() {
        let cfg = OrderConfig { epsilon_a: 0.01, ..Default::default() };
        assert!((detection_prob(0.0, 32, 1, &cfg).unwrap() - 0.01).abs() < 1e-10);
        let mut prev = 0.0;
        for snr_db in [-30.0, -20.0, -15.0, -10.0, -5.0, 0.0, 5.0] {
            let pd = detection_prob(10f64.powf(snr_db / 10.0), 32, 1, &cfg).unwrap();
            assert!(pd >= prev);
            prev = pd;
        }
    }

    #[test]
    fn detection_prob_matches_simulation() {
        let n = 32;
        let w0 = PI;
        for (snr_db, eps) in [(10.0, 1e-6), (-10.0, 1e-3)] {
            let cfg = OrderConfig { epsilon_a: eps, ..Default::default() };
            let snr: f64 = 10f64.powf(snr_db / 10.0);
            let truth = SinusoidSet::new(vec![Sinusoid::new(c(snr.sqrt(), 0.0), w0)]);
            let threshold = prune_threshold(n, 1, &cfg).unwrap();
            let trials = 2000;
            let hits = (0..trials)
                .filter(|&seed| {
                    let y = synthesize(&truth, n, &NoiseSpec::new(1.0, 40_000 + seed).unwrap()).unwrap();
                    prune_statistic(0, &fitted(vec![w0], &y), &y).unwrap() >= threshold
                })
                .count();
            let pd = detection_prob(snr, n, 1, &cfg).unwrap();
            let sd = (pd * (1.0 - pd) / trials as f64).sqrt().max(1.0 / trials as f64);
            let emp = hits as f64 / trials as f64;
            assert!((emp - pd).abs() <= 3.0 * sd, "snr {snr_db}: empirical {emp}, theory {pd}");
        }
    }

    #[test]
    fn null_false_alarm_rate() {
        let n = 32;
        let cfg = OrderConfig { epsilon_a: 0.05, ..Default::default() };
        let threshold = prune_threshold(n, 1, &cfg).unwrap();
        let trials = 2000;
        let alarms = (0..trials)
            .filter(|&seed| {
                let y = noise(n, 1.0, 70_000 + seed);
                prune_statistic(0, &fitted(vec![PI], &y), &y).unwrap() >= threshold
            })
            .count();
        let far = alarms as f64 / trials as f64;
        assert!((far - 0.05).abs() <= 3.0 * (0.05 * 0.95 / trials as f64).sqrt(), "{far}");
    }

    #[test]
    fn singular_pair_merges() {
        let y = noise(16, 1.0, 8);
        let s = MnnState::new(vec![1.0, 2.0], vec![c(1.0, 0.0), c(0.0, 0.0)]).unwrap();
        let (m, ev) = apply_merges(&s, &y, &OrderConfig::default());
        assert_eq!(m.len(), 1);
        assert_eq!(ev[0].crb_delta, None);
    }

    #[test]
    fn fim_oracle_is_independent_of_ordering() {
        // sanity on the oracle itself: swapping nodes permutes the inverse
        let (ai, aj) = (c(1.0, 0.5), c(-0.2, 0.7));
        let a = fim_oracle(ai, aj, 0.3, 0.8, 1.0, 20).try_inverse().unwrap();
        let b = fim_oracle(aj, ai, 0.8, 0.3, 1.0, 20).try_inverse().unwrap();
        let p = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        let pa = &p * DMatrix::from_iterator(2, 2, a.iter().copied()) * &p;
        for (x, y) in pa.iter().zip(b.iter()) {
            assert!((x - y).abs() < 1e-9 * x.abs().max(1e-12));
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;
        use rand::Rng;

        proptest! {
            #[test]
            fn coincident_frequencies_merge(w in -10.0f64..10.0, crb in 1e-12f64..1.0, eps in 1e-9f64..0.499) {
                let cfg = OrderConfig { epsilon_f: eps, ..Default::default() };
                prop_assert!(merge_test(w, w, crb, &cfg));
            }

            #[test]
            fn merge_invariant_to_full_turns(lo in 0.0f64..TAU, d in 0.0f64..0.1, crb in 1e-8f64..1e-2, k in -3i32..3) {
                let cfg = OrderConfig::default();
                let shift = TAU * k as f64;
                prop_assert_eq!(merge_test(lo, lo + d, crb, &cfg), merge_test(lo + shift, lo + shift + d, crb, &cfg));
            }

            #[test]
            fn keep_mask_consistent(seed in 0u64..500, m in 1usize..5) {
                let n = 24;
                let y = noise(n, 1.0, seed);
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let s = fitted((0..m).map(|_| rng.random_range(0.0..TAU)).collect(), &y);
                let cfg = OrderConfig { epsilon_a: 0.2, ..Default::default() };
                let (kept, r) = apply_prunes(&s, &y, &cfg);
                prop_assert_eq!(kept.len(), r.keep_mask.iter().filter(|&&k| k).count());
                for (x, k) in r.xi.iter().zip(&r.keep_mask) {
                    prop_assert_eq!(*k, *x >= r.threshold);
                }
            }

            #[test]
            fn merges_preserve_amplitude_sum(seed in 0u64..500, m in 2usize..6) {
                let n = 32;
                let y = noise(n, 1.0, seed);
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let omegas: Vec<f64> = (0..m).map(|_| rng.random_range(0.0..TAU)).collect();
                let alphas: Vec<Complex64> = (0..m).map(|_| c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))).collect();
                let s = MnnState::new(omegas, alphas).unwrap();
                let (merged, ev) = apply_merges(&s, &y, &OrderConfig::default());
                prop_assert_eq!(merged.len() + ev.len(), m);
                let before: Complex64 = s.alphas.iter().sum();
                let after: Complex64 = merged.alphas.iter().sum();
                prop_assert!((before - after).norm() < 1e-12);
            }
        }
    }
}
