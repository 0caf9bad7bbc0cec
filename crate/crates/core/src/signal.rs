//! Complex sinusoids in circular white Gaussian noise.

use std::f64::consts::TAU;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Wraps an angular frequency into `[0, 2π)`.
pub fn wrap_omega(omega: f64) -> f64 {
    let w = omega.rem_euclid(TAU);
    // rem_euclid rounds tiny negative inputs up to exactly 2π
    if w >= TAU {
        0.0
    } else {
        w
    }
}

/// One complex exponential component `α e^{jωn}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sinusoid {
    pub amplitude: Complex64,
    /// Angular frequency in radians/sample, canonically in `[0, 2π)`.
    pub omega: f64,
}

impl Sinusoid {
    /// Builds a component, wrapping `omega` into `[0, 2π)`.
    pub fn new(amplitude: Complex64, omega: f64) -> Self {
        Self {
            amplitude,
            omega: wrap_omega(omega),
        }
    }

    pub fn from_normalized(amplitude: Complex64, normalized_freq: f64) -> Self {
        Self::new(amplitude, TAU * normalized_freq)
    }

    pub fn normalized_freq(&self) -> f64 {
        self.omega / TAU
    }
}

/// A list of sinusoidal components, used both as ground truth and as
/// estimator output.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SinusoidSet(Vec<Sinusoid>);

impl SinusoidSet {
    pub fn new(components: Vec<Sinusoid>) -> Self {
        Self(components)
    }

    pub fn empty() -> Self {
        Self(Vec::new())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Sinusoid> {
        self.0.iter()
    }

    pub fn as_slice(&self) -> &[Sinusoid] {
        &self.0
    }

    pub fn omegas(&self) -> Vec<f64> {
        self.0.iter().map(|s| s.omega).collect()
    }

    pub fn amplitudes(&self) -> Vec<Complex64> {
        self.0.iter().map(|s| s.amplitude).collect()
    }

    /// Returns the components sorted by ascending frequency.
    pub fn sorted(mut self) -> Self {
        self.0.sort_by(|a, b| a.omega.total_cmp(&b.omega));
        self
    }
}

impl From<Vec<Sinusoid>> for SinusoidSet {
    fn from(v: Vec<Sinusoid>) -> Self {
        Self(v)
    }
}

impl<'a> IntoIterator for &'a SinusoidSet {
    type Item = &'a Sinusoid;
    type IntoIter = std::slice::Iter<'a, Sinusoid>;

    fn into_iter(self) -> Self::IntoIter {
        self.0.iter()
    }
}

/// Observed samples `y(n)`, `n = 0..N-1`.
#[derive(Debug, Clone, PartialEq)]
pub struct Signal {
    samples: Vec<Complex64>,
}

impl Signal {
    pub fn new(samples: Vec<Complex64>) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::InvalidDimension("signal must have at least one sample".into()));
        }
        if samples.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::DegenerateInput("signal contains non-finite samples".into()));
        }
        Ok(Self { samples })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn samples(&self) -> &[Complex64] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<Complex64> {
        self.samples
    }

    /// `‖y‖²`
    pub fn energy(&self) -> f64 {
        self.samples.iter().map(|z| z.norm_sqr()).sum()
    }
}

/// Circularly symmetric complex Gaussian noise of total variance `sigma2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub sigma2: f64,
    pub seed: u64,
}

impl NoiseSpec {
    pub fn new(sigma2: f64, seed: u64) -> Result<Self> {
        if !(sigma2 >= 0.0) || !sigma2.is_finite() {
            return Err(Error::DomainError(format!("noise variance must be finite and >= 0, got {sigma2}")));
        }
        Ok(Self { sigma2, seed })
    }

    pub fn noiseless() -> Self {
        Self { sigma2: 0.0, seed: 0 }
    }
}

/// Steering vector `[1, e^{jω}, …, e^{jω(N-1)}]`.
pub fn atom(omega: f64, n_samples: usize) -> Result<Vec<Complex64>> {
    if n_samples == 0 {
        return Err(Error::InvalidDimension("atom length must be >= 1".into()));
    }
    Ok(atom_unchecked(omega, n_samples))
}

pub(crate) fn atom_unchecked(omega: f64, n_samples: usize) -> Vec<Complex64> {
    (0..n_samples)
        .map(|n| Complex64::from_polar(1.0, omega * n as f64))
        .collect()
}

/// `N × M` matrix whose columns are the atoms of `omegas`.
pub fn design_matrix(omegas: &[f64], n_samples: usize) -> Result<DMatrix<Complex64>> {
    if omegas.is_empty() {
        return Err(Error::InvalidDimension("design matrix needs at least one frequency".into()));
    }
    if n_samples == 0 {
        return Err(Error::InvalidDimension("design matrix needs at least one sample".into()));
    }
    Ok(DMatrix::from_fn(n_samples, omegas.len(), |n, i| {
        Complex64::from_polar(1.0, omegas[i] * n as f64)
    }))
}

/// Noiseless model `Σ_k α_k a(ω_k)`.
pub fn clean_signal(components: &SinusoidSet, n_samples: usize) -> Vec<Complex64> {
    let mut x = vec![Complex64::new(0.0, 0.0); n_samples];
    for s in components {
        for (n, xn) in x.iter_mut().enumerate() {
            *xn += s.amplitude * Complex64::from_polar(1.0, s.omega * n as f64);
        }
    }
    x
}

/// Draws `n` i.i.d. `CN(0, sigma2)` samples from a ChaCha20 stream seeded by `seed`.
pub fn complex_noise(n: usize, sigma2: f64, seed: u64) -> Vec<Complex64> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let scale = (sigma2 / 2.0).sqrt();
    (0..n)
        .map(|_| {
            let re: f64 = StandardNormal.sample(&mut rng);
            let im: f64 = StandardNormal.sample(&mut rng);
            Complex64::new(scale * re, scale * im)
        })
        .collect()
}

/// `y = x + e` with `e ~ CN(0, σ²)` generated deterministically from the seed.
pub fn synthesize(components: &SinusoidSet, n_samples: usize, noise: &NoiseSpec) -> Result<Signal> {
    if n_samples == 0 {
        return Err(Error::InvalidDimension("signal length must be >= 1".into()));
    }
    let mut y = clean_signal(components, n_samples);
    if noise.sigma2 > 0.0 {
        for (yn, en) in y.iter_mut().zip(complex_noise(n_samples, noise.sigma2, noise.seed)) {
            *yn += en;
        }
    }
    Signal::new(y)
}

/// Per-sample noise variance that makes `10 log10(‖x‖²/E‖e‖²)` equal `snr_db`.
pub fn noise_var_for_snr(clean: &Signal, snr_db: f64) -> Result<f64> {
    let energy = clean.energy();
    if energy <= 0.0 {
        return Err(Error::DegenerateInput("clean signal has zero energy".into()));
    }
    Ok(energy / (clean.len() as f64 * 10f64.powf(snr_db / 10.0)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn atom_special_frequencies() {
        let a = atom(0.0, 4).unwrap();
        assert!(a.iter().all(|z| (z - c(1.0, 0.0)).norm() < 1e-15));
        let a = atom(PI, 4).unwrap();
        for (n, z) in a.iter().enumerate() {
            let expected = if n % 2 == 0 { 1.0 } else { -1.0 };
            assert!((z - c(expected, 0.0)).norm() < 1e-12);
        }
        assert!(matches!(atom(1.0, 0), Err(Error::InvalidDimension(_))));
    }

    #[test]
    fn dft_grid_atoms_are_orthogonal() {
        let a = atom(TAU / 8.0, 8).unwrap();
        let b = atom(TAU * 3.0 / 8.0, 8).unwrap();
        let ip: Complex64 = a.iter().zip(&b).map(|(x, y)| x.conj() * y).sum();
        assert!(ip.norm() < 1e-12);

        let n = 16;
        let omegas: Vec<f64> = [0, 3, 5, 11].iter().map(|&k| TAU * k as f64 / n as f64).collect();
        let a = design_matrix(&omegas, n).unwrap();
        let gram = a.adjoint() * &a;
        for i in 0..4 {
            for j in 0..4 {
                let expected = if i == j { n as f64 } else { 0.0 };
                assert!((gram[(i, j)] - c(expected, 0.0)).norm() < 1e-9 * n as f64);
            }
        }
    }

    #[test]
    fn design_matrix_columns() {
        let a = design_matrix(&[0.0], 3).unwrap();
        assert_eq!(a.shape(), (3, 1));
        assert!(a.iter().all(|z| (z - c(1.0, 0.0)).norm() < 1e-15));
        let a = design_matrix(&[0.0, PI], 2).unwrap();
        assert!((a[(1, 1)] - c(-1.0, 0.0)).norm() < 1e-12);
        assert!((a[(1, 0)] - c(1.0, 0.0)).norm() < 1e-12);
        assert!(design_matrix(&[], 3).is_err());
    }

    #[test]
    fn synthesize_examples() {
        let set = SinusoidSet::new(vec![Sinusoid::new(c(2.0, 0.0), 0.0)]);
        let y = synthesize(&set, 3, &NoiseSpec::noiseless()).unwrap();
        assert_eq!(y.samples(), &[c(2.0, 0.0); 3]);

        let y = synthesize(&SinusoidSet::empty(), 4, &NoiseSpec::noiseless()).unwrap();
        assert_eq!(y.samples(), &[c(0.0, 0.0); 4]);

        let noise = NoiseSpec::new(0.7, 42).unwrap();
        let a = synthesize(&set, 64, &noise).unwrap();
        let b = synthesize(&set, 64, &noise).unwrap();
        assert_eq!(a, b);
        let other = synthesize(&set, 64, &NoiseSpec::new(0.7, 43).unwrap()).unwrap();
        assert_ne!(a, other);
    }

    #[test]
    fn noise_variance_for_snr() {
        let unit = Signal::new(vec![c(1.0, 0.0); 8]).unwrap();
        assert!((noise_var_for_snr(&unit, 0.0).unwrap() - 1.0).abs() < 1e-15);
        assert!((noise_var_for_snr(&unit, 10.0).unwrap() - 0.1).abs() < 1e-15);
        let zero = Signal::new(vec![c(0.0, 0.0); 8]).unwrap();
        assert!(matches!(noise_var_for_snr(&zero, 10.0), Err(Error::DegenerateInput(_))));
    }

    #[test]
    fn empirical_snr_matches_target() {
        // mean of 10 log10(‖x‖²/‖e‖²) over noise draws; E[log] sits slightly
        // above log E for a chi-square with 64 dof, well inside 0.2 dB
        let n = 32;
        let set = SinusoidSet::new(vec![
            Sinusoid::from_normalized(c(1.0, 0.5), 0.1),
            Sinusoid::from_normalized(c(-0.3, 0.8), 0.37),
        ]);
        let clean = synthesize(&set, n, &NoiseSpec::noiseless()).unwrap();
        let target = 7.0;
        let sigma2 = noise_var_for_snr(&clean, target).unwrap();
        let trials = 1000;
        let mut acc = 0.0;
        for seed in 0..trials {
            let e = complex_noise(n, sigma2, seed);
            let en: f64 = e.iter().map(|z| z.norm_sqr()).sum();
            acc += 10.0 * (clean.energy() / en).log10();
        }
        let mean = acc / trials as f64;
        assert!((mean - target).abs() < 0.2, "mean SNR {mean}");
    }

    #[test]
    fn wrap_into_canonical_range() {
        assert!((wrap_omega(TAU + 0.3) - 0.3).abs() < 1e-12);
        assert!((wrap_omega(-0.1) - (TAU - 0.1)).abs() < 1e-12);
        assert_eq!(wrap_omega(-1e-18), 0.0);
        assert_eq!(Sinusoid::new(c(1.0, 0.0), -TAU).omega, 0.0);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn atom_has_unit_modulus_and_period(omega in -20.0f64..20.0, n in 1usize..64) {
                let a = atom(omega, n).unwrap();
                let b = atom(omega + TAU, n).unwrap();
                for (x, y) in a.iter().zip(&b) {
                    prop_assert!((x.norm() - 1.0).abs() < 1e-12);
                    prop_assert!((x - y).norm() < 1e-12);
                }
            }

            #[test]
            fn noiseless_synthesis_is_sum_of_atoms(
                parts in proptest::collection::vec((-2.0f64..2.0, -2.0f64..2.0, 0.0f64..TAU), 0..5),
                n in 1usize..40,
            ) {
                let set: SinusoidSet = parts.iter().map(|&(re, im, w)| Sinusoid::new(c(re, im), w)).collect::<Vec<_>>().into();
                let y = synthesize(&set, n, &NoiseSpec::noiseless()).unwrap();
                for (k, yk) in y.samples().iter().enumerate() {
                    let mut expected = c(0.0, 0.0);
                    for &(re, im, w) in &parts {
                        expected += c(re, im) * c((w * k as f64).cos(), (w * k as f64).sin());
                    }
                    prop_assert!((yk - expected).norm() < 1e-12);
                }
            }
        }
    }
}
