//! Maximum-likelihood line spectral estimation with a model-based network.
//!
//! A sum of complex sinusoids is modeled as a three-layer network: the time
//! index feeds `M` hidden nodes with activation `e^{jz}`, whose input weights
//! are the angular frequencies and whose output weights are the complex
//! amplitudes. The network is initialized from a zero-padded FFT, trained by
//! momentum descent on the least-squares cost with analytic Wirtinger
//! gradients, and its order is selected by merging statistically
//! indistinguishable nodes (two-tone Cramér–Rao bound) and pruning nodes whose
//! normalized power fails a constant-false-alarm-rate F test.
//!
//! ```
//! use mnn_spectral::{estimate_spectrum, synthesize, EstimatorConfig, NoiseSpec, Sinusoid, SinusoidSet};
//! use num_complex::Complex64;
//! use std::f64::consts::PI;
//!
//! let truth = SinusoidSet::new(vec![Sinusoid::new(Complex64::new(1.0, 0.0), 2.0 * PI * 0.25)]);
//! let y = synthesize(&truth, 32, &NoiseSpec::noiseless()).unwrap();
//! let report = estimate_spectrum(&y, &EstimatorConfig::default()).unwrap();
//! assert_eq!(report.estimates.len(), 1);
//! ```

pub mod error;
pub mod experiments;
pub mod gradcheck;
pub mod init;
pub mod io;
pub mod optimizer;
pub mod order;
pub mod pipeline;
pub mod signal;
pub mod stats;

pub use error::{Error, Result};
pub use init::{initialize, periodogram_estimate, CandidateSet, InitConfig, Neighbors};
pub use optimizer::{cost, forward, grad_alpha, grad_omega, train_inner, CostTrace, MnnState, TrainConfig};
pub use order::{apply_merges, apply_prunes, OrderConfig};
pub use pipeline::{estimate_spectrum, estimate_with_fixed_order, EstimatorConfig, RunReport};
pub use signal::{atom, design_matrix, noise_var_for_snr, synthesize, NoiseSpec, Signal, Sinusoid, SinusoidSet};
