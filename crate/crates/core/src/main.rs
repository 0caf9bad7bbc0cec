use std::f64::consts::TAU;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::info;
use num_complex::Complex64;
use serde::Serialize;

use mnn_spectral::experiments::{
    self, cluster_case, cluster_config, CsvRow, PruneScenario, RunMetadata, SweepResult, TrialSpec,
};
use mnn_spectral::gradcheck::{run_gradcheck, GradcheckConfig, GRADCHECK_TOLERANCE};
use mnn_spectral::io::{read_components, read_signal, write_signal, ReportFile};
use mnn_spectral::{
    estimate_spectrum, noise_var_for_snr, synthesize, EstimatorConfig, Error, Neighbors, NoiseSpec, Sinusoid,
    SinusoidSet,
};

const EXIT_INPUT: u8 = 2;
const EXIT_DIVERGED: u8 = 3;

#[derive(Parser)]
#[command(name = "mnn-spectral", version, about = "Line spectral estimation with a model-based network")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize a noisy sum of sinusoids and write it as CSV.
    Simulate(SimulateArgs),
    /// Estimate frequencies, amplitudes and model order from a signal CSV.
    Estimate(EstimateArgs),
    /// Run a Monte Carlo experiment and write JSON + CSV results.
    Experiment {
        #[command(subcommand)]
        which: ExperimentKind,
    },
    /// Compare analytic gradients with central finite differences.
    Gradcheck(GradcheckArgs),
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    n: usize,
    /// JSON array of {re, im, normalized_freq}.
    #[arg(long)]
    components: PathBuf,
    /// Omit for a noiseless signal.
    #[arg(long, allow_negative_numbers = true)]
    snr_db: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EstimateArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long, default_value_t = 4)]
    l_factor: usize,
    /// Inner-loop stopping tolerance; relative to the cost unless --absolute-tol is given.
    #[arg(long)]
    eps: Option<f64>,
    #[arg(long)]
    absolute_tol: bool,
    /// Consecutive small-change iterations required to stop.
    #[arg(long)]
    settle_window: Option<usize>,
    #[arg(long, default_value_t = 1e-6)]
    epsf: f64,
    #[arg(long, default_value_t = 1e-6)]
    epsa: f64,
    #[arg(long)]
    gamma_alpha: Option<f64>,
    #[arg(long)]
    gamma_omega: Option<f64>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    max_iter: Option<usize>,
    #[arg(long)]
    max_outer: Option<usize>,
    /// Add both FFT neighbors of each peak instead of the larger one.
    #[arg(long)]
    both_neighbors: bool,
    #[arg(long)]
    report: PathBuf,
}

#[derive(Args, Clone)]
struct ExperimentArgs {
    #[arg(long, default_value_t = 200)]
    trials: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value = "results")]
    out_dir: PathBuf,
}

#[derive(Subcommand)]
enum ExperimentKind {
    /// Frequency MSE against the CRB over an SNR grid.
    Mse(ExperimentArgs),
    /// Merge ROC at several SNRs.
    RocMerge(ExperimentArgs),
    /// Prune ROC for the one-node and weak-tone scenarios.
    RocPrune(ExperimentArgs),
    /// Histogram of the estimated order for K = 1..5.
    Order(ExperimentArgs),
    /// Inner-loop iterations over learning-rate and momentum grids.
    Converge(ExperimentArgs),
    /// The fixed two-cluster scenario, one run per seed.
    Cluster(ExperimentArgs),
}

#[derive(Args)]
struct GradcheckArgs {
    #[arg(long, default_value_t = 16)]
    n: usize,
    #[arg(long, default_value_t = 4)]
    m: usize,
    #[arg(long, default_value_t = 100)]
    trials: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Scale the analytic gradients by 1 + perturb (self-test).
    #[arg(long, default_value_t = 0.0)]
    perturb: f64,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Simulate(a) => simulate(&a),
        Command::Estimate(a) => estimate(&a),
        Command::Experiment { which } => experiment(&which),
        Command::Gradcheck(a) => gradcheck(&a),
    };
    match outcome {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e {
                Error::NumericalDivergence { .. } => EXIT_DIVERGED,
                Error::Parse(_)
                | Error::Io(_)
                | Error::InvalidDimension(_)
                | Error::DomainError(_)
                | Error::DegenerateInput(_) => EXIT_INPUT,
                _ => 1,
            })
        }
    }
}

fn simulate(a: &SimulateArgs) -> mnn_spectral::Result<ExitCode> {
    let truth = read_components(&a.components)?;
    let clean = synthesize(&truth, a.n, &NoiseSpec::noiseless())?;
    let sigma2 = match a.snr_db {
        Some(snr) => noise_var_for_snr(&clean, snr)?,
        None => 0.0,
    };
    let y = synthesize(&truth, a.n, &NoiseSpec::new(sigma2, a.seed)?)?;
    write_signal(&a.out, &y)?;
    println!("{sigma2}");
    Ok(ExitCode::SUCCESS)
}

fn estimator_config(a: &EstimateArgs) -> EstimatorConfig {
    let mut cfg = EstimatorConfig::default();
    cfg.init.l_factor = a.l_factor;
    if a.both_neighbors {
        cfg.init.neighbors = Neighbors::Both;
    }
    cfg.order.epsilon_f = a.epsf;
    cfg.order.epsilon_a = a.epsa;
    let t = &mut cfg.train;
    if let Some(eps) = a.eps {
        t.eps_tol = eps;
    }
    if a.absolute_tol {
        t.relative_tol = false;
    }
    if let Some(w) = a.settle_window {
        t.settle_window = w;
    }
    t.gamma_alpha = a.gamma_alpha.or(t.gamma_alpha);
    t.gamma_omega = a.gamma_omega.or(t.gamma_omega);
    if let Some(l) = a.lambda {
        t.lambda = l;
    }
    if let Some(m) = a.max_iter {
        t.max_iter = m;
    }
    if let Some(m) = a.max_outer {
        cfg.max_outer = m;
    }
    cfg
}

fn estimate(a: &EstimateArgs) -> mnn_spectral::Result<ExitCode> {
    let cfg = estimator_config(a);
    cfg.validate()?;
    let y = read_signal(&a.input)?;
    match estimate_spectrum(&y, &cfg) {
        Ok(run) => {
            ReportFile::from_run(&run, &cfg, None).write(&a.report)?;
            println!("k_hat {}", run.k_hat());
            Ok(ExitCode::SUCCESS)
        }
        Err(Error::NumericalDivergence { iteration, partial }) => {
            let msg = format!("numerical divergence at iteration {iteration}");
            if let Some(run) = partial {
                let mut report = ReportFile::from_run(&run, &cfg, None);
                report.error = Some(msg.clone());
                report.write(&a.report)?;
            }
            eprintln!("error: {msg}");
            Ok(ExitCode::from(EXIT_DIVERGED))
        }
        Err(e) => Err(e),
    }
}

fn unit_tones(freqs: &[f64]) -> SinusoidSet {
    freqs.iter().map(|f| Sinusoid::new(Complex64::new(1.0, 0.0), TAU * f)).collect::<Vec<_>>().into()
}

fn written(paths: (PathBuf, PathBuf)) {
    println!("{}", paths.0.display());
    println!("{}", paths.1.display());
}

fn experiment(which: &ExperimentKind) -> mnn_spectral::Result<ExitCode> {
    match which {
        ExperimentKind::Mse(a) => {
            let spec = TrialSpec::new(unit_tones(&[0.1, 0.22, 0.37]), 32, 0.0, a.trials, a.seed);
            let grid: Vec<f64> = (0..=6).map(|i| 5.0 * i as f64).collect();
            written(experiments::mc_mse(&spec, &grid)?.write(&a.out_dir, "mse")?);
        }
        ExperimentKind::RocMerge(a) => {
            let grid = log_grid(-12, -1);
            for snr in [5.0, 10.0, 20.0] {
                let spec = TrialSpec::new(SinusoidSet::default(), 32, snr, a.trials, a.seed);
                written(experiments::mc_roc_merge(&spec, &grid)?.write(&a.out_dir, &format!("roc-merge-{snr}db"))?);
            }
        }
        ExperimentKind::RocPrune(a) => {
            let grid = log_grid(-8, -1);
            for (scenario, name) in [(PruneScenario::OneNode, "one-node"), (PruneScenario::TwoNodeWeak, "two-node-weak")] {
                for snr in [0.0, 10.0] {
                    let spec = TrialSpec::new(SinusoidSet::default(), 32, snr, a.trials, a.seed);
                    let r = experiments::mc_roc_prune(&spec, &grid, scenario)?;
                    written(r.write(&a.out_dir, &format!("roc-prune-{name}-{snr}db"))?);
                }
            }
        }
        ExperimentKind::Order(a) => {
            let r = experiments::mc_order(&[1, 2, 3, 4, 5], 32, 10.0, a.trials, a.seed, &EstimatorConfig::default())?;
            written(r.write(&a.out_dir, "order")?);
        }
        ExperimentKind::Converge(a) => {
            let spec = TrialSpec::new(unit_tones(&[0.1, 0.115, 0.37]), 32, 10.0, a.trials, a.seed);
            let r = experiments::convergence_trace(&spec, &[0.25, 0.5, 1.0, 2.0], &[0.0, 0.5, 0.9])?;
            written(r.write(&a.out_dir, "converge")?);
        }
        ExperimentKind::Cluster(a) => cluster(a)?,
    }
    Ok(ExitCode::SUCCESS)
}

fn log_grid(lo: i32, hi: i32) -> Vec<f64> {
    (lo..=hi).map(|e| 10f64.powi(e)).collect()
}

#[derive(Serialize)]
struct ClusterRow {
    seed: u64,
    sigma2: f64,
    fft_peaks: usize,
    initial_nodes: usize,
    k_hat: usize,
    within_bound: Option<bool>,
}

impl CsvRow for ClusterRow {
    fn header() -> Vec<&'static str> {
        vec!["seed", "sigma2", "fft_peaks", "initial_nodes", "k_hat", "within_bound"]
    }

    fn fields(&self) -> Vec<String> {
        vec![
            self.seed.to_string(),
            self.sigma2.to_string(),
            self.fft_peaks.to_string(),
            self.initial_nodes.to_string(),
            self.k_hat.to_string(),
            self.within_bound.map(|b| b.to_string()).unwrap_or_default(),
        ]
    }
}

fn cluster(a: &ExperimentArgs) -> mnn_spectral::Result<()> {
    let cfg = cluster_config();
    let mut reports = Vec::with_capacity(a.trials);
    for t in 0..a.trials {
        let seed = a.seed.wrapping_add(t as u64);
        let r = cluster_case(seed, &cfg)?;
        info!("cluster seed {seed}: {} nodes -> k_hat {}", r.initial_nodes, r.k_hat);
        reports.push(r);
    }
    let sweep = SweepResult {
        metadata: RunMetadata {
            experiment: "cluster".into(),
            base_seed: a.seed,
            trials: a.trials,
            n_samples: experiments::CLUSTER_N,
            config: cfg,
            notes: vec!["two clusters of five tones, N = 128, both FFT neighbors per peak".into()],
        },
        conditions: reports
            .iter()
            .map(|r| ClusterRow {
                seed: r.seed,
                sigma2: r.sigma2,
                fft_peaks: r.fft_peaks,
                initial_nodes: r.initial_nodes,
                k_hat: r.k_hat,
                within_bound: r.within_bound,
            })
            .collect(),
    };
    written(sweep.write(&a.out_dir, "cluster")?);
    let runs = a.out_dir.join("cluster-runs.json");
    write_json(&runs, &reports)?;
    println!("{}", runs.display());
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> mnn_spectral::Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::Parse(e.to_string()))?;
    fs::write(path, text)?;
    Ok(())
}

fn gradcheck(a: &GradcheckArgs) -> mnn_spectral::Result<ExitCode> {
    let cfg = GradcheckConfig { n: a.n, m: a.m, trials: a.trials, seed: a.seed, perturb: a.perturb, ..Default::default() };
    let r = run_gradcheck(&cfg)?;
    println!("max relative error {:e} over {} instances (tolerance {:e})", r.max_rel_error, r.trials, GRADCHECK_TOLERANCE);
    Ok(if r.passed { ExitCode::SUCCESS } else { ExitCode::FAILURE })
}
