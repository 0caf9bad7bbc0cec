//! File formats: sample CSV, component JSON and run report JSON.

use std::fs;
use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::order::{MergeEvent, PruneEvent};
use crate::pipeline::{EstimatorConfig, RunReport};
use crate::signal::{Signal, Sinusoid, SinusoidSet};

#[derive(Debug, Serialize, Deserialize)]
struct SampleRow {
    index: usize,
    re: f64,
    im: f64,
}

pub fn write_signal_csv<W: std::io::Write>(signal: &Signal, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for (index, z) in signal.samples().iter().enumerate() {
        w.serialize(SampleRow { index, re: z.re, im: z.im })
            .map_err(|e| Error::Parse(e.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

/// Parses `index,re,im` rows; indices must run 0, 1, 2, … in order.
pub fn read_signal_csv<R: std::io::Read>(input: R) -> Result<Signal> {
    let mut r = csv::Reader::from_reader(input);
    let headers = r.headers().map_err(|e| Error::Parse(e.to_string()))?.clone();
    if headers.iter().map(str::trim).collect::<Vec<_>>() != ["index", "re", "im"] {
        return Err(Error::Parse(format!("expected header index,re,im, found {:?}", headers)));
    }
    let mut samples = Vec::new();
    for (expected, row) in r.deserialize::<SampleRow>().enumerate() {
        let row = row.map_err(|e| Error::Parse(e.to_string()))?;
        if row.index != expected {
            return Err(Error::Parse(format!("row {expected} has index {}", row.index)));
        }
        if !row.re.is_finite() || !row.im.is_finite() {
            return Err(Error::Parse(format!("non-finite sample at index {}", row.index)));
        }
        samples.push(Complex64::new(row.re, row.im));
    }
    if samples.is_empty() {
        return Err(Error::Parse("signal file has no samples".into()));
    }
    Signal::new(samples)
}

pub fn write_signal(path: &Path, signal: &Signal) -> Result<()> {
    write_signal_csv(signal, fs::File::create(path)?)
}

pub fn read_signal(path: &Path) -> Result<Signal> {
    read_signal_csv(fs::File::open(path)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComponentRow {
    pub re: f64,
    pub im: f64,
    pub normalized_freq: f64,
}

pub fn parse_components(text: &str) -> Result<SinusoidSet> {
    let rows: Vec<ComponentRow> = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
    if rows.iter().any(|r| !(r.re.is_finite() && r.im.is_finite() && r.normalized_freq.is_finite())) {
        return Err(Error::Parse("component values must be finite".into()));
    }
    Ok(rows
        .into_iter()
        .map(|r| Sinusoid::from_normalized(Complex64::new(r.re, r.im), r.normalized_freq))
        .collect::<Vec<_>>()
        .into())
}

pub fn components_json(set: &SinusoidSet) -> Result<String> {
    let rows: Vec<ComponentRow> = set
        .iter()
        .map(|s| ComponentRow { re: s.amplitude.re, im: s.amplitude.im, normalized_freq: s.normalized_freq() })
        .collect();
    serde_json::to_string_pretty(&rows).map_err(|e| Error::Parse(e.to_string()))
}

pub fn read_components(path: &Path) -> Result<SinusoidSet> {
    parse_components(&fs::read_to_string(path)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimateRow {
    pub re: f64,
    pub im: f64,
    pub omega: f64,
    pub normalized_freq: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ReportEvents {
    pub merges: Vec<MergeEvent>,
    pub prunes: Vec<PruneEvent>,
}

/// JSON report written by `estimate`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportFile {
    pub estimates: Vec<EstimateRow>,
    pub sigma2_hat: f64,
    pub k_hat: usize,
    pub outer_iterations: usize,
    pub cost_trace: Vec<f64>,
    pub events: ReportEvents,
    pub config: EstimatorConfig,
    pub seed: Option<u64>,
    /// Present when estimation stopped on a numerical failure.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl ReportFile {
    pub fn from_run(run: &RunReport, config: &EstimatorConfig, seed: Option<u64>) -> Self {
        Self {
            estimates: run
                .estimates
                .iter()
                .map(|s| EstimateRow {
                    re: s.amplitude.re,
                    im: s.amplitude.im,
                    omega: s.omega,
                    normalized_freq: s.normalized_freq(),
                })
                .collect(),
            sigma2_hat: run.sigma2_hat,
            k_hat: run.k_hat(),
            outer_iterations: run.outer_iterations,
            cost_trace: run.cost_trace.clone(),
            events: ReportEvents { merges: run.merge_events.clone(), prunes: run.prune_events.clone() },
            config: *config,
            seed,
            error: None,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let r: Self = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        if r.k_hat != r.estimates.len() {
            return Err(Error::Parse(format!("k_hat {} but {} estimates", r.k_hat, r.estimates.len())));
        }
        Ok(r)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }
}
