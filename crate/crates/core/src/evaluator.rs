//! Throughput law, speedup ratios, scaling predictions and serial-vs-parallel
//! resource comparisons.
//!
//! A campaign with `nodes` nodes running `slots` instances each finishes a
//! full job of `nodes * slots` runs every walltime period, so after `t`
//! minutes it has produced `nodes * slots * floor(t / walltime)` datasets.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::collector::ResourceSummary;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EvalError {
    #[error("speedup denominator is zero")]
    ZeroDenominator,
    #[error("cannot compare `{0}`: the parallel mean is zero")]
    ZeroParallelMean(&'static str),
    #[error("cannot compare `{0}`: no samples")]
    NoSamples(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ThroughputConfig {
    pub nodes: u32,
    pub slots: u32,
    pub walltime_minutes: u32,
}

impl ThroughputConfig {
    pub fn runs_per_job(&self) -> u64 {
        u64::from(self.nodes) * u64::from(self.slots)
    }
}

/// Completed runs after `t_minutes` of execution.
///
/// Negative or non-finite times count as zero elapsed time.
pub fn throughput(t_minutes: f64, cfg: &ThroughputConfig) -> u64 {
    if t_minutes.is_nan() || t_minutes <= 0.0 || cfg.walltime_minutes == 0 {
        return 0;
    }
    // truncation is floor for positive values
    let periods = (t_minutes / f64::from(cfg.walltime_minutes)) as u64;
    cfg.runs_per_job() * periods
}

pub fn throughput_series(timestamps: &[f64], cfg: &ThroughputConfig) -> Vec<SeriesPoint> {
    timestamps
        .iter()
        .map(|&t| SeriesPoint {
            timestamp_minutes: t,
            completed_runs: throughput(t, cfg),
        })
        .collect()
}

pub fn speedup(runs_a: u64, runs_b: u64) -> Result<f64, EvalError> {
    if runs_b == 0 {
        return Err(EvalError::ZeroDenominator);
    }
    Ok(runs_a as f64 / runs_b as f64)
}

/// Runs and speedup over `baseline_runs` if `cfg` had `new_nodes` nodes.
pub fn predict_scaling(
    new_nodes: u32,
    cfg: &ThroughputConfig,
    t_minutes: f64,
    baseline_runs: u64,
) -> Result<(u64, f64), EvalError> {
    let scaled = ThroughputConfig {
        nodes: new_nodes,
        ..*cfg
    };
    let runs = throughput(t_minutes, &scaled);
    Ok((runs, speedup(runs, baseline_runs)?))
}

/// Signed percent differences of serial relative to parallel means.
/// Negative means the serial configuration used less.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Deltas {
    pub walltime: f64,
    pub cpu_time: f64,
    pub ram: f64,
    pub cpu_percent: f64,
}

fn percent_delta(
    field: &'static str,
    serial: f64,
    parallel: f64,
    samples: (u32, u32),
) -> Result<f64, EvalError> {
    if samples.0 == 0 || samples.1 == 0 {
        return Err(EvalError::NoSamples(field));
    }
    if parallel == 0.0 {
        return Err(EvalError::ZeroParallelMean(field));
    }
    Ok((serial - parallel) / parallel * 100.0)
}

pub fn compare_configs(
    serial: &ResourceSummary,
    parallel: &ResourceSummary,
) -> Result<Deltas, EvalError> {
    let (s, p) = (serial.samples, parallel.samples);
    Ok(Deltas {
        walltime: percent_delta(
            "walltime",
            serial.mean_walltime_s,
            parallel.mean_walltime_s,
            (s.walltime, p.walltime),
        )?,
        cpu_time: percent_delta(
            "cpu_time",
            serial.mean_cpu_time_s,
            parallel.mean_cpu_time_s,
            (s.cpu_time, p.cpu_time),
        )?,
        ram: percent_delta(
            "ram",
            serial.mean_peak_ram_mb,
            parallel.mean_peak_ram_mb,
            (s.peak_ram, p.peak_ram),
        )?,
        cpu_percent: percent_delta(
            "cpu_percent",
            serial.mean_cpu_percent,
            parallel.mean_cpu_percent,
            (s.cpu_percent, p.cpu_percent),
        )?,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeriesPoint {
    pub timestamp_minutes: f64,
    pub completed_runs: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub series: Vec<SeriesPoint>,
    pub baseline_series: Vec<SeriesPoint>,
    /// Final modeled runs over final baseline runs.
    pub speedup: f64,
    pub deltas: Option<Deltas>,
}

impl EvaluationReport {
    /// Models `cfg` at the baseline's timestamps and compares the final
    /// points.
    pub fn build(
        cfg: &ThroughputConfig,
        baseline_series: Vec<SeriesPoint>,
        deltas: Option<Deltas>,
    ) -> Result<Self, EvalError> {
        let timestamps: Vec<f64> = baseline_series
            .iter()
            .map(|p| p.timestamp_minutes)
            .collect();
        let series = throughput_series(&timestamps, cfg);
        let modeled = series.last().map_or(0, |p| p.completed_runs);
        let baseline = baseline_series.last().map_or(0, |p| p.completed_runs);
        Ok(EvaluationReport {
            speedup: speedup(modeled, baseline)?,
            series,
            baseline_series,
            deltas,
        })
    }
}
