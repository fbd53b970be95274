//! Completion rate and mean resource consumption over finished runs.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::record::RunRecord;

pub const MB_PER_GB: f64 = 1024.0;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum StatsError {
    #[error("completion rate is undefined for an empty record set")]
    NoRecords,
    #[error("no usable samples for {}", .0.join(", "))]
    NoSamples(Vec<&'static str>),
}

/// How many records contributed to each mean.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleCounts {
    pub walltime: u32,
    pub cpu_time: u32,
    pub peak_ram: u32,
    pub cpu_percent: u32,
}

/// Mean per-run resource consumption.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResourceSummary {
    pub mean_walltime_s: f64,
    pub mean_cpu_time_s: f64,
    pub mean_peak_ram_mb: f64,
    /// Mean over runs of `cpu_time_s / walltime_s * 100`; exceeds 100 for
    /// multi-threaded runs.
    pub mean_cpu_percent: f64,
    pub samples: SampleCounts,
}

impl ResourceSummary {
    /// A summary of externally reported means, one sample each.
    pub fn from_means(
        walltime_s: f64,
        cpu_time_s: f64,
        peak_ram_mb: f64,
        cpu_percent: f64,
    ) -> Self {
        ResourceSummary {
            mean_walltime_s: walltime_s,
            mean_cpu_time_s: cpu_time_s,
            mean_peak_ram_mb: peak_ram_mb,
            mean_cpu_percent: cpu_percent,
            samples: SampleCounts {
                walltime: 1,
                cpu_time: 1,
                peak_ram: 1,
                cpu_percent: 1,
            },
        }
    }

    pub fn mean_peak_ram_gb(&self) -> f64 {
        self.mean_peak_ram_mb / MB_PER_GB
    }
}

/// Fraction of `records` that succeeded.
pub fn completion_rate(records: &[RunRecord]) -> Result<f64, StatsError> {
    if records.is_empty() {
        return Err(StatsError::NoRecords);
    }
    let ok = records
        .iter()
        .filter(|r| r.exit_status.is_success())
        .count();
    Ok(ok as f64 / records.len() as f64)
}

#[derive(Default)]
struct Mean {
    sum: f64,
    n: u32,
}

impl Mean {
    fn add(&mut self, v: Option<f64>) {
        if let Some(v) = v.filter(|v| v.is_finite()) {
            self.sum += v;
            self.n += 1;
        }
    }

    fn value(&self) -> f64 {
        if self.n == 0 {
            0.0
        } else {
            self.sum / f64::from(self.n)
        }
    }
}

/// Arithmetic means of each accounting field over the records that carry it.
///
/// Fails, naming the fields, when any field has no samples at all.
pub fn resource_summary(records: &[RunRecord]) -> Result<ResourceSummary, StatsError> {
    let mut wall = Mean::default();
    let mut cpu = Mean::default();
    let mut ram = Mean::default();
    let mut pct = Mean::default();
    for r in records {
        wall.add(Some(r.walltime_s));
        cpu.add(r.cpu_time_s);
        ram.add(r.peak_ram_mb);
        pct.add(
            r.cpu_time_s
                .filter(|_| r.walltime_s > 0.0)
                .map(|c| c / r.walltime_s * 100.0),
        );
    }

    let missing: Vec<&'static str> = [
        ("walltime_s", &wall),
        ("cpu_time_s", &cpu),
        ("peak_ram_mb", &ram),
        ("cpu_percent", &pct),
    ]
    .into_iter()
    .filter(|(_, m)| m.n == 0)
    .map(|(name, _)| name)
    .collect();
    if !missing.is_empty() {
        return Err(StatsError::NoSamples(missing));
    }

    Ok(ResourceSummary {
        mean_walltime_s: wall.value(),
        mean_cpu_time_s: cpu.value(),
        mean_peak_ram_mb: ram.value(),
        mean_cpu_percent: pct.value(),
        samples: SampleCounts {
            walltime: wall.n,
            cpu_time: cpu.n,
            peak_ram: ram.n,
            cpu_percent: pct.n,
        },
    })
}
