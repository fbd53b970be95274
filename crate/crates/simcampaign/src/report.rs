//! Builds `evaluation.json` from the throughput model, the bundled baseline
//! measurements and serial/parallel resource summaries.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use simcampaign_core::collector::MB_PER_GB;
use simcampaign_core::evaluator::EvalError;
use simcampaign_core::{
    compare_configs, Deltas, EvaluationReport, Manifest, ResourceSummary, SeriesPoint,
    ThroughputConfig,
};

use crate::collect::CampaignSummary;
use crate::layout;

const REFERENCE_JSON: &str = include_str!("../data/reference.json");

#[derive(Debug, Clone, Deserialize)]
pub struct Reference {
    pub baseline: Baseline,
    pub resource_comparison: ResourceComparison,
}

#[derive(Debug, Clone, Deserialize)]
pub struct Baseline {
    pub origin: String,
    pub series: Vec<SeriesPoint>,
}

#[derive(Debug, Clone, Deserialize)]
pub struct ResourceComparison {
    pub origin: String,
    pub serial: ReportedMeans,
    pub parallel: ReportedMeans,
}

#[derive(Debug, Clone, Copy, Deserialize)]
pub struct ReportedMeans {
    pub walltime_s: f64,
    pub cpu_time_s: f64,
    pub peak_ram_gb: f64,
    pub cpu_percent: f64,
}

impl From<ReportedMeans> for ResourceSummary {
    fn from(m: ReportedMeans) -> Self {
        ResourceSummary::from_means(
            m.walltime_s,
            m.cpu_time_s,
            m.peak_ram_gb * MB_PER_GB,
            m.cpu_percent,
        )
    }
}

/// The bundled reference measurements.
pub fn reference() -> Reference {
    serde_json::from_str(REFERENCE_JSON).expect("bundled reference data parses")
}

pub fn throughput_config(m: &Manifest) -> ThroughputConfig {
    ThroughputConfig {
        nodes: m.nodes,
        slots: m.slots_per_node,
        walltime_minutes: m.walltime_minutes,
    }
}

/// Where the serial/parallel comparison came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeltaSource {
    Reference { origin: String },
    Summaries { serial: PathBuf, parallel: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportFile {
    pub config: ThroughputConfig,
    pub baseline_origin: String,
    #[serde(flatten)]
    pub report: EvaluationReport,
    pub deltas_source: DeltaSource,
    /// This campaign's own `summary.json`, when it has been collected.
    pub campaign: Option<CampaignSummary>,
}

fn round2(x: f64) -> f64 {
    (x * 100.0).round() / 100.0
}

fn rounded(d: Deltas) -> Deltas {
    Deltas {
        walltime: round2(d.walltime),
        cpu_time: round2(d.cpu_time),
        ram: round2(d.ram),
        cpu_percent: round2(d.cpu_percent),
    }
}

/// Serial and parallel summaries to compare; the bundled reference when
/// `None`.
pub struct Comparison {
    pub serial: ResourceSummary,
    pub parallel: ResourceSummary,
    pub source: DeltaSource,
}

impl Comparison {
    pub fn from_reference(r: &Reference) -> Self {
        Comparison {
            serial: r.resource_comparison.serial.into(),
            parallel: r.resource_comparison.parallel.into(),
            source: DeltaSource::Reference {
                origin: r.resource_comparison.origin.clone(),
            },
        }
    }
}

pub fn build_report(
    m: &Manifest,
    comparison: &Comparison,
    campaign: Option<CampaignSummary>,
) -> Result<ReportFile, EvalError> {
    let reference = reference();
    let cfg = throughput_config(m);
    let deltas = compare_configs(&comparison.serial, &comparison.parallel)?;
    let mut report =
        EvaluationReport::build(&cfg, reference.baseline.series, Some(rounded(deltas)))?;
    report.speedup = round2(report.speedup);
    Ok(ReportFile {
        config: cfg,
        baseline_origin: reference.baseline.origin,
        report,
        deltas_source: comparison.source.clone(),
        campaign,
    })
}

pub fn write_report(output_dir: &Path, report: &ReportFile) -> io::Result<PathBuf> {
    fs::create_dir_all(output_dir)?;
    let path = output_dir.join(layout::EVALUATION);
    let mut json = serde_json::to_string_pretty(report).map_err(io::Error::other)?;
    json.push('\n');
    fs::write(&path, json)?;
    Ok(path)
}

/// Timestamp, baseline and modeled columns as aligned text.
pub fn render_table(report: &EvaluationReport) -> String {
    let mut s = format!(
        "{:>10}  {:>10}  {:>10}\n",
        "timestamp", "baseline", "modeled"
    );
    for (b, m) in report.baseline_series.iter().zip(&report.series) {
        s.push_str(&format!(
            "{:>10}  {:>10}  {:>10}\n",
            b.timestamp_minutes, b.completed_runs, m.completed_runs
        ));
    }
    s.push_str(&format!("speedup: {:.2}\n", report.speedup));
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    fn reference_cluster() -> Manifest {
        let mut m = Manifest::new("highway", "/t", "w.wbt", 2304, "/o");
        m.nodes = 6;
        m.slots_per_node = 8;
        m.walltime_minutes = 15;
        m
    }

    #[test]
    fn reference_baseline_is_complete() {
        let r = reference();
        let runs: Vec<u64> = r.baseline.series.iter().map(|p| p.completed_runs).collect();
        assert_eq!(runs, [4, 7, 11, 15, 26, 40, 74]);
        assert!(r
            .baseline
            .series
            .windows(2)
            .all(|w| w[0].timestamp_minutes < w[1].timestamp_minutes));
    }

    #[test]
    fn reference_cluster_report() {
        let r = build_report(
            &reference_cluster(),
            &Comparison::from_reference(&reference()),
            None,
        )
        .unwrap();
        let modeled: Vec<u64> = r.report.series.iter().map(|p| p.completed_runs).collect();
        assert_eq!(modeled, [96, 192, 288, 384, 768, 1152, 2304]);
        assert_eq!(r.report.speedup, 31.14);
        let d = r.report.deltas.unwrap();
        assert_eq!(d.walltime, -33.47);
        assert_eq!(d.cpu_time, 4.35);
        assert_eq!(d.ram, -4.35);

        let table = render_table(&r.report);
        assert!(
            table.contains("       720          74        2304\n"),
            "{table}"
        );
        assert!(table.ends_with("speedup: 31.14\n"));
    }

    #[test]
    fn report_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let r = build_report(
            &reference_cluster(),
            &Comparison::from_reference(&reference()),
            None,
        )
        .unwrap();
        let path = write_report(dir.path(), &r).unwrap();
        let back: ReportFile = serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap();
        assert_eq!(back, r);
    }
}
