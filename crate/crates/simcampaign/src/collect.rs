//! Merges per-instance CSV datasets and writes the campaign summary.

use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use simcampaign_core::{
    completion_rate, resource_summary, InstancePlan, ResourceSummary, RunRecord,
};

use crate::layout;
use crate::simstub::CSV_HEADER;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AggregateDataset {
    pub rows: u64,
    pub runs_included: u32,
    pub output_path: PathBuf,
}

/// A succeeded run whose dataset could not be merged.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IntegrityError {
    pub instance_id: u32,
    pub message: String,
}

#[derive(Debug)]
pub struct Collected {
    pub dataset: AggregateDataset,
    pub integrity_errors: Vec<IntegrityError>,
}

/// Concatenates the datasets of succeeded runs into
/// `{output_dir}/merged.csv`, prefixing every row with its instance id.
///
/// Runs are merged in instance-id order; the last record per instance wins.
/// Failed and killed runs are skipped. A succeeded run without a readable
/// dataset, or with a header that differs from the first merged one, is
/// reported and excluded.
pub fn collect(
    records: &[RunRecord],
    workdirs: &BTreeMap<u32, PathBuf>,
    output_dir: &Path,
) -> io::Result<Collected> {
    let mut latest: BTreeMap<u32, &RunRecord> = BTreeMap::new();
    for r in records {
        latest.insert(r.instance_id, r);
    }

    let mut header: Option<String> = None;
    let mut body = String::new();
    let mut rows = 0u64;
    let mut runs_included = 0u32;
    let mut integrity_errors = Vec::new();

    for (&id, r) in &latest {
        if !r.exit_status.is_success() {
            continue;
        }
        let fail = |message: String| IntegrityError {
            instance_id: id,
            message,
        };
        let Some(workdir) = workdirs.get(&id) else {
            integrity_errors.push(fail(String::from("no workdir in plan")));
            continue;
        };
        let path = workdir.join(layout::INSTANCE_OUTPUT);
        let text = match fs::read_to_string(&path) {
            Ok(t) => t,
            Err(e) => {
                integrity_errors.push(fail(format!("{}: {e}", path.display())));
                continue;
            }
        };
        let mut lines = text.lines();
        let Some(run_header) = lines.next() else {
            integrity_errors.push(fail(format!("{}: empty dataset", path.display())));
            continue;
        };
        match &header {
            Some(h) if h != run_header => {
                integrity_errors.push(fail(format!(
                    "{}: header {run_header:?} differs from {h:?}",
                    path.display()
                )));
                continue;
            }
            Some(_) => {}
            None => header = Some(run_header.to_string()),
        }
        for line in lines.filter(|l| !l.trim().is_empty()) {
            body.push_str(&format!("{id},{line}\n"));
            rows += 1;
        }
        runs_included += 1;
    }

    let header = header.as_deref().unwrap_or(CSV_HEADER);
    let output_path = output_dir.join(layout::MERGED);
    fs::create_dir_all(output_dir)?;
    fs::write(&output_path, format!("instance_id,{header}\n{body}"))?;

    Ok(Collected {
        dataset: AggregateDataset {
            rows,
            runs_included,
            output_path,
        },
        integrity_errors,
    })
}

pub fn workdirs(plans: &[InstancePlan]) -> BTreeMap<u32, PathBuf> {
    plans
        .iter()
        .map(|p| (p.instance_id, PathBuf::from(&p.workdir)))
        .collect()
}

/// Contents of `summary.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignSummary {
    pub records: u32,
    pub completion_rate: Option<f64>,
    pub runs_included: u32,
    pub rows: u64,
    /// Means over succeeded runs, absent when no run carried accounting.
    pub resources: Option<ResourceSummary>,
    pub mean_peak_ram_gb: Option<f64>,
    pub notes: Vec<String>,
}

pub fn summarize(records: &[RunRecord], collected: &Collected) -> CampaignSummary {
    let mut notes: Vec<String> = collected
        .integrity_errors
        .iter()
        .map(|e| format!("instance {}: {}", e.instance_id, e.message))
        .collect();
    let succeeded: Vec<RunRecord> = records
        .iter()
        .filter(|r| r.exit_status.is_success())
        .cloned()
        .collect();
    let resources = match resource_summary(&succeeded) {
        Ok(s) => Some(s),
        Err(e) => {
            notes.push(e.to_string());
            None
        }
    };
    CampaignSummary {
        records: records.len() as u32,
        completion_rate: completion_rate(records).ok(),
        runs_included: collected.dataset.runs_included,
        rows: collected.dataset.rows,
        mean_peak_ram_gb: resources.map(|r| r.mean_peak_ram_gb()),
        resources,
        notes,
    }
}

pub fn write_summary(output_dir: &Path, summary: &CampaignSummary) -> io::Result<PathBuf> {
    let path = output_dir.join(layout::SUMMARY);
    let mut json = serde_json::to_string_pretty(summary).map_err(io::Error::other)?;
    json.push('\n');
    fs::write(&path, json)?;
    Ok(path)
}

pub fn read_summary(path: &Path) -> io::Result<CampaignSummary> {
    let text = fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))
}
