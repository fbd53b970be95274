//! Helpers shared by the integration tests.
#![allow(dead_code)]

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Duration;

use simcampaign::core::{InstancePlan, Manifest, RunRecord};
use simcampaign::localexec::ExecOptions;
use simcampaign::manifest::{load_manifest, serialize_manifest};
use simcampaign::simstub::Heartbeat;

pub const BIN: &str = env!("CARGO_BIN_EXE_simcampaign");

pub fn desk_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("campaigns/desk")
}

/// The bundled desk campaign, writing into `out` and listening from
/// `base_port`. The manifest is saved as `out/../manifest.json`.
pub fn desk_campaign(root: &Path, base_port: u16) -> (PathBuf, Manifest) {
    let mut m = load_manifest(&desk_dir().join("manifest.json")).unwrap();
    m.base_port = base_port;
    m.output_dir = root.join("out").to_string_lossy().into_owned();
    let path = root.join("manifest.json");
    fs::create_dir_all(root).unwrap();
    fs::write(&path, serialize_manifest(&m)).unwrap();
    (path, m)
}

/// Exec options whose `PATH` finds the `simcampaign` binary under test.
pub fn stub_opts(m: &Manifest) -> ExecOptions {
    let mut opts = ExecOptions::for_manifest(m);
    opts.path_prefix = Path::new(BIN).parent().map(Path::to_path_buf);
    opts
}

/// Half-open `[started_at, ended_at)` heartbeat interval per instance.
pub fn heartbeats(plans: &[InstancePlan]) -> BTreeMap<u32, (u64, u64)> {
    plans
        .iter()
        .filter_map(|p| {
            let beat = Heartbeat::read(&Path::new(&p.workdir).join("heartbeat")).ok()??;
            Some((p.instance_id, (beat.started_at, beat.ended_at?)))
        })
        .collect()
}

/// Largest number of intervals alive at one instant, by sweeping sorted
/// endpoints; ends sort before starts at equal times.
pub fn max_overlap<'a>(intervals: impl IntoIterator<Item = &'a (u64, u64)>) -> usize {
    let mut events: Vec<(u64, i32)> = Vec::new();
    for &(s, e) in intervals {
        events.push((s, 1));
        events.push((e, -1));
    }
    events.sort();
    let (mut live, mut peak) = (0i32, 0i32);
    for (_, d) in events {
        live += d;
        peak = peak.max(live);
    }
    peak as usize
}

/// Peak concurrency overall and the worst peak on any single node index.
pub fn concurrency(records: &[RunRecord], beats: &BTreeMap<u32, (u64, u64)>) -> (usize, usize) {
    let total = max_overlap(beats.values());
    let mut per_node: BTreeMap<u32, Vec<(u64, u64)>> = BTreeMap::new();
    for r in records {
        if let Some(iv) = beats.get(&r.instance_id) {
            per_node.entry(r.node_index).or_default().push(*iv);
        }
    }
    let node = per_node.values().map(max_overlap).max().unwrap_or(0);
    (total, node)
}

/// Number of distinct start waves: groups of heartbeats starting within
/// `gap` of each other.
pub fn waves(beats: &BTreeMap<u32, (u64, u64)>, gap: Duration) -> usize {
    let mut starts: Vec<u64> = beats.values().map(|&(s, _)| s).collect();
    starts.sort_unstable();
    let gap = gap.as_millis() as u64;
    starts.windows(2).filter(|w| w[1] - w[0] > gap).count() + usize::from(!starts.is_empty())
}
