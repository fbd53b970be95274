//! Per-instance execution records and the status view over a record stream.

use alloc::collections::BTreeMap;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExitStatus {
    Succeeded,
    /// Nonzero exit code, or a negative synthetic code when the process
    /// could not be spawned or died from a signal.
    Failed(i32),
    KilledWalltime,
}

impl ExitStatus {
    pub fn is_success(self) -> bool {
        self == ExitStatus::Succeeded
    }
}

/// Outcome of one finished instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub instance_id: u32,
    pub job_index: u32,
    pub node_index: u32,
    pub slot_index: u32,
    /// Milliseconds since the Unix epoch.
    pub started_at: u64,
    pub ended_at: u64,
    pub exit_status: ExitStatus,
    pub walltime_s: f64,
    /// User plus system CPU seconds, when the platform reports them.
    pub cpu_time_s: Option<f64>,
    pub peak_ram_mb: Option<f64>,
}

impl RunRecord {
    /// Whether `[started_at, ended_at)` contains the instant `t_ms`.
    pub fn active_at(&self, t_ms: u64) -> bool {
        self.started_at <= t_ms && t_ms < self.ended_at
    }
}

/// Written to the stream when an instance is launched.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StartMarker {
    pub instance_id: u32,
    pub job_index: u32,
    pub node_index: u32,
    pub slot_index: u32,
    pub started_at: u64,
}

/// One line of the record stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum StreamEntry {
    Finished(RunRecord),
    Started(StartMarker),
}

impl StreamEntry {
    pub fn instance_id(&self) -> u32 {
        match self {
            StreamEntry::Finished(r) => r.instance_id,
            StreamEntry::Started(s) => s.instance_id,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StatusSummary {
    pub pending: u32,
    pub running: u32,
    pub succeeded: u32,
    pub failed: u32,
    pub killed: u32,
}

impl StatusSummary {
    pub fn total(&self) -> u32 {
        self.pending + self.running + self.succeeded + self.failed + self.killed
    }

    /// Classifies every instance in `0..total_runs` by its latest stream
    /// entry. A finished entry always outranks a start marker; entries for
    /// ids outside the campaign are ignored.
    pub fn from_entries<'a>(
        total_runs: u32,
        entries: impl IntoIterator<Item = &'a StreamEntry>,
    ) -> Self {
        let mut latest: BTreeMap<u32, &StreamEntry> = BTreeMap::new();
        for e in entries {
            let id = e.instance_id();
            if id >= total_runs {
                continue;
            }
            let keep_old = matches!(
                (latest.get(&id), e),
                (Some(StreamEntry::Finished(_)), StreamEntry::Started(_))
            );
            if !keep_old {
                latest.insert(id, e);
            }
        }

        let mut s = StatusSummary::default();
        for e in latest.values() {
            match e {
                StreamEntry::Started(_) => s.running += 1,
                StreamEntry::Finished(r) => match r.exit_status {
                    ExitStatus::Succeeded => s.succeeded += 1,
                    ExitStatus::Failed(_) => s.failed += 1,
                    ExitStatus::KilledWalltime => s.killed += 1,
                },
            }
        }
        s.pending = total_runs - latest.len() as u32;
        s
    }
}
