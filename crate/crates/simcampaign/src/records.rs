//! The append-only `records.jsonl` stream.
//!
//! Each instance contributes a start marker when launched and a full
//! [`RunRecord`] when it ends. Readers only trust newline-terminated lines,
//! so a reader racing the supervisor never sees a half-written record.

use std::fs::{self, File, OpenOptions};
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use simcampaign_core::{RunRecord, StatusSummary, StreamEntry};

use crate::layout;

pub struct RecordWriter {
    file: File,
}

impl RecordWriter {
    /// Starts a fresh stream at `path`, discarding earlier records.
    pub fn create(path: &Path) -> io::Result<Self> {
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        let file = OpenOptions::new()
            .create(true)
            .write(true)
            .truncate(true)
            .open(path)?;
        Ok(RecordWriter { file })
    }

    pub fn append(&mut self, entry: &StreamEntry) -> io::Result<()> {
        let mut line = serde_json::to_string(entry).map_err(io::Error::other)?;
        line.push('\n');
        self.file.write_all(line.as_bytes())?;
        self.file.flush()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StreamProblem {
    /// 1-based; zero for file-level problems.
    pub line: usize,
    pub message: String,
}

#[derive(Debug, Default)]
pub struct Stream {
    pub entries: Vec<StreamEntry>,
    pub problems: Vec<StreamProblem>,
}

impl Stream {
    /// Latest finished record per instance, by instance id.
    pub fn finished(&self) -> Vec<RunRecord> {
        let mut by_id = std::collections::BTreeMap::new();
        for e in &self.entries {
            if let StreamEntry::Finished(r) = e {
                by_id.insert(r.instance_id, r.clone());
            }
        }
        by_id.into_values().collect()
    }
}

/// Reads every committed line of `path`; unparseable lines and a missing
/// file are reported as problems rather than errors.
pub fn read_stream(path: &Path) -> Stream {
    let mut stream = Stream::default();
    let text = match fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) => {
            stream.problems.push(StreamProblem {
                line: 0,
                message: format!("{}: {e}", path.display()),
            });
            return stream;
        }
    };
    let committed = match text.rfind('\n') {
        Some(end) => &text[..=end],
        None => "",
    };
    for (i, line) in committed.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<StreamEntry>(line) {
            Ok(e) => stream.entries.push(e),
            Err(e) => stream.problems.push(StreamProblem {
                line: i + 1,
                message: e.to_string(),
            }),
        }
    }
    stream
}

pub fn records_path(state_dir: &Path) -> PathBuf {
    state_dir.join(layout::RECORDS)
}

#[derive(Debug)]
pub struct StatusReport {
    pub summary: StatusSummary,
    pub problems: Vec<StreamProblem>,
}

/// Counts pending/running/succeeded/failed/killed instances from the record
/// stream in `state_dir`. Safe to call while a campaign is running.
pub fn status(state_dir: &Path, total_runs: u32) -> StatusReport {
    let stream = read_stream(&records_path(state_dir));
    StatusReport {
        summary: StatusSummary::from_entries(total_runs, &stream.entries),
        problems: stream.problems,
    }
}
