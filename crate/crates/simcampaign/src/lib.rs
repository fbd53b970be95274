//! Simulation campaign orchestrator.
//!
//! Fans a simulation template out into per-instance copies with unique TraCI
//! ports and virtual displays, emits PBS Professional job-array scripts,
//! emulates the cluster locally with per-node slot limits and walltime
//! enforcement, merges per-run datasets and evaluates throughput and
//! speedup. The planning logic itself lives in [`simcampaign_core`]; this
//! crate adds the filesystem, process and CLI layers.

#[cfg(not(unix))]
compile_error!("simcampaign supervises process groups and needs a Unix host");

pub mod cli;
pub mod collect;
pub mod fanout;
pub mod jobscript;
pub mod localexec;
pub mod manifest;
pub mod records;
pub mod report;
pub mod simstub;

pub use simcampaign_core as core;

use std::time::{SystemTime, UNIX_EPOCH};

/// Milliseconds since the Unix epoch.
pub fn now_ms() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis() as u64)
        .unwrap_or(0)
}

/// Environment variables handed to every instance.
pub mod env {
    pub const SIM_PORT: &str = "SIM_PORT";
    pub const SIM_DISPLAY: &str = "SIM_DISPLAY";
    pub const SIM_OUTPUT: &str = "SIM_OUTPUT";
    /// Overrides the manifest's `output_dir`.
    pub const SIMCAMPAIGN_OUTPUT: &str = "SIMCAMPAIGN_OUTPUT";
    /// Scheduler submission command used by `submit` (default `qsub`).
    pub const SIMCAMPAIGN_QSUB: &str = "SIMCAMPAIGN_QSUB";
}

/// File names under a campaign's output directory.
pub mod layout {
    pub const PLAN: &str = "plan.json";
    pub const COMMANDS: &str = "commands.txt";
    pub const JOB_SCRIPT: &str = "job.pbs";
    pub const RECORDS: &str = "records.jsonl";
    pub const MERGED: &str = "merged.csv";
    pub const SUMMARY: &str = "summary.json";
    pub const EVALUATION: &str = "evaluation.json";
    /// Per-instance files, relative to the instance workdir.
    pub const INSTANCE_OUTPUT: &str = "out.csv";
    pub const HEARTBEAT: &str = "heartbeat";
    pub const STDOUT_LOG: &str = "stdout.log";
    pub const STDERR_LOG: &str = "stderr.log";
}
