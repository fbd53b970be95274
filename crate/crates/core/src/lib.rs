//! Pure planning, rendering and evaluation logic for batch simulation
//! campaigns.
//!
//! Everything here works on in-memory values and needs only `alloc`: the
//! campaign [`manifest`] and its invariants, instance [`fanout`] ladders and
//! command rendering, job-array [`scheduler`] planning and PBS emission, the
//! [`record`] stream model, per-run [`collector`] statistics and the
//! throughput/speedup [`evaluator`]. Filesystem, process and CLI concerns live
//! in the `simcampaign` crate.

#![no_std]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod collector;
pub mod evaluator;
pub mod fanout;
pub mod manifest;
pub mod record;
pub mod scheduler;

pub use collector::{completion_rate, resource_summary, ResourceSummary, SampleCounts};
pub use evaluator::{
    compare_configs, predict_scaling, speedup, throughput, throughput_series, Deltas,
    EvaluationReport, SeriesPoint, ThroughputConfig,
};
pub use fanout::{display_ladder, port_ladder, render_command, rewrite_port, InstancePlan};
pub use manifest::{Manifest, Mode, NodeProfile, Violation};
pub use record::{ExitStatus, RunRecord, StartMarker, StatusSummary, StreamEntry};
pub use scheduler::{plan_distribution, render_pbs, Assignment, DistributionPlan, JobArraySpec};
