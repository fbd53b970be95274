//! Campaign manifest: the single document that drives fan-out, scheduling,
//! execution and evaluation.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const DEFAULT_NODES: u32 = 6;
pub const DEFAULT_SLOTS_PER_NODE: u32 = 8;
pub const DEFAULT_BASE_PORT: u16 = 8873;
pub const DEFAULT_PORT_STRIDE: u32 = 7;
pub const DEFAULT_DISPLAY_START: u32 = 99;
pub const DEFAULT_WALLTIME_MINUTES: u32 = 15;
pub const DEFAULT_QUEUE: &str = "dice";
pub const DEFAULT_CONTAINER_IMAGE: &str = "webots.sif";

/// Lowest port a campaign may bind without privileges.
pub const MIN_BASE_PORT: u64 = 1024;
pub const MAX_PORT: u64 = 65535;

/// Field names accepted in a manifest document.
pub const KNOWN_FIELDS: &[&str] = &[
    "campaign_name",
    "template_dir",
    "world_file",
    "total_runs",
    "nodes",
    "slots_per_node",
    "base_port",
    "port_stride",
    "display_start",
    "walltime_minutes",
    "queue",
    "node_profile",
    "mode",
    "container_image",
    "output_dir",
    "command_template",
];

pub const NODE_PROFILE_FIELDS: &[&str] = &["cores", "ram_gb", "scratch_gb", "gpus"];

/// Fields a manifest document must spell out.
pub const REQUIRED_FIELDS: &[&str] = &[
    "campaign_name",
    "template_dir",
    "world_file",
    "total_runs",
    "output_dir",
];

/// Resources requested for every compute node of a job.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct NodeProfile {
    pub cores: u32,
    pub ram_gb: u32,
    pub scratch_gb: u32,
    pub gpus: u32,
}

impl Default for NodeProfile {
    /// One DICE-queue node: 40 cores, 744 GB RAM, 1.8 TB scratch (binary
    /// terabytes, 1843 GB) and two GPUs.
    fn default() -> Self {
        NodeProfile {
            cores: 40,
            ram_gb: 744,
            scratch_gb: 1843,
            gpus: 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Rendered under a virtual framebuffer.
    #[default]
    Headless,
    /// Uses whatever display the session forwards.
    Gui,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Headless => "headless",
            Mode::Gui => "gui",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub campaign_name: String,
    pub template_dir: String,
    pub world_file: String,
    pub total_runs: u32,
    #[serde(default = "default_nodes")]
    pub nodes: u32,
    #[serde(default = "default_slots_per_node")]
    pub slots_per_node: u32,
    #[serde(default = "default_base_port")]
    pub base_port: u16,
    #[serde(default = "default_port_stride")]
    pub port_stride: u32,
    #[serde(default = "default_display_start")]
    pub display_start: u32,
    #[serde(default = "default_walltime_minutes")]
    pub walltime_minutes: u32,
    #[serde(default = "default_queue")]
    pub queue: String,
    #[serde(default)]
    pub node_profile: NodeProfile,
    #[serde(default)]
    pub mode: Mode,
    #[serde(default = "default_container_image")]
    pub container_image: String,
    pub output_dir: String,
    /// Overrides the built-in launch command for every instance.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub command_template: Option<String>,
    /// Keys of the source document that are not manifest fields, with
    /// nested keys written as `node_profile.<key>`.
    #[serde(skip)]
    pub unknown_fields: Vec<String>,
}

fn default_nodes() -> u32 {
    DEFAULT_NODES
}
fn default_slots_per_node() -> u32 {
    DEFAULT_SLOTS_PER_NODE
}
fn default_base_port() -> u16 {
    DEFAULT_BASE_PORT
}
fn default_port_stride() -> u32 {
    DEFAULT_PORT_STRIDE
}
fn default_display_start() -> u32 {
    DEFAULT_DISPLAY_START
}
fn default_walltime_minutes() -> u32 {
    DEFAULT_WALLTIME_MINUTES
}
fn default_queue() -> String {
    String::from(DEFAULT_QUEUE)
}
fn default_container_image() -> String {
    String::from(DEFAULT_CONTAINER_IMAGE)
}

impl Manifest {
    /// A manifest with every optional field at its default.
    pub fn new(
        campaign_name: impl Into<String>,
        template_dir: impl Into<String>,
        world_file: impl Into<String>,
        total_runs: u32,
        output_dir: impl Into<String>,
    ) -> Self {
        Manifest {
            campaign_name: campaign_name.into(),
            template_dir: template_dir.into(),
            world_file: world_file.into(),
            total_runs,
            nodes: DEFAULT_NODES,
            slots_per_node: DEFAULT_SLOTS_PER_NODE,
            base_port: DEFAULT_BASE_PORT,
            port_stride: DEFAULT_PORT_STRIDE,
            display_start: DEFAULT_DISPLAY_START,
            walltime_minutes: DEFAULT_WALLTIME_MINUTES,
            queue: default_queue(),
            node_profile: NodeProfile::default(),
            mode: Mode::Headless,
            container_image: default_container_image(),
            output_dir: output_dir.into(),
            command_template: None,
            unknown_fields: Vec::new(),
        }
    }

    /// Concurrent instances in one job.
    pub fn instances_per_job(&self) -> u64 {
        u64::from(self.nodes) * u64::from(self.slots_per_node)
    }

    /// Jobs needed to cover `total_runs`; zero when the shape is degenerate.
    pub fn jobs(&self) -> u64 {
        let per_job = self.instances_per_job();
        if per_job == 0 {
            return 0;
        }
        u64::from(self.total_runs).div_ceil(per_job)
    }

    /// Highest port the per-job ladder reaches.
    pub fn last_port(&self) -> u64 {
        let steps = self.instances_per_job().saturating_sub(1);
        u64::from(self.base_port) + u64::from(self.port_stride) * steps
    }

    /// Walltime limit in seconds.
    pub fn walltime_seconds(&self) -> u64 {
        u64::from(self.walltime_minutes) * 60
    }
}

/// A broken manifest invariant.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum Violation {
    #[error("`{field}` must be at least 1")]
    NonPositive { field: &'static str },
    #[error("`base_port` {base_port} is below {MIN_BASE_PORT}")]
    BasePortReserved { base_port: u16 },
    #[error(
        "port ladder ends at {last_port}, past {MAX_PORT} \
         (base_port + port_stride * (nodes * slots_per_node - 1))"
    )]
    PortRangeExceeded { last_port: u64 },
    #[error("`{field}` {value:?} is not a valid identifier")]
    InvalidIdentifier { field: &'static str, value: String },
    #[error("`{field}` must not be empty")]
    Empty { field: &'static str },
    #[error("unknown field `{0}`")]
    UnknownField(String),
    #[error("`command_template` must be a single line")]
    MultilineTemplate,
    #[error("`{field}` {path:?} does not exist")]
    MissingPath { field: &'static str, path: String },
}

/// Characters a scheduler job or queue name may contain.
fn is_identifier(s: &str) -> bool {
    !s.is_empty()
        && s.chars()
            .all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '-' | '.'))
        && s.chars().next().is_some_and(|c| c.is_ascii_alphabetic())
}

/// Every in-memory invariant violation of `m`, in field order.
///
/// Filesystem existence of `template_dir`/`world_file` is checked by the
/// std companion crate, which appends [`Violation::MissingPath`] entries.
pub fn validate(m: &Manifest) -> Vec<Violation> {
    let mut out = Vec::new();

    for field in &m.unknown_fields {
        out.push(Violation::UnknownField(field.clone()));
    }
    if !is_identifier(&m.campaign_name) {
        out.push(Violation::InvalidIdentifier {
            field: "campaign_name",
            value: m.campaign_name.clone(),
        });
    }
    if !is_identifier(&m.queue) {
        out.push(Violation::InvalidIdentifier {
            field: "queue",
            value: m.queue.clone(),
        });
    }
    for (field, value) in [
        ("template_dir", &m.template_dir),
        ("world_file", &m.world_file),
        ("output_dir", &m.output_dir),
        ("container_image", &m.container_image),
    ] {
        if value.trim().is_empty() {
            out.push(Violation::Empty { field });
        }
    }
    for (field, value) in [
        ("total_runs", m.total_runs),
        ("nodes", m.nodes),
        ("slots_per_node", m.slots_per_node),
        ("port_stride", m.port_stride),
        ("walltime_minutes", m.walltime_minutes),
        ("node_profile.cores", m.node_profile.cores),
    ] {
        if value == 0 {
            out.push(Violation::NonPositive { field });
        }
    }
    if m.command_template
        .as_deref()
        .is_some_and(|t| t.contains(['\n', '\r']))
    {
        out.push(Violation::MultilineTemplate);
    }
    if u64::from(m.base_port) < MIN_BASE_PORT {
        out.push(Violation::BasePortReserved {
            base_port: m.base_port,
        });
    }
    if m.last_port() > MAX_PORT {
        out.push(Violation::PortRangeExceeded {
            last_port: m.last_port(),
        });
    }
    out
}

/// Renders violations one per line, for CLI output.
pub fn describe(violations: &[Violation]) -> String {
    let mut s = String::new();
    for v in violations {
        s.push_str(&format!("  - {v}\n"));
    }
    s
}
