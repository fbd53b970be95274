//! Writes the command list and PBS job-array script for a campaign.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use simcampaign_core::{render_pbs, InstancePlan, JobArraySpec, Manifest};

use crate::layout;

pub struct JobFiles {
    pub script: PathBuf,
    pub commands: PathBuf,
}

/// One rendered command per line; line `k` is instance `k`.
pub fn command_list(plans: &[InstancePlan]) -> String {
    let mut sorted: Vec<&InstancePlan> = plans.iter().collect();
    sorted.sort_by_key(|p| p.instance_id);
    let mut s = String::new();
    for p in sorted {
        s.push_str(&p.command);
        s.push('\n');
    }
    s
}

/// Writes `commands.txt` and `job.pbs` into the manifest's output directory.
pub fn write_job_files(m: &Manifest, plans: &[InstancePlan]) -> io::Result<JobFiles> {
    let output = std::path::absolute(Path::new(&m.output_dir))?;
    fs::create_dir_all(&output)?;
    let commands = output.join(layout::COMMANDS);
    fs::write(&commands, command_list(plans))?;

    let spec = JobArraySpec::from_manifest(m, commands.to_string_lossy());
    let script = output.join(layout::JOB_SCRIPT);
    fs::write(&script, render_pbs(&spec))?;
    Ok(JobFiles { script, commands })
}
