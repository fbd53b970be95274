//! Job-array distribution planning and PBS Professional script emission.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::manifest::{Manifest, NodeProfile};

/// Where one instance runs: array element, node within it, slot on the node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Assignment {
    pub instance_id: u32,
    pub job_index: u32,
    pub node_index: u32,
    pub slot_index: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DistributionPlan {
    /// Sorted by `instance_id`.
    pub assignments: Vec<Assignment>,
    pub jobs: u32,
}

impl DistributionPlan {
    pub fn job(&self, job_index: u32) -> impl Iterator<Item = &Assignment> {
        self.assignments
            .iter()
            .filter(move |a| a.job_index == job_index)
    }

    /// Instances per node within one job, indexed by `node_index`.
    pub fn node_loads(&self, job_index: u32, nodes: u32) -> Vec<u32> {
        let mut loads = alloc::vec![0u32; nodes as usize];
        for a in self.job(job_index) {
            loads[a.node_index as usize] += 1;
        }
        loads
    }
}

/// Splits `total_runs` instances into jobs of `nodes * slots` and deals each
/// job's instances round-robin across its nodes.
///
/// Zero arguments are treated as 1.
pub fn plan_distribution(total_runs: u32, nodes: u32, slots: u32) -> DistributionPlan {
    let nodes = nodes.max(1);
    let slots = slots.max(1);
    let per_job = u64::from(nodes) * u64::from(slots);
    let assignments = (0..total_runs)
        .map(|i| {
            let idx = u64::from(i);
            let r = idx % per_job;
            Assignment {
                instance_id: i,
                job_index: (idx / per_job) as u32,
                node_index: (r % u64::from(nodes)) as u32,
                slot_index: (r / u64::from(nodes)) as u32,
            }
        })
        .collect();
    DistributionPlan {
        assignments,
        jobs: u64::from(total_runs).div_ceil(per_job).max(1) as u32,
    }
}

/// Everything the PBS script header and body need.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JobArraySpec {
    pub campaign_name: String,
    pub jobs: u32,
    pub nodes: u32,
    pub slots_per_node: u32,
    pub node_profile: NodeProfile,
    pub walltime_minutes: u32,
    pub queue: String,
    /// Absolute path of the command list; line `k` launches instance `k`.
    pub launch_command_file: String,
}

impl JobArraySpec {
    pub fn from_manifest(m: &Manifest, launch_command_file: impl Into<String>) -> Self {
        JobArraySpec {
            campaign_name: m.campaign_name.clone(),
            jobs: m.jobs().max(1) as u32,
            nodes: m.nodes,
            slots_per_node: m.slots_per_node,
            node_profile: m.node_profile,
            walltime_minutes: m.walltime_minutes,
            queue: m.queue.clone(),
            launch_command_file: launch_command_file.into(),
        }
    }
}

/// `HH:MM:SS` for a whole number of minutes.
pub fn format_walltime(minutes: u32) -> String {
    format!("{:02}:{:02}:00", minutes / 60, minutes % 60)
}

/// PBS Professional job-array script for `spec`.
///
/// Each array element requests `nodes` nodes and launches its share of the
/// command list (lines `index * per_job ..`) in the background, one
/// `pbsdsh` per instance, dealt round-robin over the element's hosts, then
/// waits for all of them.
pub fn render_pbs(spec: &JobArraySpec) -> String {
    let per_job = u64::from(spec.nodes) * u64::from(spec.slots_per_node);
    let mut s = String::new();
    s.push_str("#!/bin/bash\n");
    s.push_str(&format!("#PBS -N {}\n", spec.campaign_name));
    s.push_str(&format!("#PBS -q {}\n", spec.queue));
    s.push_str(&format!(
        "#PBS -l select={}:ncpus={}:mem={}gb\n",
        spec.nodes, spec.node_profile.cores, spec.node_profile.ram_gb
    ));
    s.push_str(&format!(
        "#PBS -l walltime={}\n",
        format_walltime(spec.walltime_minutes)
    ));
    if spec.jobs > 1 {
        s.push_str(&format!("#PBS -J 0-{}\n", spec.jobs - 1));
    }
    s.push('\n');
    s.push_str("set -u\n\n");
    s.push_str(&format!("COMMANDS=\"{}\"\n", spec.launch_command_file));
    s.push_str(&format!("PER_JOB={per_job}\n"));
    s.push_str(
        "INDEX=\"${PBS_ARRAY_INDEX:-0}\"\n\
         FIRST=$(( INDEX * PER_JOB ))\n\
         \n\
         mapfile -t HOSTS < <(sort -u \"${PBS_NODEFILE:-/dev/null}\")\n\
         if [ \"${#HOSTS[@]}\" -eq 0 ]; then\n    HOSTS=(\"$(hostname)\")\nfi\n\
         \n\
         r=0\n\
         while IFS= read -r cmd; do\n    \
             host=\"${HOSTS[$(( r % ${#HOSTS[@]} ))]}\"\n    \
             pbsdsh -h \"$host\" -- /bin/bash -c \"$cmd\" &\n    \
             r=$(( r + 1 ))\n\
         done < <(tail -n \"+$(( FIRST + 1 ))\" \"$COMMANDS\" | head -n \"$PER_JOB\")\n\
         wait\n",
    );
    s
}
