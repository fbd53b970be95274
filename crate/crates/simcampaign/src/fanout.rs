//! Materializes instance copies of the simulation template on disk.

use std::collections::BTreeSet;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use simcampaign_core::fanout::{self, instance_dir_name, LadderError, RewriteError};
use simcampaign_core::{InstancePlan, Manifest};
use thiserror::Error;

use crate::layout;

#[derive(Debug, Error)]
pub enum FanoutError {
    #[error("instance {instance_id}: {source}")]
    Rewrite {
        instance_id: u32,
        source: RewriteError,
    },
    #[error(transparent)]
    Ladder(#[from] LadderError),
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: io::Error },
    #[error("output_dir {} lies inside template_dir", .0.display())]
    OutputInsideTemplate(PathBuf),
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> FanoutError + '_ {
    move |source| FanoutError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn absolute(p: &str) -> Result<PathBuf, FanoutError> {
    std::path::absolute(p).map_err(io_err(Path::new(p)))
}

/// Creates `n` instance directories under `m.output_dir`, each a copy of the
/// template with the world file's port rewritten, and writes `plan.json`.
///
/// Existing instance directories are replaced.
pub fn fan_out(
    m: &Manifest,
    n: u32,
    occupied_displays: &BTreeSet<u32>,
) -> Result<Vec<InstancePlan>, FanoutError> {
    let template = absolute(&m.template_dir)?;
    let output = absolute(&m.output_dir)?;
    if output.starts_with(&template) {
        return Err(FanoutError::OutputInsideTemplate(output));
    }

    let world_path = template.join(&m.world_file);
    let world_text = fs::read_to_string(&world_path).map_err(io_err(&world_path))?;

    let plans = fanout::plan_instances(m, n, occupied_displays, |i| {
        output
            .join(instance_dir_name(i))
            .to_string_lossy()
            .into_owned()
    })?;

    // rewrite everything up front so a bad template fails before any copy
    let worlds = plans
        .iter()
        .map(|p| {
            fanout::rewrite_port(&world_text, p.port).map_err(|source| FanoutError::Rewrite {
                instance_id: p.instance_id,
                source,
            })
        })
        .collect::<Result<Vec<_>, _>>()?;

    fs::create_dir_all(&output).map_err(io_err(&output))?;
    for (plan, world) in plans.iter().zip(&worlds) {
        materialize(&template, &m.world_file, Path::new(&plan.workdir), world)?;
    }
    write_plan(&output, &plans)?;
    Ok(plans)
}

/// Copies `template` to `workdir` and writes `world` over its world file.
pub fn materialize(
    template: &Path,
    world_file: &str,
    workdir: &Path,
    world: &str,
) -> Result<(), FanoutError> {
    if workdir.exists() {
        fs::remove_dir_all(workdir).map_err(io_err(workdir))?;
    }
    copy_tree(template, workdir)?;
    let target = workdir.join(world_file);
    fs::write(&target, world).map_err(io_err(&target))
}

fn copy_tree(from: &Path, to: &Path) -> Result<(), FanoutError> {
    fs::create_dir_all(to).map_err(io_err(to))?;
    for entry in fs::read_dir(from).map_err(io_err(from))? {
        let entry = entry.map_err(io_err(from))?;
        let src = entry.path();
        let dst = to.join(entry.file_name());
        if src.is_dir() {
            copy_tree(&src, &dst)?;
        } else {
            fs::copy(&src, &dst).map_err(io_err(&src))?;
        }
    }
    Ok(())
}

pub fn write_plan(output_dir: &Path, plans: &[InstancePlan]) -> Result<(), FanoutError> {
    let path = output_dir.join(layout::PLAN);
    let mut json = serde_json::to_string_pretty(plans).expect("plans serialize");
    json.push('\n');
    fs::write(&path, json).map_err(io_err(&path))
}

pub fn read_plan(output_dir: &Path) -> Result<Vec<InstancePlan>, FanoutError> {
    let path = output_dir.join(layout::PLAN);
    let text = fs::read_to_string(&path).map_err(io_err(&path))?;
    serde_json::from_str(&text).map_err(|e| FanoutError::Io {
        path,
        source: io::Error::new(io::ErrorKind::InvalidData, e),
    })
}
