//! Runs a campaign's job array on the local machine.
//!
//! Jobs run strictly one after another. Within a job every instance gets a
//! child process (`/bin/sh -c <command>` in its own process group), limited
//! to `nodes * slots_per_node` live children overall and `slots_per_node`
//! per node index. A single supervisor polls the children, enforces the
//! walltime per instance and appends to the record stream.

use std::collections::{BTreeMap, VecDeque};
use std::ffi::OsString;
use std::fs::File;
use std::io;
use std::os::unix::process::CommandExt;
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::time::{Duration, Instant};

use simcampaign_core::scheduler::Assignment;
use simcampaign_core::{
    DistributionPlan, ExitStatus, InstancePlan, Manifest, RunRecord, StartMarker, StreamEntry,
};
use thiserror::Error;

use crate::records::{records_path, RecordWriter};
use crate::{env, layout, now_ms};

/// Exit code recorded when a command could not be spawned at all.
pub const SPAWN_FAILURE_CODE: i32 = -1;

#[derive(Debug, Error)]
pub enum ExecError {
    #[error("record stream {}: {source}", path.display())]
    Records { path: PathBuf, source: io::Error },
    #[error("distribution plan references instance {0}, which was never fanned out")]
    MissingInstance(u32),
}

#[derive(Debug, Clone)]
pub struct ExecOptions {
    pub records_path: PathBuf,
    /// Per-instance limit.
    pub walltime: Duration,
    /// Time between SIGTERM and SIGKILL.
    pub grace: Duration,
    pub poll_interval: Duration,
    /// Prepended to `PATH` for every child.
    pub path_prefix: Option<PathBuf>,
}

impl ExecOptions {
    pub fn for_manifest(m: &Manifest) -> Self {
        ExecOptions {
            records_path: records_path(Path::new(&m.output_dir)),
            walltime: Duration::from_secs(m.walltime_seconds()),
            grace: Duration::from_secs(5),
            poll_interval: Duration::from_millis(10),
            path_prefix: None,
        }
    }
}

struct Supervised {
    assignment: Assignment,
    pid: libc::pid_t,
    started_at: u64,
    started: Instant,
    term_sent: Option<Instant>,
    kill_sent: bool,
}

struct Reaped {
    status: libc::c_int,
    usage: libc::rusage,
}

impl Supervised {
    fn try_reap(&self) -> io::Result<Option<Reaped>> {
        let mut status: libc::c_int = 0;
        // SAFETY: rusage is plain old data; wait4 only writes into it.
        let mut usage: libc::rusage = unsafe { std::mem::zeroed() };
        // SAFETY: valid out-pointers; pid is a child of this process.
        let r = unsafe { libc::wait4(self.pid, &mut status, libc::WNOHANG, &mut usage) };
        match r {
            0 => Ok(None),
            r if r == self.pid => Ok(Some(Reaped { status, usage })),
            _ => Err(io::Error::last_os_error()),
        }
    }

    fn signal_group(&self, sig: libc::c_int) {
        // SAFETY: negative pid addresses the process group the child leads.
        unsafe {
            libc::kill(-self.pid, sig);
        }
    }

    /// Sends SIGTERM once the walltime passes and SIGKILL after the grace
    /// period.
    fn enforce(&mut self, opts: &ExecOptions) {
        match self.term_sent {
            None if self.started.elapsed() >= opts.walltime => {
                self.signal_group(libc::SIGTERM);
                self.term_sent = Some(Instant::now());
            }
            Some(at) if !self.kill_sent && at.elapsed() >= opts.grace => {
                self.signal_group(libc::SIGKILL);
                self.kill_sent = true;
            }
            _ => {}
        }
    }

    fn into_record(self, reaped: io::Result<Reaped>) -> RunRecord {
        let ended_at = now_ms().max(self.started_at);
        let (exit_status, cpu_time_s, peak_ram_mb) = match reaped {
            Ok(Reaped { status, usage }) => {
                let exit = if self.term_sent.is_some() {
                    ExitStatus::KilledWalltime
                } else if libc::WIFEXITED(status) {
                    match libc::WEXITSTATUS(status) {
                        0 => ExitStatus::Succeeded,
                        code => ExitStatus::Failed(code),
                    }
                } else if libc::WIFSIGNALED(status) {
                    ExitStatus::Failed(-libc::WTERMSIG(status))
                } else {
                    ExitStatus::Failed(SPAWN_FAILURE_CODE)
                };
                (exit, Some(cpu_seconds(&usage)), Some(peak_rss_mb(&usage)))
            }
            Err(_) => (ExitStatus::Failed(SPAWN_FAILURE_CODE), None, None),
        };
        if exit_status == ExitStatus::KilledWalltime {
            // stragglers the leader left behind
            self.signal_group(libc::SIGKILL);
        }
        record(
            &self.assignment,
            self.started_at,
            ended_at,
            exit_status,
            cpu_time_s,
            peak_ram_mb,
        )
    }
}

fn cpu_seconds(u: &libc::rusage) -> f64 {
    let tv = |t: &libc::timeval| t.tv_sec as f64 + t.tv_usec as f64 / 1e6;
    tv(&u.ru_utime) + tv(&u.ru_stime)
}

fn peak_rss_mb(u: &libc::rusage) -> f64 {
    // kilobytes on Linux and the BSDs, bytes on macOS
    if cfg!(target_os = "macos") {
        u.ru_maxrss as f64 / (1024.0 * 1024.0)
    } else {
        u.ru_maxrss as f64 / 1024.0
    }
}

fn record(
    a: &Assignment,
    started_at: u64,
    ended_at: u64,
    exit_status: ExitStatus,
    cpu_time_s: Option<f64>,
    peak_ram_mb: Option<f64>,
) -> RunRecord {
    RunRecord {
        instance_id: a.instance_id,
        job_index: a.job_index,
        node_index: a.node_index,
        slot_index: a.slot_index,
        started_at,
        ended_at,
        exit_status,
        walltime_s: (ended_at - started_at) as f64 / 1000.0,
        cpu_time_s,
        peak_ram_mb,
    }
}

fn spawn(p: &InstancePlan, opts: &ExecOptions) -> io::Result<libc::pid_t> {
    let workdir = Path::new(&p.workdir);
    let mut cmd = Command::new("/bin/sh");
    cmd.arg("-c")
        .arg(&p.command)
        .current_dir(workdir)
        .env(env::SIM_PORT, p.port.to_string())
        .env(env::SIM_DISPLAY, p.display.to_string())
        .env(env::SIM_OUTPUT, workdir.join(layout::INSTANCE_OUTPUT))
        .stdin(Stdio::null())
        .stdout(File::create(workdir.join(layout::STDOUT_LOG))?)
        .stderr(File::create(workdir.join(layout::STDERR_LOG))?)
        .process_group(0);
    if let Some(prefix) = &opts.path_prefix {
        let mut path = OsString::from(prefix);
        if let Some(old) = std::env::var_os("PATH") {
            path.push(":");
            path.push(old);
        }
        cmd.env("PATH", path);
    }
    // the child is reaped through wait4, not through std's handle
    let child = cmd.spawn()?;
    Ok(child.id() as libc::pid_t)
}

/// Runs every job of `plan` with options derived from `m`.
pub fn run_job_array(
    plan: &DistributionPlan,
    m: &Manifest,
    instances: &[InstancePlan],
) -> Result<Vec<RunRecord>, ExecError> {
    run_job_array_with(plan, m, instances, &ExecOptions::for_manifest(m))
}

pub fn run_job_array_with(
    plan: &DistributionPlan,
    m: &Manifest,
    instances: &[InstancePlan],
    opts: &ExecOptions,
) -> Result<Vec<RunRecord>, ExecError> {
    let by_id: BTreeMap<u32, &InstancePlan> =
        instances.iter().map(|p| (p.instance_id, p)).collect();
    if let Some(a) = plan
        .assignments
        .iter()
        .find(|a| !by_id.contains_key(&a.instance_id))
    {
        return Err(ExecError::MissingInstance(a.instance_id));
    }

    let stream_err = |source| ExecError::Records {
        path: opts.records_path.clone(),
        source,
    };
    let mut writer = RecordWriter::create(&opts.records_path).map_err(stream_err)?;
    let mut done = Vec::with_capacity(plan.assignments.len());
    let capacity = m.instances_per_job().max(1) as usize;
    let slots = m.slots_per_node.max(1);

    for job in 0..plan.jobs {
        let mut pending: VecDeque<&Assignment> = plan.job(job).collect();
        let mut running: Vec<Supervised> = Vec::new();
        let mut node_load: BTreeMap<u32, u32> = BTreeMap::new();

        while !pending.is_empty() || !running.is_empty() {
            while running.len() < capacity {
                let Some(pos) = pending
                    .iter()
                    .position(|a| node_load.get(&a.node_index).copied().unwrap_or(0) < slots)
                else {
                    break;
                };
                let a = pending.remove(pos).expect("position is in range");
                let inst = by_id[&a.instance_id];
                let started_at = now_ms();
                match spawn(inst, opts) {
                    Ok(pid) => {
                        writer
                            .append(&StreamEntry::Started(StartMarker {
                                instance_id: a.instance_id,
                                job_index: a.job_index,
                                node_index: a.node_index,
                                slot_index: a.slot_index,
                                started_at,
                            }))
                            .map_err(stream_err)?;
                        *node_load.entry(a.node_index).or_default() += 1;
                        running.push(Supervised {
                            assignment: *a,
                            pid,
                            started_at,
                            started: Instant::now(),
                            term_sent: None,
                            kill_sent: false,
                        });
                    }
                    Err(_) => {
                        let r = record(
                            a,
                            started_at,
                            now_ms().max(started_at),
                            ExitStatus::Failed(SPAWN_FAILURE_CODE),
                            None,
                            None,
                        );
                        writer
                            .append(&StreamEntry::Finished(r.clone()))
                            .map_err(stream_err)?;
                        done.push(r);
                    }
                }
            }

            let mut i = 0;
            while i < running.len() {
                let reaped = match running[i].try_reap() {
                    Ok(None) => None,
                    Ok(Some(r)) => Some(Ok(r)),
                    Err(e) => Some(Err(e)),
                };
                match reaped {
                    Some(outcome) => {
                        let child = running.swap_remove(i);
                        if let Some(load) = node_load.get_mut(&child.assignment.node_index) {
                            *load -= 1;
                        }
                        let r = child.into_record(outcome);
                        writer
                            .append(&StreamEntry::Finished(r.clone()))
                            .map_err(stream_err)?;
                        done.push(r);
                    }
                    None => {
                        running[i].enforce(opts);
                        i += 1;
                    }
                }
            }
            if !running.is_empty() {
                std::thread::sleep(opts.poll_interval);
            }
        }
    }

    done.sort_by_key(|r| r.instance_id);
    Ok(done)
}
