//! `simcampaign <verb> --manifest <path>` entry point.

use std::collections::BTreeSet;
use std::ffi::OsString;
use std::io::{BufRead, IsTerminal, Write};
use std::path::{Path, PathBuf};
use std::process::Command;

use anyhow::{anyhow, bail, Context};
use clap::{Args, Parser, Subcommand};
use simcampaign_core::manifest::describe;
use simcampaign_core::{plan_distribution, InstancePlan, Manifest};

use crate::collect::{self, read_summary};
use crate::localexec::{self, ExecOptions};
use crate::manifest::{load_manifest, validate};
use crate::records::{self, read_stream, records_path};
use crate::report::{self, Comparison, DeltaSource};
use crate::simstub::{self, FailMode, StubConfig};
use crate::{env, fanout, jobscript, layout};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INVALID: i32 = 1;
pub const EXIT_EXECUTION: i32 = 2;
pub const EXIT_USAGE: i32 = 64;

#[derive(Debug, Parser)]
#[command(
    name = "simcampaign",
    version,
    about = "Plan, fan out, run and evaluate simulation campaigns"
)]
struct Cli {
    #[command(subcommand)]
    verb: Verb,
}

#[derive(Debug, Args)]
struct ManifestArg {
    /// Campaign manifest (JSON)
    #[arg(long)]
    manifest: PathBuf,
}

#[derive(Debug, Subcommand)]
enum Verb {
    /// Print the job/node/slot assignment of every instance
    Plan(ManifestArg),
    /// Create the per-instance template copies and plan.json
    Fanout(ManifestArg),
    /// Write commands.txt and the PBS job-array script job.pbs
    Script(ManifestArg),
    /// Run the campaign on this machine
    RunLocal {
        #[command(flatten)]
        m: ManifestArg,
        /// Replace existing records without asking
        #[arg(long)]
        force: bool,
    },
    /// Hand job.pbs to the batch scheduler and print its job id
    Submit(ManifestArg),
    /// Count pending, running, succeeded, failed and killed instances
    Status(ManifestArg),
    /// Merge per-instance datasets into merged.csv and write summary.json
    Collect(ManifestArg),
    /// Write evaluation.json (throughput model, speedup, resource deltas)
    Report {
        #[command(flatten)]
        m: ManifestArg,
        /// Also print the throughput table
        #[arg(long)]
        table: bool,
        /// summary.json of a serial campaign to compare against --parallel
        #[arg(long, requires = "parallel")]
        serial: Option<PathBuf>,
        /// summary.json of a parallel campaign
        #[arg(long, requires = "serial")]
        parallel: Option<PathBuf>,
    },
    /// Built-in stand-in simulator (used by generated commands)
    Stub {
        /// Seconds to run before writing output
        #[arg(long, default_value_t = 1.0)]
        duration: f64,
        /// Data rows to write
        #[arg(long, default_value_t = 10)]
        rows: u32,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_enum, default_value_t = FailMode::None)]
        fail_mode: FailMode,
    },
}

enum Failure {
    Invalid(anyhow::Error),
    Execution(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Execution(e)
    }
}

fn invalid(e: impl Into<anyhow::Error>) -> Failure {
    Failure::Invalid(e.into())
}

type Outcome = Result<i32, Failure>;

/// Runs the CLI on `args` (including the program name) and returns the
/// process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => EXIT_OK,
                _ => EXIT_USAGE,
            };
        }
    };
    match dispatch(cli.verb) {
        Ok(code) => code,
        Err(Failure::Invalid(e)) => {
            eprintln!("error: {e:#}");
            EXIT_INVALID
        }
        Err(Failure::Execution(e)) => {
            eprintln!("error: {e:#}");
            EXIT_EXECUTION
        }
    }
}

fn dispatch(verb: Verb) -> Outcome {
    match verb {
        Verb::Plan(a) => plan(&load(&a.manifest, false)?),
        Verb::Fanout(a) => fanout_verb(&load(&a.manifest, true)?),
        Verb::Script(a) => script(&load(&a.manifest, false)?),
        Verb::RunLocal { m, force } => run_local(&load(&m.manifest, true)?, force),
        Verb::Submit(a) => submit(&load(&a.manifest, false)?),
        Verb::Status(a) => status(&load(&a.manifest, false)?),
        Verb::Collect(a) => collect_verb(&load(&a.manifest, false)?),
        Verb::Report {
            m,
            table,
            serial,
            parallel,
        } => report_verb(&load(&m.manifest, false)?, table, serial.zip(parallel)),
        Verb::Stub {
            duration,
            rows,
            seed,
            fail_mode,
        } => match StubConfig::from_env(duration, rows, fail_mode, seed) {
            Ok(cfg) => Ok(simstub::stub_main(&cfg)),
            Err(e) => {
                eprintln!("stub: {e}");
                Ok(simstub::EXIT_USAGE)
            }
        },
    }
}

/// Loads, applies `SIMCAMPAIGN_OUTPUT` and validates.
fn load(path: &Path, check_fs: bool) -> Result<Manifest, Failure> {
    let mut m = load_manifest(path).map_err(invalid)?;
    if let Some(out) = std::env::var_os(env::SIMCAMPAIGN_OUTPUT) {
        let out = std::path::absolute(PathBuf::from(out)).map_err(|e| invalid(anyhow!(e)))?;
        m.output_dir = out.to_string_lossy().into_owned();
    }
    let violations = validate(&m, check_fs);
    if !violations.is_empty() {
        return Err(invalid(anyhow!(
            "{} is invalid:\n{}",
            path.display(),
            describe(&violations).trim_end()
        )));
    }
    Ok(m)
}

fn output_dir(m: &Manifest) -> PathBuf {
    PathBuf::from(&m.output_dir)
}

fn plan(m: &Manifest) -> Outcome {
    let d = plan_distribution(m.total_runs, m.nodes, m.slots_per_node);
    let mut out = std::io::stdout().lock();
    let _ = writeln!(
        out,
        "campaign {}: {} instances, {} job(s) of {} node(s) x {} slot(s)",
        m.campaign_name,
        d.assignments.len(),
        d.jobs,
        m.nodes,
        m.slots_per_node
    );
    let _ = writeln!(out, "instance job node slot");
    for a in &d.assignments {
        let _ = writeln!(
            out,
            "{} {} {} {}",
            a.instance_id, a.job_index, a.node_index, a.slot_index
        );
    }
    Ok(EXIT_OK)
}

fn do_fanout(m: &Manifest) -> anyhow::Result<Vec<InstancePlan>> {
    fanout::fan_out(m, m.total_runs, &BTreeSet::new()).context("fan-out failed")
}

fn fanout_verb(m: &Manifest) -> Outcome {
    let plans = do_fanout(m)?;
    println!(
        "{} instance(s) under {} (ports {}..={}, displays {}..={})",
        plans.len(),
        m.output_dir,
        plans.iter().map(|p| p.port).min().unwrap_or(0),
        plans.iter().map(|p| p.port).max().unwrap_or(0),
        plans.first().map_or(0, |p| p.display),
        plans.last().map_or(0, |p| p.display),
    );
    Ok(EXIT_OK)
}

fn read_plans(m: &Manifest) -> anyhow::Result<Vec<InstancePlan>> {
    let plans = fanout::read_plan(&output_dir(m))
        .context("no usable plan.json; run `simcampaign fanout` first")?;
    if plans.len() != m.total_runs as usize {
        bail!(
            "plan.json lists {} instances but total_runs is {}; re-run `simcampaign fanout`",
            plans.len(),
            m.total_runs
        );
    }
    Ok(plans)
}

fn script(m: &Manifest) -> Outcome {
    let plans = read_plans(m)?;
    let files = jobscript::write_job_files(m, &plans).context("cannot write job files")?;
    println!("{}", files.script.display());
    println!("{}", files.commands.display());
    Ok(EXIT_OK)
}

fn confirm_replace(path: &Path) -> bool {
    let stdin = std::io::stdin();
    if !stdin.is_terminal() {
        return false;
    }
    eprint!(
        "{} already holds records; replace them? [y/N] ",
        path.display()
    );
    let _ = std::io::stderr().flush();
    let mut answer = String::new();
    if stdin.lock().read_line(&mut answer).is_err() {
        return false;
    }
    matches!(answer.trim(), "y" | "Y" | "yes")
}

fn run_local(m: &Manifest, force: bool) -> Outcome {
    let out = output_dir(m);
    let stream = records_path(&out);
    let has_records = std::fs::metadata(&stream).is_ok_and(|md| md.len() > 0);
    if has_records && !force && !confirm_replace(&stream) {
        return Err(invalid(anyhow!(
            "{} already holds records; pass --force to replace them",
            stream.display()
        )));
    }

    let plans = if out.join(layout::PLAN).exists() {
        read_plans(m)?
    } else {
        do_fanout(m)?
    };
    let dist = plan_distribution(m.total_runs, m.nodes, m.slots_per_node);
    let mut opts = ExecOptions::for_manifest(m);
    opts.path_prefix = std::env::current_exe()
        .ok()
        .and_then(|p| p.parent().map(Path::to_path_buf));
    let records =
        localexec::run_job_array_with(&dist, m, &plans, &opts).map_err(anyhow::Error::from)?;

    let ok = records
        .iter()
        .filter(|r| r.exit_status.is_success())
        .count();
    println!(
        "{} record(s), {} succeeded, {} not; records in {}",
        records.len(),
        ok,
        records.len() - ok,
        stream.display()
    );
    Ok(if ok == records.len() {
        EXIT_OK
    } else {
        EXIT_EXECUTION
    })
}

fn submit(m: &Manifest) -> Outcome {
    let script = output_dir(m).join(layout::JOB_SCRIPT);
    if !script.is_file() {
        bail_exec(format!(
            "{} not found; run `simcampaign script` first",
            script.display()
        ))?;
    }
    let qsub = std::env::var_os(env::SIMCAMPAIGN_QSUB).unwrap_or_else(|| OsString::from("qsub"));
    let output = Command::new(&qsub)
        .arg(&script)
        .current_dir(output_dir(m))
        .output()
        .with_context(|| format!("cannot run {}", qsub.to_string_lossy()))?;
    std::io::stderr().write_all(&output.stderr).ok();
    if !output.status.success() {
        bail_exec(format!(
            "{} exited with {}",
            qsub.to_string_lossy(),
            output.status
        ))?;
    }
    std::io::stdout().write_all(&output.stdout).ok();
    Ok(EXIT_OK)
}

fn bail_exec(msg: String) -> Result<(), Failure> {
    Err(Failure::Execution(anyhow!(msg)))
}

fn status(m: &Manifest) -> Outcome {
    let report = records::status(&output_dir(m), m.total_runs);
    for p in &report.problems {
        if p.line == 0 {
            eprintln!("warning: {}", p.message);
        } else {
            eprintln!("warning: records line {}: {}", p.line, p.message);
        }
    }
    let s = report.summary;
    println!(
        "pending {}\nrunning {}\nsucceeded {}\nfailed {}\nkilled {}",
        s.pending, s.running, s.succeeded, s.failed, s.killed
    );
    Ok(EXIT_OK)
}

fn collect_verb(m: &Manifest) -> Outcome {
    let out = output_dir(m);
    let plans = read_plans(m)?;
    let stream = read_stream(&records_path(&out));
    for p in &stream.problems {
        eprintln!("warning: records: {}", p.message);
    }
    let records = stream.finished();
    let collected = collect::collect(&records, &collect::workdirs(&plans), &out)
        .context("cannot write merged dataset")?;
    for e in &collected.integrity_errors {
        eprintln!("warning: instance {}: {}", e.instance_id, e.message);
    }
    let summary = collect::summarize(&records, &collected);
    let path = collect::write_summary(&out, &summary).context("cannot write summary")?;
    println!(
        "{} row(s) from {} run(s) -> {}",
        collected.dataset.rows,
        collected.dataset.runs_included,
        collected.dataset.output_path.display()
    );
    if let Some(rate) = summary.completion_rate {
        println!("completion rate {rate:.4}");
    }
    println!("{}", path.display());
    Ok(EXIT_OK)
}

fn comparison_from(serial: &Path, parallel: &Path) -> Result<Comparison, Failure> {
    let resources = |p: &Path| -> Result<_, Failure> {
        let s = read_summary(p)
            .with_context(|| format!("cannot read {}", p.display()))
            .map_err(invalid)?;
        s.resources.ok_or_else(|| {
            invalid(anyhow!(
                "{} has no resource accounting to compare",
                p.display()
            ))
        })
    };
    Ok(Comparison {
        serial: resources(serial)?,
        parallel: resources(parallel)?,
        source: DeltaSource::Summaries {
            serial: serial.to_path_buf(),
            parallel: parallel.to_path_buf(),
        },
    })
}

fn report_verb(m: &Manifest, table: bool, summaries: Option<(PathBuf, PathBuf)>) -> Outcome {
    let out = output_dir(m);
    let comparison = match summaries {
        Some((s, p)) => comparison_from(&s, &p)?,
        None => Comparison::from_reference(&report::reference()),
    };
    let campaign = read_summary(&out.join(layout::SUMMARY)).ok();
    let r = report::build_report(m, &comparison, campaign).map_err(invalid)?;
    let path = report::write_report(&out, &r).context("cannot write evaluation")?;
    if table {
        print!("{}", report::render_table(&r.report));
    }
    println!("{}", path.display());
    Ok(EXIT_OK)
}
