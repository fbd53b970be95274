mod common;

use std::fs;
use std::os::unix::fs::PermissionsExt;
use std::path::Path;
use std::process::{Command, Output, Stdio};

use common::{desk_campaign, BIN};

fn simcampaign(args: &[&str], envs: &[(&str, &Path)]) -> Output {
    let mut cmd = Command::new(BIN);
    cmd.args(args)
        .stdin(Stdio::null())
        .env_remove("SIMCAMPAIGN_OUTPUT");
    for (k, v) in envs {
        cmd.env(k, v);
    }
    cmd.output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn write_manifest(dir: &Path, body: &str) -> String {
    let path = dir.join("manifest.json");
    fs::write(&path, body).unwrap();
    path.to_string_lossy().into_owned()
}

const REFERENCE: &str = r#"{
  "campaign_name": "highway",
  "template_dir": "template",
  "world_file": "world.wbt",
  "total_runs": 48,
  "output_dir": "out"
}"#;

#[test]
fn usage_errors_exit_64() {
    assert_eq!(code(&simcampaign(&["frobnicate"], &[])), 64);
    assert_eq!(code(&simcampaign(&[], &[])), 64);
    assert_eq!(code(&simcampaign(&["plan"], &[])), 64);
    assert_eq!(
        code(&simcampaign(&["plan", "--manifest", "m", "--bogus"], &[])),
        64
    );
}

#[test]
fn help_and_version_exit_0() {
    let help = simcampaign(&["--help"], &[]);
    assert_eq!(code(&help), 0);
    for verb in [
        "plan",
        "fanout",
        "script",
        "run-local",
        "submit",
        "status",
        "collect",
        "report",
        "stub",
    ] {
        assert!(stdout(&help).contains(verb), "{verb} missing from help");
    }
    assert_eq!(code(&simcampaign(&["--version"], &[])), 0);
}

#[test]
fn invalid_manifest_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let m = write_manifest(dir.path(), r#"{"campaign_name": "x"}"#);
    let o = simcampaign(&["plan", "--manifest", &m], &[]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("template_dir"));

    let m = write_manifest(
        dir.path(),
        &REFERENCE.replace("\"out\"", "\"out\", \"port_stride\": 0"),
    );
    assert_eq!(code(&simcampaign(&["plan", "--manifest", &m], &[])), 1);

    let missing = dir.path().join("absent.json");
    let missing = missing.to_string_lossy();
    assert_eq!(
        code(&simcampaign(&["plan", "--manifest", &missing], &[])),
        1
    );
}

#[test]
fn fanout_checks_template_exists() {
    let dir = tempfile::tempdir().unwrap();
    let m = write_manifest(dir.path(), REFERENCE);
    // plan is pure and does not need the template
    assert_eq!(code(&simcampaign(&["plan", "--manifest", &m], &[])), 0);
    let o = simcampaign(&["fanout", "--manifest", &m], &[]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("template_dir"));
}

#[test]
fn plan_lists_every_assignment() {
    let dir = tempfile::tempdir().unwrap();
    let m = write_manifest(dir.path(), REFERENCE);
    let o = simcampaign(&["plan", "--manifest", &m], &[]);
    assert_eq!(code(&o), 0);
    let text = stdout(&o);
    let rows: Vec<Vec<u32>> = text
        .lines()
        .skip(2)
        .map(|l| l.split(' ').map(|x| x.parse().unwrap()).collect())
        .collect();
    assert_eq!(rows.len(), 48);
    assert!(text.starts_with("campaign highway: 48 instances, 1 job(s) of 6 node(s) x 8 slot(s)\n"));
    for (i, r) in rows.iter().enumerate() {
        let i = i as u32;
        assert_eq!(r, &[i, 0, i % 6, i / 6]);
    }
}

#[test]
fn submit_passes_job_id_through() {
    let dir = tempfile::tempdir().unwrap();
    let (m, _) = desk_campaign(dir.path(), 19_100);
    let m = m.to_string_lossy().into_owned();

    let qsub = dir.path().join("fake-qsub");
    fs::write(
        &qsub,
        "#!/bin/sh\n[ -f \"$1\" ] || exit 9\nprintf '4242.pbs-server\\n'\n",
    )
    .unwrap();
    fs::set_permissions(&qsub, fs::Permissions::from_mode(0o755)).unwrap();
    let qsub_env = [("SIMCAMPAIGN_QSUB", qsub.as_path())];

    // no job script yet
    assert_eq!(
        code(&simcampaign(&["submit", "--manifest", &m], &qsub_env)),
        2
    );

    assert_eq!(code(&simcampaign(&["fanout", "--manifest", &m], &[])), 0);
    assert_eq!(code(&simcampaign(&["script", "--manifest", &m], &[])), 0);
    let o = simcampaign(&["submit", "--manifest", &m], &qsub_env);
    assert_eq!(code(&o), 0);
    assert_eq!(stdout(&o), "4242.pbs-server\n");

    let failing = [("SIMCAMPAIGN_QSUB", Path::new("/bin/false"))];
    assert_eq!(
        code(&simcampaign(&["submit", "--manifest", &m], &failing)),
        2
    );
}

#[test]
fn verbs_compose_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let (m, manifest) = desk_campaign(dir.path(), 19_200);
    let m = m.to_string_lossy().into_owned();
    let out = Path::new(&manifest.output_dir);

    for verb in ["plan", "fanout", "script"] {
        assert_eq!(
            code(&simcampaign(&[verb, "--manifest", &m], &[])),
            0,
            "{verb}"
        );
    }
    assert!(out.join("job.pbs").is_file());
    assert_eq!(
        fs::read_to_string(out.join("commands.txt"))
            .unwrap()
            .lines()
            .count(),
        12
    );

    let o = simcampaign(&["status", "--manifest", &m], &[]);
    assert!(stdout(&o).starts_with("pending 12\n"));

    assert_eq!(code(&simcampaign(&["run-local", "--manifest", &m], &[])), 0);
    let o = simcampaign(&["status", "--manifest", &m], &[]);
    assert_eq!(
        stdout(&o),
        "pending 0\nrunning 0\nsucceeded 12\nfailed 0\nkilled 0\n"
    );

    // existing records need --force when stdin cannot confirm
    assert_eq!(code(&simcampaign(&["run-local", "--manifest", &m], &[])), 1);

    assert_eq!(code(&simcampaign(&["collect", "--manifest", &m], &[])), 0);
    let merged = fs::read_to_string(out.join("merged.csv")).unwrap();
    assert_eq!(merged.lines().count(), 1 + 12 * 10);
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["completion_rate"], 1.0);

    let o = simcampaign(&["report", "--manifest", &m, "--table"], &[]);
    assert_eq!(code(&o), 0);
    assert!(stdout(&o).contains("speedup: "));
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("evaluation.json")).unwrap()).unwrap();
    assert_eq!(report["campaign"]["runs_included"], 12);
    assert_eq!(report["deltas"]["walltime"], -33.47);

    // a campaign compared against itself has zero deltas
    let s = out.join("summary.json");
    let s = s.to_string_lossy();
    let o = simcampaign(
        &["report", "--manifest", &m, "--serial", &s, "--parallel", &s],
        &[],
    );
    assert_eq!(code(&o), 0);
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("evaluation.json")).unwrap()).unwrap();
    assert_eq!(report["deltas"]["walltime"], 0.0);
    assert_eq!(
        code(&simcampaign(
            &["report", "--manifest", &m, "--serial", &s],
            &[]
        )),
        64
    );
}

#[test]
fn output_override_and_failing_runs() {
    let dir = tempfile::tempdir().unwrap();
    let (m, _) = desk_campaign(dir.path(), 19_300);
    let body = fs::read_to_string(&m)
        .unwrap()
        .replace("--duration 2", "--duration 0.2 --fail-mode crash_at_start");
    fs::write(&m, body).unwrap();
    let m = m.to_string_lossy().into_owned();
    let elsewhere = dir.path().join("elsewhere");

    let o = simcampaign(
        &["run-local", "--manifest", &m],
        &[("SIMCAMPAIGN_OUTPUT", &elsewhere)],
    );
    assert_eq!(code(&o), 2);
    assert!(elsewhere.join("records.jsonl").is_file());
    assert!(!dir.path().join("out").exists());

    let o = simcampaign(
        &["status", "--manifest", &m],
        &[("SIMCAMPAIGN_OUTPUT", &elsewhere)],
    );
    assert_eq!(
        stdout(&o),
        "pending 0\nrunning 0\nsucceeded 0\nfailed 12\nkilled 0\n"
    );
}

#[test]
fn stub_without_environment_is_a_usage_error() {
    let o = Command::new(BIN)
        .args(["stub", "--duration", "0.1"])
        .env_remove("SIM_OUTPUT")
        .output()
        .unwrap();
    assert_eq!(code(&o), 2);
}
