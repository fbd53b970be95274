//! Stand-in simulator.
//!
//! Behaves like one traffic-simulation instance as far as the pipeline can
//! observe: it listens on its TraCI port (a second listener on the same port
//! fails), runs for a fixed duration, then writes a small CSV dataset.

use std::fs;
use std::io;
use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::time::Duration;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::{env, layout, now_ms};

/// Exit code for a port that is already bound.
pub const EXIT_BIND_FAILURE: i32 = 98;
pub const EXIT_CRASH: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_IO: i32 = 3;

pub const CSV_HEADER: &str = "run_id,step,value";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, clap::ValueEnum)]
#[value(rename_all = "snake_case")]
pub enum FailMode {
    #[default]
    None,
    /// Run without listening on the port.
    SkipBind,
    /// Exit 1 before binding.
    CrashAtStart,
}

#[derive(Debug, Clone)]
pub struct StubConfig {
    pub port: Option<u16>,
    pub output: PathBuf,
    pub heartbeat: PathBuf,
    pub duration_s: f64,
    pub rows: u32,
    pub fail_mode: FailMode,
    pub seed: u64,
}

impl StubConfig {
    /// Port and output path from `SIM_PORT`/`SIM_OUTPUT`, heartbeat in the
    /// working directory.
    pub fn from_env(
        duration_s: f64,
        rows: u32,
        fail_mode: FailMode,
        seed: u64,
    ) -> Result<Self, String> {
        let port = match std::env::var(env::SIM_PORT) {
            Ok(v) => Some(
                v.parse::<u16>()
                    .map_err(|_| format!("{} is not a port: {v:?}", env::SIM_PORT))?,
            ),
            Err(_) => None,
        };
        let output = std::env::var_os(env::SIM_OUTPUT)
            .map(PathBuf::from)
            .ok_or_else(|| format!("{} is not set", env::SIM_OUTPUT))?;
        Ok(StubConfig {
            port,
            output,
            heartbeat: PathBuf::from(layout::HEARTBEAT),
            duration_s,
            rows,
            fail_mode,
            seed,
        })
    }
}

/// The CSV dataset for `seed`: a header and `rows` lines of
/// `run_id,step,value`.
pub fn dataset(seed: u64, rows: u32) -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut s = String::with_capacity(32 * rows as usize + 32);
    s.push_str(CSV_HEADER);
    s.push('\n');
    for step in 0..rows {
        let value: f64 = rng.gen();
        s.push_str(&format!("{seed},{step},{value:.6}\n"));
    }
    s
}

/// Start and (once finished) end timestamps, in epoch milliseconds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Heartbeat {
    pub started_at: u64,
    pub ended_at: Option<u64>,
}

impl Heartbeat {
    fn render(&self) -> String {
        match self.ended_at {
            Some(end) => format!("started_at={}\nended_at={end}\n", self.started_at),
            None => format!("started_at={}\n", self.started_at),
        }
    }

    pub fn parse(text: &str) -> Option<Heartbeat> {
        let mut started_at = None;
        let mut ended_at = None;
        for line in text.lines() {
            match line.split_once('=') {
                Some(("started_at", v)) => started_at = v.trim().parse().ok(),
                Some(("ended_at", v)) => ended_at = v.trim().parse().ok(),
                _ => {}
            }
        }
        Some(Heartbeat {
            started_at: started_at?,
            ended_at,
        })
    }

    pub fn read(path: &Path) -> io::Result<Option<Heartbeat>> {
        Ok(Heartbeat::parse(&fs::read_to_string(path)?))
    }
}

/// Runs the stub and returns its process exit code.
pub fn stub_main(cfg: &StubConfig) -> i32 {
    if !cfg.duration_s.is_finite() || cfg.duration_s <= 0.0 {
        eprintln!("stub: --duration must be a positive number of seconds");
        return EXIT_USAGE;
    }
    if cfg.rows == 0 {
        eprintln!("stub: --rows must be at least 1");
        return EXIT_USAGE;
    }
    // a stale dataset must not outlive a failed run
    match fs::remove_file(&cfg.output) {
        Ok(()) => {}
        Err(e) if e.kind() == io::ErrorKind::NotFound => {}
        Err(e) => {
            eprintln!("stub: cannot clear {}: {e}", cfg.output.display());
            return EXIT_IO;
        }
    }

    if cfg.fail_mode == FailMode::CrashAtStart {
        eprintln!("stub: crashing at start as requested");
        return EXIT_CRASH;
    }

    let _listener = match cfg.fail_mode {
        FailMode::SkipBind => None,
        _ => {
            let Some(port) = cfg.port else {
                eprintln!("stub: {} is not set", env::SIM_PORT);
                return EXIT_USAGE;
            };
            match TcpListener::bind(("127.0.0.1", port)) {
                Ok(l) => Some(l),
                Err(e) => {
                    eprintln!("stub: could not bind TraCI port {port}: {e}");
                    return EXIT_BIND_FAILURE;
                }
            }
        }
    };

    let mut beat = Heartbeat {
        started_at: now_ms(),
        ended_at: None,
    };
    if let Err(e) = fs::write(&cfg.heartbeat, beat.render()) {
        eprintln!("stub: cannot write {}: {e}", cfg.heartbeat.display());
        return EXIT_IO;
    }

    std::thread::sleep(Duration::from_secs_f64(cfg.duration_s));

    if let Err(e) = fs::write(&cfg.output, dataset(cfg.seed, cfg.rows)) {
        eprintln!("stub: cannot write {}: {e}", cfg.output.display());
        return EXIT_IO;
    }
    beat.ended_at = Some(now_ms());
    if let Err(e) = fs::write(&cfg.heartbeat, beat.render()) {
        eprintln!("stub: cannot write {}: {e}", cfg.heartbeat.display());
        return EXIT_IO;
    }
    0
}

#[cfg(test)]
mod tests {
    use super::*;

    fn config(dir: &Path, port: Option<u16>, duration_s: f64) -> StubConfig {
        StubConfig {
            port,
            output: dir.join("out.csv"),
            heartbeat: dir.join("heartbeat"),
            duration_s,
            rows: 10,
            fail_mode: FailMode::None,
            seed: 1,
        }
    }

    #[test]
    fn dataset_is_deterministic() {
        let a = dataset(1, 10);
        assert_eq!(a, dataset(1, 10));
        assert_ne!(a, dataset(2, 10));
        let lines: Vec<&str> = a.lines().collect();
        assert_eq!(lines.len(), 11);
        assert_eq!(lines[0], CSV_HEADER);
        assert!(lines[1].starts_with("1,0,0."));
    }

    #[test]
    fn successful_run_writes_rows_and_heartbeat() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = config(dir.path(), Some(0), 0.2);
        let t0 = std::time::Instant::now();
        assert_eq!(stub_main(&cfg), 0);
        let elapsed = t0.elapsed().as_secs_f64();
        assert!((0.2..1.2).contains(&elapsed), "{elapsed}");
        assert_eq!(fs::read_to_string(&cfg.output).unwrap(), dataset(1, 10));
        let beat = Heartbeat::read(&cfg.heartbeat).unwrap().unwrap();
        assert!(beat.ended_at.unwrap() >= beat.started_at + 200);
    }

    #[test]
    fn occupied_port_exits_98_without_output() {
        let dir = tempfile::tempdir().unwrap();
        let holder = TcpListener::bind("127.0.0.1:0").unwrap();
        let port = holder.local_addr().unwrap().port();
        fs::write(dir.path().join("out.csv"), "stale").unwrap();
        let cfg = config(dir.path(), Some(port), 0.1);
        assert_eq!(stub_main(&cfg), EXIT_BIND_FAILURE);
        assert!(!cfg.output.exists());
        assert!(!cfg.heartbeat.exists());
    }

    #[test]
    fn fail_modes() {
        let dir = tempfile::tempdir().unwrap();
        let holder = TcpListener::bind("127.0.0.1:0").unwrap();
        let port = holder.local_addr().unwrap().port();
        let mut cfg = config(dir.path(), Some(port), 0.05);
        cfg.fail_mode = FailMode::SkipBind;
        assert_eq!(stub_main(&cfg), 0);
        cfg.fail_mode = FailMode::CrashAtStart;
        assert_eq!(stub_main(&cfg), EXIT_CRASH);
        assert!(!cfg.output.exists());
    }

    #[test]
    fn rejects_bad_arguments() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = config(dir.path(), Some(0), 0.0);
        assert_eq!(stub_main(&cfg), EXIT_USAGE);
        cfg.duration_s = 0.1;
        cfg.rows = 0;
        assert_eq!(stub_main(&cfg), EXIT_USAGE);
        cfg.rows = 1;
        cfg.port = None;
        assert_eq!(stub_main(&cfg), EXIT_USAGE);
    }
}
