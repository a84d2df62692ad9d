#![allow(clippy::neg_cmp_op_on_partial_ord)]
//! Config-driven experiment runner for the `vortexlab` library.

pub mod config;
pub mod experiments;
pub mod selftest;

use std::fs;
use std::path::Path;

use config::RunConfig;
use experiments::{run_experiment, Status};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub const EXIT_OK: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
pub const EXIT_STALLED: i32 = 2;

/// Worker threads from `VORTEXLAB_THREADS` (unset or 0: all cores).
pub fn threads_from_env() -> Result<usize, String> {
    match std::env::var("VORTEXLAB_THREADS") {
        Err(_) => Ok(0),
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .map_err(|_| format!("VORTEXLAB_THREADS = `{v}` is not a nonnegative integer")),
    }
}

/// Full report text for a finished run and its exit code.
pub fn render(cfg: &RunConfig, threads: usize) -> (String, Vec<(String, String)>, i32) {
    let mut out = format!("vortexlab {VERSION}\n[config]\n{}[report]\n", cfg.echo());
    match run_experiment(cfg, threads) {
        Ok(o) => {
            out.push_str(&o.report.render());
            let code = match &o.status {
                Status::Ok => {
                    out.push_str("status = ok\n");
                    EXIT_OK
                }
                Status::Stalled(m) => {
                    out.push_str(&format!("status = stalled\nmessage = {m}\n"));
                    EXIT_STALLED
                }
                Status::Violated(m) => {
                    out.push_str(&format!("status = failed\nmessage = {m}\n"));
                    EXIT_ERROR
                }
            };
            (out, o.artifacts, code)
        }
        Err(e) => {
            out.push_str(&format!("status = error\nmessage = {e}\n"));
            (out, Vec::new(), EXIT_ERROR)
        }
    }
}

/// `run <config>`: write the resolved config, artifacts and report into the
/// output directory and print the report.
pub fn run_file(path: &Path) -> i32 {
    let text = match fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: cannot read {}: {e}", path.display());
            return EXIT_ERROR;
        }
    };
    let cfg = match RunConfig::parse(&text) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_ERROR;
        }
    };
    let threads = match threads_from_env() {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_ERROR;
        }
    };
    let (report, artifacts, code) = render(&cfg, threads);
    print!("{report}");
    if code == EXIT_ERROR {
        if let Some(line) = report.lines().find(|l| l.starts_with("message = ")) {
            eprintln!("error: {}", &line["message = ".len()..]);
        }
    }
    let dir = &cfg.run.output;
    let written = fs::create_dir_all(dir).and_then(|_| {
        fs::write(dir.join("resolved.toml"), cfg.echo())?;
        for (name, body) in &artifacts {
            fs::write(dir.join(name), body)?;
        }
        fs::write(dir.join("report.txt"), &report)
    });
    if let Err(e) = written {
        eprintln!("error: cannot write to {}: {e}", dir.display());
        return EXIT_ERROR;
    }
    code
}
