//! Command-line driver: config loading, eps sweeps and deterministic output.
//!
//! Each invocation writes `manifest_<subcommand>.json` into the output
//! directory (tool version, config hash, seed, wall time, outputs, and the
//! error if any) and returns the process exit status:
//! 0 success, 2 config error, 3 numerical failure, 4 failed check.

pub mod config;
pub mod run;

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde_json::{json, Value};

pub use config::{load_config, parse_config, ConfigError, RunConfig, Violation, ViolationKind};
pub use run::{run, Command, Report, RunError};

/// Options shared by all subcommands.
#[derive(Debug, Clone)]
pub struct Invocation {
    pub config: PathBuf,
    /// Output directory; the config's `output`, else `out`, when absent.
    pub out: Option<PathBuf>,
    pub threads: Option<usize>,
    pub seed: Option<u64>,
    pub command: Command,
}

fn error_json(e: &RunError) -> Value {
    let violations: Vec<Value> = match e {
        RunError::Config(c) => c
            .violations()
            .iter()
            .map(|v| {
                let kind = match v.kind {
                    ViolationKind::Schema => "SchemaViolation",
                    ViolationKind::ResolutionRule => "ResolutionRuleViolation",
                };
                json!({"kind": kind, "path": v.path, "message": v.message})
            })
            .collect(),
        _ => Vec::new(),
    };
    json!({"kind": e.kind(), "message": e.to_string(), "violations": violations})
}

fn write_manifest(dir: &Path, name: &str, body: &Value) -> std::io::Result<()> {
    std::fs::create_dir_all(dir)?;
    let text = serde_json::to_string_pretty(body).expect("manifest serializes");
    std::fs::write(dir.join(format!("manifest_{name}.json")), text + "\n")
}

/// Runs one invocation end to end and returns the exit status.
pub fn execute(inv: &Invocation) -> i32 {
    let start = Instant::now();
    if let Some(n) = inv.threads {
        // a second call in the same process keeps the first pool
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global();
    }
    let loaded = load_config(&inv.config).map(|mut c| {
        if let Some(s) = inv.seed {
            c.seed = s;
        }
        c
    });
    let out = inv
        .out
        .clone()
        .or_else(|| loaded.as_ref().ok().and_then(|c| c.output.clone()))
        .unwrap_or_else(|| PathBuf::from("out"));
    let result = loaded.map_err(RunError::from).and_then(|cfg| {
        let report = run(&cfg, &inv.command, &out)?;
        Ok((cfg, report))
    });
    let mut body = json!({
        "tool": env!("CARGO_PKG_NAME"),
        "version": env!("CARGO_PKG_VERSION"),
        "subcommand": inv.command.name(),
        "config": inv.config.display().to_string(),
        "threads": rayon::current_num_threads(),
    });
    let code = match &result {
        Ok((cfg, report)) => {
            body["config_sha256"] = json!(cfg.sha256);
            body["seed"] = json!(cfg.seed);
            body["outputs"] = json!(report.outputs);
            for (k, v) in &report.details {
                body[k.as_str()] = v.clone();
            }
            match &report.failed_check {
                Some(which) => {
                    let e = RunError::Acceptance(which.clone());
                    eprintln!("error: {e}");
                    body["error"] = error_json(&e);
                    e.exit_code()
                }
                None => 0,
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            body["error"] = error_json(e);
            e.exit_code()
        }
    };
    body["status"] = json!(if code == 0 { "ok" } else { "failed" });
    body["exit_code"] = json!(code);
    body["wall_time_s"] = json!(start.elapsed().as_secs_f64());
    if let Err(e) = write_manifest(&out, inv.command.name(), &body) {
        eprintln!("error: cannot write manifest in {}: {e}", out.display());
        return if code == 0 { 1 } else { code };
    }
    code
}
