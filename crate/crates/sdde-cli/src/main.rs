//! `sdde`: one binary, one subcommand per experiment kind, plus `resume`.
//!
//! Exit codes: 0 on success, 2 for configuration problems (unreadable or
//! schema-invalid config, mismatched subcommand, bad flags), 1 for runtime
//! failures (blow-up, degenerate fits, failed checks). Runtime failures
//! leave a `failure.json` next to the other artifacts.

mod config;
mod experiments;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use config::ExperimentConfig;
use experiments::RunContext;

#[derive(Parser)]
#[command(name = "sdde", version, about = "Spectral solver harness for delay equations")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Integrate one trajectory and record diagnostics.
    Simulate(RunArgs),
    /// Co-integrate two nearby trajectories and fit their separation law.
    Pair(RunArgs),
    /// Run a family of initial conditions into the absorbing ball.
    Dissipativity(RunArgs),
    /// Sample the attractor and estimate its box-counting dimension.
    Dimension(RunArgs),
    /// Run the built-in numerical check suite.
    Validate(RunArgs),
    /// Continue a finished run from its checkpoint.
    Resume {
        /// Artifact directory of the run to continue.
        #[arg(long)]
        from: PathBuf,
        /// Additional time to integrate; 0 is a no-op.
        #[arg(long = "additional-t", allow_negative_numbers = true)]
        additional_t: f64,
        /// Output directory (default: `<from>-resumed`).
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct RunArgs {
    /// Path to the JSON experiment config.
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides the config and SDDE_OUT_DIR.
    #[arg(long)]
    out: Option<PathBuf>,
    /// RNG seed; overrides the config.
    #[arg(long)]
    seed: Option<u64>,
}

/// Written as `manifest.json` into every artifact directory. `config` is
/// the exact effective config (seed override applied), so a directory is
/// always reproducible from its manifest alone.
#[derive(Serialize, Deserialize)]
struct Manifest {
    command: String,
    version: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
    wall_time_s: f64,
    status: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<String>,
    artifacts: Vec<String>,
    config: ExperimentConfig,
    #[serde(skip_serializing_if = "Option::is_none")]
    resumed_from: Option<String>,
    #[serde(rename = "additional_T", skip_serializing_if = "Option::is_none")]
    additional_t: Option<f64>,
}

fn main() -> ExitCode {
    match Cli::parse().cmd {
        Cmd::Simulate(a) => run_kind("simulate", a),
        Cmd::Pair(a) => run_kind("pair", a),
        Cmd::Dissipativity(a) => run_kind("dissipativity", a),
        Cmd::Dimension(a) => run_kind("dimension", a),
        Cmd::Validate(a) => run_kind("validate", a),
        Cmd::Resume {
            from,
            additional_t,
            out,
        } => resume(&from, additional_t, out),
    }
}

const EXIT_RUNTIME: u8 = 1;
const EXIT_CONFIG: u8 = 2;

fn config_error(err: &anyhow::Error) -> ExitCode {
    eprintln!("config error: {err:#}");
    ExitCode::from(EXIT_CONFIG)
}

fn load_config(path: &Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading {}", path.display()))?;
    ExperimentConfig::from_json(&text).with_context(|| path.display().to_string())
}

fn resolve_out_dir(flag: Option<PathBuf>, cfg: &ExperimentConfig) -> PathBuf {
    flag.or_else(|| cfg.output.directory.clone().map(PathBuf::from))
        .or_else(|| std::env::var_os("SDDE_OUT_DIR").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("sdde-out"))
}

fn run_kind(kind: &str, args: RunArgs) -> ExitCode {
    let mut cfg = match load_config(&args.config) {
        Ok(cfg) => cfg,
        Err(e) => return config_error(&e),
    };
    if let Some(seed) = args.seed {
        cfg.experiment.set_seed(seed);
    }
    if cfg.experiment.kind() != kind {
        eprintln!(
            "config error: experiment.kind is {:?} but the subcommand is {kind:?}",
            cfg.experiment.kind()
        );
        return ExitCode::from(EXIT_CONFIG);
    }
    // The seed override may remove the reason validation failed, never add
    // one, but re-check to keep the invariant simple: what runs is valid.
    if let Err(e) = cfg.validate() {
        return config_error(&e);
    }
    let out = resolve_out_dir(args.out, &cfg);
    execute(kind, &cfg, &out, None, experiments::run_experiment)
}

fn resume(from: &Path, additional_t: f64, out: Option<PathBuf>) -> ExitCode {
    if !additional_t.is_finite() || additional_t < 0.0 {
        eprintln!("config error: --additional-t must be nonnegative, got {additional_t}");
        return ExitCode::from(EXIT_CONFIG);
    }
    if additional_t == 0.0 {
        println!("resume: additional time is 0, nothing to do");
        return ExitCode::SUCCESS;
    }
    let manifest_path = from.join("manifest.json");
    let manifest: Manifest = match std::fs::read_to_string(&manifest_path)
        .with_context(|| format!("reading {}", manifest_path.display()))
        .and_then(|text| serde_json::from_str(&text).context("parsing manifest.json"))
    {
        Ok(m) => m,
        Err(e) => return config_error(&e),
    };
    let cfg = manifest.config;
    if let Err(e) = cfg.validate() {
        return config_error(&e.context("config echoed in manifest.json"));
    }
    let out = out.unwrap_or_else(|| {
        let mut name = from.file_name().unwrap_or_default().to_os_string();
        name.push("-resumed");
        from.with_file_name(name)
    });
    let provenance = Some((from.display().to_string(), additional_t));
    execute("resume", &cfg, &out, provenance, |ctx| {
        experiments::run_resume(ctx, from, additional_t)
    })
}

/// Shared tail of every subcommand: make the directory, run the driver,
/// write `failure.json` on a runtime error, and always leave a manifest.
fn execute(
    command: &str,
    cfg: &ExperimentConfig,
    out: &Path,
    provenance: Option<(String, f64)>,
    driver: impl FnOnce(&RunContext) -> Result<Vec<String>>,
) -> ExitCode {
    if let Err(e) = std::fs::create_dir_all(out) {
        eprintln!("error: creating {}: {e}", out.display());
        return ExitCode::from(EXIT_RUNTIME);
    }
    let started = Instant::now();
    let ctx = RunContext { cfg, out };
    let outcome = driver(&ctx);
    let (status, error, artifacts, code) = match outcome {
        Ok(artifacts) => ("ok".to_string(), None, artifacts, ExitCode::SUCCESS),
        Err(e) => {
            let msg = format!("{e:#}");
            eprintln!("error: {msg}");
            let diag = serde_json::json!({ "command": command, "error": msg });
            if let Ok(text) = serde_json::to_string_pretty(&diag) {
                let _ = std::fs::write(out.join("failure.json"), text + "\n");
            }
            (
                "failed".to_string(),
                Some(msg),
                vec!["failure.json".to_string()],
                ExitCode::from(EXIT_RUNTIME),
            )
        }
    };
    let (resumed_from, additional_t) = match provenance {
        Some((dir, t)) => (Some(dir), Some(t)),
        None => (None, None),
    };
    let manifest = Manifest {
        command: command.to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        seed: cfg.experiment.seed(),
        wall_time_s: started.elapsed().as_secs_f64(),
        status,
        error,
        artifacts,
        config: cfg.clone(),
        resumed_from,
        additional_t,
    };
    match serde_json::to_string_pretty(&manifest) {
        Ok(text) => {
            if let Err(e) = std::fs::write(out.join("manifest.json"), text + "\n") {
                eprintln!("error: writing manifest: {e}");
                return ExitCode::from(EXIT_RUNTIME);
            }
        }
        Err(e) => {
            eprintln!("error: serializing manifest: {e}");
            return ExitCode::from(EXIT_RUNTIME);
        }
    }
    code
}
