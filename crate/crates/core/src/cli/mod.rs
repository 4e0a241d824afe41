//! Command-line driver.
//!
//! Exit codes: 0 on success, 2 for configuration errors, 3 when a stage
//! fails. Failures print one JSON record to stderr and leave a `FAILED`
//! marker in the output root next to whatever the stage had written.

pub mod config;
pub mod manifest;
pub mod stages;

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::error::Error;
use crate::network::load_network;
use config::{Resolved, RunConfig, OUTPUT_ENV};
use manifest::{Manifest, FAILED_FILE};

pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_STAGE: i32 = 3;

#[derive(Debug, Parser)]
#[command(
    name = "failgen",
    version,
    about = "Perception-failure scenario generation in a garage simulator"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args, Clone)]
pub struct RunArgs {
    /// Run configuration file.
    #[arg(long, short)]
    pub config: PathBuf,
    /// Output root; overrides the config file.
    #[arg(long, env = OUTPUT_ENV)]
    pub output: Option<PathBuf>,
    /// Failure definition used for extraction (a, b, c or d).
    #[arg(long)]
    pub definition: Option<String>,
    /// Training epochs.
    #[arg(long)]
    pub epochs: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check a map file against the network invariants.
    ValidateMap { map: PathBuf },
    /// Record baseline episodes in the original environment.
    Simulate(RunArgs),
    /// Extract failure scenarios, mark critical states, build datasets.
    Extract(RunArgs),
    /// Train the all-states and critical-only models.
    Train(RunArgs),
    /// Write the three environment specs.
    GenEnv(RunArgs),
    /// Monte Carlo failure ratios of every environment.
    Evaluate(RunArgs),
    /// Comparison table from the evaluation report.
    Report(RunArgs),
    /// Every stage in order.
    Pipeline(RunArgs),
}

fn error_kind(e: &Error) -> &'static str {
    match e {
        Error::Io { .. } => "io",
        Error::Parse { .. } => "parse",
        Error::Validation(_) => "validation",
        Error::ProgressOutOfRange { .. } => "progress_out_of_range",
        Error::InvalidManeuver(_) => "invalid_maneuver",
        Error::UnknownDecisionPoint(_) => "unknown_decision_point",
        Error::NotAtDecisionPoint { .. } => "not_at_decision_point",
        Error::UnknownVehicle(_) => "unknown_vehicle",
        Error::FeatureSpecMismatch { .. } => "feature_spec_mismatch",
        Error::Config(_) => "config",
        Error::EnumerationCap { .. } => "enumeration_cap",
        Error::InsufficientData(_) => "insufficient_data",
    }
}

fn error_record(stage: &str, e: &Error) -> String {
    serde_json::json!({
        "error": {
            "stage": stage,
            "kind": error_kind(e),
            "message": e.to_string(),
        }
    })
    .to_string()
}

pub fn load(args: &RunArgs) -> Result<Resolved, Error> {
    let mut cfg = RunConfig::load(&args.config).map_err(|e| match e {
        Error::Io { .. } => Error::Config(e.to_string()),
        other => other,
    })?;
    if let Some(d) = &args.definition {
        cfg.definition = d.clone();
    }
    if let Some(n) = args.epochs {
        cfg.train.epochs = n;
    }
    let base = args.config.parent().unwrap_or(Path::new("."));
    cfg.resolve(base, args.output.clone())
}

type Stage = fn(&Resolved) -> crate::error::Result<()>;

const PIPELINE: [(&str, Stage); 6] = [
    ("simulate", stages::simulate),
    ("extract", stages::extract),
    ("train", stages::train_models),
    ("gen-env", stages::gen_env),
    ("evaluate", stages::evaluate),
    ("report", stages::report),
];

fn run_stages(args: &RunArgs, selected: &[(&str, Stage)]) -> i32 {
    let resolved = match load(args) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("{}", error_record("config", &e));
            return EXIT_CONFIG;
        }
    };
    let out = resolved.output.clone();
    if let Err(e) = std::fs::create_dir_all(&out) {
        eprintln!("{}", error_record("setup", &Error::io(&out, e)));
        return EXIT_STAGE;
    }
    let _ = std::fs::remove_file(out.join(FAILED_FILE));
    for (name, stage) in selected {
        log::info!("stage {name}");
        if let Err(e) = stage(&resolved) {
            let record = error_record(name, &e);
            eprintln!("{record}");
            let _ = std::fs::write(out.join(FAILED_FILE), record + "\n");
            return EXIT_STAGE;
        }
    }
    match Manifest::scan(&out, &resolved.hash).and_then(|m| m.write(&out)) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("{}", error_record("manifest", &e));
            EXIT_STAGE
        }
    }
}

fn validate_map(path: &Path) -> i32 {
    match load_network(path) {
        Ok(net) => {
            println!(
                "{}: ok ({} nodes, {} lanes, {} decision points)",
                path.display(),
                net.nodes.len(),
                net.lanes.len(),
                net.decision_points.len()
            );
            0
        }
        Err(e) => {
            eprintln!("{}", error_record("validate-map", &e));
            EXIT_CONFIG
        }
    }
}

/// Runs one command and returns the process exit code.
pub fn run(cli: Cli) -> i32 {
    let stage = |name: &str| {
        PIPELINE
            .iter()
            .copied()
            .filter(|(n, _)| *n == name)
            .collect::<Vec<_>>()
    };
    match &cli.command {
        Command::ValidateMap { map } => validate_map(map),
        Command::Simulate(a) => run_stages(a, &stage("simulate")),
        Command::Extract(a) => run_stages(a, &stage("extract")),
        Command::Train(a) => run_stages(a, &stage("train")),
        Command::GenEnv(a) => run_stages(a, &stage("gen-env")),
        Command::Evaluate(a) => run_stages(a, &stage("evaluate")),
        Command::Report(a) => run_stages(a, &stage("report")),
        Command::Pipeline(a) => run_stages(a, &PIPELINE),
    }
}
