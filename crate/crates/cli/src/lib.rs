//! Library behind the `vlp` binary: argument definitions, file formats,
//! and subcommand implementations.
//!
//! Subcommands: `simulate` (seeded Monte Carlo batch with metric output),
//! `sweep` (parameter sweeps in long-format CSV), and `localize` (offline
//! localization of an observation file against a scene).
//!
//! Exit codes: 0 success (including per-target flagged failures),
//! 2 usage error, 3 input-file error, 4 runtime failure.

pub mod commands;
pub mod obs_file;
pub mod results;
pub mod scene_file;

use std::path::PathBuf;
use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Input(String),
    Runtime(String),
}

impl CliError {
    pub fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Input(_) => 3,
            CliError::Runtime(_) => 4,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(msg) | CliError::Input(msg) | CliError::Runtime(msg) => {
                f.write_str(msg)
            }
        }
    }
}

impl std::error::Error for CliError {}

#[derive(Parser)]
#[command(
    name = "vlp",
    version,
    about = "Passive multi-camera visible-light positioning: simulation batches, parameter sweeps, and offline localization"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand)]
pub enum Command {
    /// Run a seeded Monte Carlo batch and write metric rows (CSV).
    Simulate(SimulateArgs),
    /// Sweep focal length, noise, layout distance, or camera count.
    Sweep(SweepArgs),
    /// Localize targets from an observation file against a scene.
    Localize(LocalizeArgs),
}

#[derive(Args)]
pub struct SimulateArgs {
    /// Built-in scene preset (default: table1 when no --scene is given).
    #[arg(long, value_parser = ["table1", "table4"])]
    pub preset: Option<String>,
    /// Scene file (TOML); mutually exclusive with --preset.
    #[arg(long, value_name = "FILE")]
    pub scene: Option<PathBuf>,
    /// Per-axis pixel noise STD in px.
    #[arg(long, default_value_t = 3.0)]
    pub sigma: f64,
    /// Monte Carlo iterations.
    #[arg(long, default_value_t = 10_000)]
    pub iterations: usize,
    /// Targets localized simultaneously per iteration.
    #[arg(long, default_value_t = 3)]
    pub targets: usize,
    /// Master RNG seed.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Keep-out margin from the room faces when sampling targets, m.
    #[arg(long, default_value_t = 0.1)]
    pub margin: f64,
    /// Output file.
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
    /// Also emit the sorted raw error samples as `sample` rows.
    #[arg(long)]
    pub emit_cdf: bool,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum ParameterArg {
    /// Focal length in pixels.
    Focal,
    /// Pixel noise STD in px.
    Noise,
    /// Camera layout distance in m (the room scales with it).
    Layout,
    /// Number of cameras.
    Cameras,
}

#[derive(Args)]
pub struct SweepArgs {
    /// Swept parameter.
    #[arg(long, value_enum)]
    pub parameter: ParameterArg,
    /// Swept values, strictly increasing (comma-separated).
    #[arg(long, value_delimiter = ',', required = true)]
    pub values: Vec<f64>,
    /// Camera counts evaluated per value (ignored for --parameter cameras).
    #[arg(long, value_delimiter = ',', default_values_t = [2usize, 3, 4])]
    pub cameras: Vec<usize>,
    /// Per-axis pixel noise STD in px (when not swept).
    #[arg(long, default_value_t = 3.0)]
    pub sigma: f64,
    /// Monte Carlo iterations per sweep point.
    #[arg(long, default_value_t = 2_000)]
    pub iterations: usize,
    /// Targets localized simultaneously per iteration.
    #[arg(long, default_value_t = 3)]
    pub targets: usize,
    /// Master RNG seed.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Keep-out margin from the room faces when sampling targets, m.
    #[arg(long, default_value_t = 0.1)]
    pub margin: f64,
    /// Output file.
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
}

#[derive(Args)]
pub struct LocalizeArgs {
    /// Scene file (TOML).
    #[arg(long, value_name = "FILE")]
    pub scene: Option<PathBuf>,
    /// Built-in scene preset; alternative to --scene.
    #[arg(long, value_parser = ["table1", "table4"])]
    pub preset: Option<String>,
    /// Observation file (CSV: frame_id,camera_id,target_id,u_px,v_px).
    #[arg(long, value_name = "FILE")]
    pub observations: PathBuf,
    /// Output file.
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
    /// Skip the joint refinement stage and report the linear solution only.
    #[arg(long)]
    pub linear_only: bool,
}

/// Runs one parsed command.
pub fn run(cli: &Cli) -> Result<(), CliError> {
    match &cli.command {
        Command::Simulate(args) => commands::cmd_simulate(args),
        Command::Sweep(args) => commands::cmd_sweep(args),
        Command::Localize(args) => commands::cmd_localize(args),
    }
}
