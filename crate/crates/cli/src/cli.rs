//! Command-line surface. Each subcommand accepts only the flags it uses.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::settings::SettingsOverlay;

#[derive(Debug, Parser)]
#[command(name = "dipole-ident", version, about = "Selective laser fields and dipole identification experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a problem file and a separate oracle file holding the true dipole.
    GenerateProblem(GenerateArgs),
    /// Build the selective fields; reads the problem file only.
    Precompute(PrecomputeArgs),
    /// Simulate the laboratory: measure the true dipole under every field.
    Measure(MeasureArgs),
    /// Recover the dipole from measurements.
    Identify(IdentifyArgs),
    /// Write the fields as CSV tables.
    ExportFields(ExportArgs),
}

/// Optimizer overrides shared by several subcommands.
#[derive(Debug, Clone, Default, Args)]
pub struct TuningFlags {
    /// Penalty weight on the field energy.
    #[arg(long)]
    pub beta: Option<f64>,
    /// Relaxation parameter of the field update.
    #[arg(long)]
    pub theta: Option<f64>,
    /// Number of multistart restarts.
    #[arg(long)]
    pub restarts: Option<usize>,
}

impl TuningFlags {
    pub fn overlay(&self) -> SettingsOverlay {
        SettingsOverlay { beta: self.beta, theta: self.theta, restarts: self.restarts, ..Default::default() }
    }
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    /// Master seed; basis, dipole, states and optimizer seeds derive from it.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Problem file to write.
    #[arg(long)]
    pub out: PathBuf,
    /// Oracle file to write; defaults to `<out stem>.oracle.json`.
    #[arg(long)]
    pub oracle_out: Option<PathBuf>,
    /// Use the published three-level instance.
    #[arg(long)]
    pub paper: bool,
    #[arg(long)]
    pub dim: Option<usize>,
    /// Basis size.
    #[arg(long = "L")]
    pub basis_size: Option<usize>,
    /// Number of time steps.
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub final_time: Option<f64>,
    #[arg(long)]
    pub noise_sigma: Option<f64>,
    #[command(flatten)]
    pub tuning: TuningFlags,
}

#[derive(Debug, Args)]
pub struct PrecomputeArgs {
    /// Problem file.
    pub problem: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Field archive to write.
    #[arg(long)]
    pub out: PathBuf,
    /// Trace log to write; defaults to `<out stem>.trace.json`.
    #[arg(long)]
    pub trace_out: Option<PathBuf>,
    #[command(flatten)]
    pub tuning: TuningFlags,
}

#[derive(Debug, Args)]
pub struct MeasureArgs {
    /// Problem file.
    pub problem: PathBuf,
    #[arg(long)]
    pub archive: PathBuf,
    /// Oracle file holding the true dipole.
    #[arg(long)]
    pub oracle: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Standard deviation per real component; defaults to the problem value.
    #[arg(long)]
    pub noise_sigma: Option<f64>,
    /// Noise seed; defaults to the problem value.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct IdentifyArgs {
    /// Problem file.
    pub problem: PathBuf,
    #[arg(long)]
    pub archive: PathBuf,
    #[arg(long)]
    pub measurements: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Report to write.
    #[arg(long)]
    pub out: PathBuf,
    /// Oracle file used only to score the result.
    #[arg(long)]
    pub truth: Option<PathBuf>,
    /// Multistart seed; defaults to the problem value.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub restarts: Option<usize>,
}

#[derive(Debug, Args)]
pub struct ExportArgs {
    #[arg(long)]
    pub archive: PathBuf,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}
