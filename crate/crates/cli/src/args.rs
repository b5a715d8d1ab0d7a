use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::config::{Overrides, ReportKind};

#[derive(Debug, Parser)]
#[command(name = "deepesn", version, about = "Deep echo state network experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train and evaluate one configuration per seed.
    Run(Common),
    /// Diagnostics of a saved model under a probe signal.
    Analyze(AnalyzeArgs),
    /// Matched-budget comparison over `compare.grid`.
    Compare(Common),
    /// Depth selection from layer spectral centroids.
    Design(DesignArgs),
    /// Export the task datasets as CSV.
    Gen(Common),
}

#[derive(Debug, Args)]
pub struct Common {
    #[arg(short, long)]
    pub config: PathBuf,
    /// Replaces the configured seed list; repeatable.
    #[arg(long = "seed")]
    pub seeds: Vec<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// `section.key=value`; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
}

impl Common {
    pub fn overrides(&self) -> Overrides {
        Overrides {
            set: self.set.clone(),
            seeds: self.seeds.clone(),
            output_dir: self.out.clone(),
        }
    }
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    #[arg(short, long)]
    pub model: PathBuf,
    /// `noise:LEN:SEED`, `sine:FREQ:LEN` or `csv:PATH`.
    #[arg(long)]
    pub probe: Option<String>,
    /// Comma-separated subset of spectral, lyapunov, esp, entropy.
    #[arg(long, value_delimiter = ',')]
    pub reports: Vec<ReportKind>,
    /// Supplies `[analysis]` settings; flags take precedence.
    #[arg(short, long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
}

#[derive(Debug, Args)]
pub struct DesignArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub epsilon: Option<f64>,
    #[arg(long)]
    pub max_layers: Option<usize>,
}
