//! `vtprune`: generate synthetic corpora, run the pruning pipeline, sweep
//! hyperparameters and render attention heatmaps.
//!
//! Exit codes: 0 success, 1 runtime or partial failure, 2 usage error.

/// `println!` that tolerates a closed stdout (e.g. piped into `head`).
macro_rules! out {
    ($($arg:tt)*) => {{
        use std::io::Write as _;
        let _ = writeln!(std::io::stdout(), $($arg)*);
    }};
}

mod generate;
mod render;
mod run;
mod sweep;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "vtprune", version, about = "Visual token pruning testbed")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic corpus of token grids with ground-truth sidecars.
    Generate(GenerateArgs),
    /// Run the pruning pipeline over a corpus and write a manifest.
    Run(RunArgs),
    /// Render per-segment heatmaps of a run's selection scores.
    Visualize(VisualizeArgs),
}

#[derive(Args)]
pub struct GenerateArgs {
    #[arg(long, default_value = "corpus")]
    pub out: PathBuf,
    #[arg(long, default_value_t = vtprune::synth::DEFAULT_CORPUS_VIDEOS)]
    pub videos: usize,
    #[arg(long, default_value_t = vtprune::synth::DEFAULT_CORPUS_SEED)]
    pub seed: u64,
    #[arg(long, default_value_t = 16)]
    pub frames: usize,
    #[arg(long, default_value_t = 64)]
    pub tokens: usize,
    #[arg(long, default_value_t = 64)]
    pub channels: usize,
    #[arg(long, default_value_t = 4)]
    pub scenes: usize,
    /// Fixed static fraction; by default it cycles through the mixed corpus values.
    #[arg(long)]
    pub static_fraction: Option<f64>,
    #[arg(long)]
    pub static_noise: Option<f64>,
    /// Fixed dynamic scale; by default it alternates 1.0 / 1.5.
    #[arg(long)]
    pub dynamic_drift: Option<f64>,
}

#[derive(Args)]
pub struct RunArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    /// JSON config file; individual flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub tau: Option<f64>,
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub m_layer: Option<usize>,
    #[arg(long)]
    pub k_knn: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, default_value_t = 1)]
    pub workers: usize,
    /// Hyperparameter grid, e.g. `alpha=0.1:0.9:0.1,m=2:11:1`.
    #[arg(long)]
    pub sweep: Option<String>,
    /// Also write per-video merge traces.
    #[arg(long)]
    pub trace: bool,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    /// Output subdirectory; defaults to a hash of config and inputs.
    #[arg(long)]
    pub run_id: Option<String>,
}

#[derive(Args)]
pub struct VisualizeArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub video: String,
    /// Defaults to `figures/` next to the manifest.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// An error tagged with the exit code it should produce.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub error: anyhow::Error,
}

impl Failure {
    pub fn usage(error: impl Into<anyhow::Error>) -> Self {
        Self {
            code: 2,
            error: error.into(),
        }
    }
}

impl<E: Into<anyhow::Error>> From<E> for Failure {
    fn from(e: E) -> Self {
        Self {
            code: 1,
            error: e.into(),
        }
    }
}

pub type CmdResult = Result<ExitCode, Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Generate(a) => generate::cmd_generate(&a),
        Command::Run(a) => run::cmd_run(&a),
        Command::Visualize(a) => render::cmd_visualize(&a),
    };
    match result {
        Ok(code) => code,
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}
