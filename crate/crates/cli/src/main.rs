//! `sparsebench` command-line interface.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser, Debug)]
#[command(
    name = "sparsebench",
    version,
    about = "Sparse encoders and the amortisation gap on synthetic data"
)]
pub struct Cli {
    #[command(flatten)]
    pub global: Global,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct Global {
    /// Output directory.
    #[arg(long, global = true, default_value = "runs")]
    pub out: PathBuf,
    /// Worker threads for independent runs (0 = one per core).
    #[arg(long, global = true, default_value_t = 1)]
    pub jobs: usize,
    /// Base seed.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// JSON file replacing the command's default configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate a synthetic dataset (X.csv, S.csv, D.csv, manifest.json).
    Generate(GenerateArgs),
    /// Train one method on one dataset (trace.csv, checkpoint/, manifest.json).
    Train(TrainArgs),
    /// Produce codes for a dataset from a checkpoint (codes.csv).
    Infer(InferArgs),
    /// Gram matrix of a learned or generated dictionary (G.csv, gram.json).
    Gram(GramArgs),
    /// Print the FLOP ledger of a method as JSON.
    Flops(FlopsArgs),
    /// Parameter sweeps.
    #[command(subcommand)]
    Sweep(SweepCommand),
    /// Run one ablation study.
    Ablate(AblateArgs),
    /// Compare the reference methods of one scenario.
    Suite(SuiteArgs),
    /// Re-execute a study from its manifest into --out.
    Replay(ReplayArgs),
}

#[derive(Args, Debug)]
pub struct ReplayArgs {
    /// Directory holding the recorded manifest.json.
    #[arg(long)]
    pub from: PathBuf,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Dist {
    Uniform,
    Zipf,
}

#[derive(Args, Debug)]
pub struct GenerateArgs {
    /// Number of sparse sources N.
    #[arg(long, default_value_t = 16)]
    pub n: usize,
    /// Number of measurements M.
    #[arg(long, default_value_t = 8)]
    pub m: usize,
    /// Active sources per sample K.
    #[arg(long, default_value_t = 3)]
    pub k: usize,
    #[arg(long, default_value_t = 2048)]
    pub samples: usize,
    #[arg(long, value_enum, default_value_t = Dist::Uniform)]
    pub dist: Dist,
    /// Zipf exponent.
    #[arg(long, default_value_t = 1.0)]
    pub alpha: f64,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    /// known-codes, known-dictionary or unknown-both.
    #[arg(long, default_value = "unknown-both")]
    pub scenario: String,
    /// sae, mlp, sparse-coding or sae-ito.
    #[arg(long, default_value = "sae")]
    pub method: String,
    /// MLP hidden width.
    #[arg(long, default_value_t = 256)]
    pub hidden: usize,
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Dataset directory written by `generate`; the reference data is generated when absent.
    #[arg(long)]
    pub data: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct InferArgs {
    /// Checkpoint directory written by `train`.
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Dataset directory written by `generate`.
    #[arg(long)]
    pub data: PathBuf,
    /// Latent optimisation steps (sparse coding and SAE+ITO).
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Refine an SAE's codes by inference-time optimisation.
    #[arg(long)]
    pub ito: bool,
}

#[derive(Args, Debug)]
pub struct GramArgs {
    /// Checkpoint directory; its decoder is analysed.
    #[arg(long, conflicts_with = "data")]
    pub checkpoint: Option<PathBuf>,
    /// Dataset directory; its generating dictionary is analysed.
    #[arg(long)]
    pub data: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct FlopsArgs {
    #[arg(long, default_value = "sae")]
    pub method: String,
    #[arg(long, default_value_t = 256)]
    pub hidden: usize,
    #[arg(long, default_value_t = 8)]
    pub m: usize,
    #[arg(long, default_value_t = 16)]
    pub n: usize,
    #[arg(long, default_value_t = 1024)]
    pub samples: usize,
    /// Batch size (defaults to the sample count).
    #[arg(long)]
    pub batch: Option<usize>,
    #[arg(long, default_value_t = 20_000)]
    pub steps: usize,
    /// Inference-time iterations (SAE+ITO).
    #[arg(long, default_value_t = 1000)]
    pub iters: usize,
    /// Count the dictionary as fixed rather than learned.
    #[arg(long)]
    pub fixed_dictionary: bool,
    /// Mark biases as present (they are not counted).
    #[arg(long)]
    pub bias: bool,
}

#[derive(Subcommand, Debug)]
pub enum SweepCommand {
    /// Method difference over an N × M × K grid (contour.csv).
    Nmk(NmkArgs),
    /// λ ladder for sparse coding and the SAE (pareto.csv).
    Pareto(ParetoArgs),
}

#[derive(Args, Debug)]
pub struct NmkArgs {
    /// Comma-separated N values.
    #[arg(long, value_delimiter = ',')]
    pub n: Option<Vec<usize>>,
    /// Comma-separated M values.
    #[arg(long, value_delimiter = ',')]
    pub m: Option<Vec<usize>>,
    /// Comma-separated K values.
    #[arg(long, value_delimiter = ',')]
    pub k: Option<Vec<usize>>,
    /// Seeds per cell.
    #[arg(long)]
    pub repeats: Option<usize>,
    #[arg(long)]
    pub samples: Option<usize>,
    #[arg(long)]
    pub steps: Option<usize>,
}

#[derive(Args, Debug)]
pub struct ParetoArgs {
    /// Comma-separated λ values.
    #[arg(long, value_delimiter = ',')]
    pub lambdas: Option<Vec<f64>>,
    #[arg(long, default_value_t = 3)]
    pub seeds: usize,
    #[arg(long, default_value_t = 20_000)]
    pub steps: usize,
}

#[derive(Args, Debug)]
pub struct AblateArgs {
    /// mlp-width, bias, topk, large-scale or zipf-suite.
    pub kind: String,
    #[arg(long, default_value_t = 5)]
    pub seeds: usize,
    #[arg(long)]
    pub steps: Option<usize>,
}

#[derive(Args, Debug)]
pub struct SuiteArgs {
    /// known-codes, known-dictionary or unknown-both.
    pub scenario: String,
    /// Comma-separated methods (default: the scenario's reference set).
    #[arg(long, value_delimiter = ',')]
    pub methods: Option<Vec<String>>,
    #[arg(long, default_value_t = 5)]
    pub seeds: usize,
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long, value_enum, default_value_t = Dist::Uniform)]
    pub dist: Dist,
    #[arg(long, default_value_t = 1.0)]
    pub alpha: f64,
    /// Keep a checkpoint for every run.
    #[arg(long)]
    pub checkpoints: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
