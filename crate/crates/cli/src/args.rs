use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Parser, Serialize)]
#[command(name = "avrc", version, about = "Bounds, symmetrizability and coding simulations for arbitrarily varying relay channels")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Subcommand, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Command {
    /// Capacity bounds by minimax optimization.
    Bounds(BoundsArgs),
    /// Symmetrizability verdicts with witnesses.
    Symcheck(SymcheckArgs),
    /// Deterministic-code capacity classification.
    Classify(ClassifyArgs),
    /// Monte Carlo error estimates of block Markov codes.
    Simulate(SimulateArgs),
    /// Re-runs the command recorded in a report's manifest.
    Replay(ReplayArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Bounds(_) => "bounds",
            Command::Symcheck(_) => "symcheck",
            Command::Classify(_) => "classify",
            Command::Simulate(_) => "simulate",
            Command::Replay(_) => "replay",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct CommonArgs {
    /// Channel specification file (JSON).
    #[arg(long)]
    pub spec: PathBuf,
    /// State set: simplex, list:PATH or box:LO,..;HI,.. (overrides the spec file).
    #[arg(long)]
    pub q: Option<String>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Worker threads (default: all cores).
    #[arg(long)]
    pub threads: Option<usize>,
    /// Write the report here instead of stdout.
    #[arg(long)]
    #[serde(skip)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    pub format: Format,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundName {
    Cutset,
    Pdf,
    Fdf,
    Direct,
    Orthogonal,
    Degraded,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct BoundsArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long, value_enum, value_delimiter = ',', default_values_t = vec![BoundName::Cutset, BoundName::Pdf, BoundName::Fdf, BoundName::Direct])]
    pub bounds: Vec<BoundName>,
    #[arg(long, default_value_t = 32)]
    pub grid: usize,
    #[arg(long, default_value_t = 8)]
    pub multistart: usize,
    #[arg(long, default_value_t = 2000)]
    pub max_iter: usize,
    #[arg(long, default_value_t = 1e-4)]
    pub tolerance: f64,
    /// Alphabet size of the auxiliary U (default |X||X1|+2).
    #[arg(long)]
    pub u_card: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SymName {
    XGivenX1,
    X1y1,
    Marginals,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SymcheckArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Conditions to check (default: all that apply).
    #[arg(long, value_enum, value_delimiter = ',')]
    pub which: Option<Vec<SymName>>,
    #[arg(long, default_value_t = 1e-8)]
    pub tol: f64,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ClassifyArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long, default_value_t = 1e-8)]
    pub tol: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FlavorName {
    Robust,
    Strong,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Block lengths (comma-separated sweep).
    #[arg(long, value_delimiter = ',', default_values_t = vec![100])]
    pub n: Vec<usize>,
    #[arg(long, default_value_t = 4)]
    pub blocks: usize,
    /// R' in bits per use (comma-separated sweep); n R' must be an integer.
    #[arg(long, value_delimiter = ',', default_values_t = vec![0.0])]
    pub rp: Vec<f64>,
    /// R'' in bits per use.
    #[arg(long, default_value_t = 0.0)]
    pub rpp: f64,
    #[arg(long, default_value_t = 0.05)]
    pub delta: f64,
    #[arg(long, value_enum, default_value_t = FlavorName::Robust)]
    pub flavor: FlavorName,
    #[arg(long, default_value_t = 1000, value_parser = clap::value_parser!(u64).range(1..))]
    pub trials: u64,
    /// iid:P0,P1,..  iid-grid:STEP  per-block:P0,..;P0,..  fixed:PATH  attack-x  attack-x1y1
    #[arg(long, default_value = "iid-grid:0.05")]
    pub jammer: String,
    /// Draw fresh block permutations per trial.
    #[arg(long)]
    pub randomized: bool,
    /// Code law p(u, x, x1): uniform-df, pdf-argmax or a JSON file.
    #[arg(long, default_value = "uniform-df")]
    pub law: String,
    /// Codebook seed (default: --seed).
    #[arg(long)]
    pub code_seed: Option<u64>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ReplayArgs {
    /// A JSON report written by this tool.
    pub report: PathBuf,
    #[arg(long)]
    #[serde(skip)]
    pub out: Option<PathBuf>,
}
