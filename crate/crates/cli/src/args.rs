use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser, Debug)]
#[command(
    name = "jshap",
    version,
    about = "Joint Shapley values for cooperative games and model attribution"
)]
pub struct Cli {
    #[command(flatten)]
    pub output: OutputArgs,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct OutputArgs {
    /// Emit JSON (schema 1)
    #[arg(long, global = true, conflicts_with = "csv")]
    pub json: bool,

    /// Emit CSV
    #[arg(long, global = true)]
    pub csv: bool,

    /// Write the output here instead of stdout, with a run manifest beside it
    #[arg(long, global = true, value_name = "PATH")]
    pub out: Option<PathBuf>,

    /// Worker threads (default: all cores)
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    /// Significant digits for floating-point output
    #[arg(long, global = true, default_value_t = 12)]
    pub digits: usize,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Joint Shapley coefficients q_0..q_{n-1}
    Coeffs(CoeffsArgs),
    /// One index of a game, exactly
    ExplainGame(ExplainGameArgs),
    /// Local or global joint Shapley values of a model on a dataset
    ExplainModel(ExplainModelArgs),
    /// Sampled joint Shapley values
    Sample(SampleArgs),
    /// All six indices side by side
    Compare(CompareArgs),
    /// Check the joint Shapley axioms on a game
    VerifyAxioms(VerifyArgs),
    /// Convergence trace of the sampler
    Trace(TraceArgs),
}

#[derive(Args, Debug)]
pub struct CoeffsArgs {
    #[arg(long)]
    pub n: usize,
    #[arg(long)]
    pub k: usize,
    /// Also check the coefficient identities
    #[arg(long)]
    pub verify: bool,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum IndexArg {
    Joint,
    Shapley,
    Si,
    Gs,
    Av,
    St,
}

#[derive(Args, Debug)]
pub struct ExplainGameArgs {
    /// `builtin:NAME:N[:key=value...]` or a JSON game file
    #[arg(long)]
    pub game: String,
    #[arg(long, value_enum, default_value_t = IndexArg::Joint)]
    pub index: IndexArg,
    /// Order of explanation (joint and st); defaults to the game file's `k`
    #[arg(long)]
    pub k: Option<usize>,
    /// Print values as exact fractions
    #[arg(long)]
    pub exact_rationals: bool,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum GlobalArg {
    MeanAbs,
    Presence,
}

#[derive(Args, Debug)]
pub struct ModelArgs {
    /// `builtin:EXPR`, `table:PATH` or `exec:PROGRAM ARGS...`
    #[arg(long)]
    pub model: String,
    /// CSV dataset with a header row of feature names
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Seconds to wait for an external model reply
    #[arg(long, default_value_t = 30.0)]
    pub timeout: f64,
}

#[derive(Args, Debug)]
pub struct ExplainModelArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// Explain this dataset row (0-based)
    #[arg(long, conflicts_with = "all")]
    pub x: Option<usize>,
    /// Explain every row
    #[arg(long)]
    pub all: bool,
    #[arg(long, required_unless_present = "decompose")]
    pub k: Option<usize>,
    /// Aggregate the local values over all rows
    #[arg(long, value_enum)]
    pub global: Option<GlobalArg>,
    /// Use every point of {0,1}^n as the dataset
    #[arg(long)]
    pub exact_enumerate_binary: bool,
    /// Feature count for --exact-enumerate-binary without --data
    #[arg(long)]
    pub n: Option<usize>,
    /// Coalitions to report, e.g. "0;1;0,1" (indices or feature names)
    #[arg(long)]
    pub targets: Option<String>,
    /// Sample with this many iterations instead of enumerating
    #[arg(long)]
    pub iters: Option<u64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Exact fractions (exact mode only)
    #[arg(long)]
    pub exact_rationals: bool,
    /// Run the additive decomposition test on this feature over {0,1}^n
    #[arg(long, value_name = "FEATURE")]
    pub decompose: Option<usize>,
    /// Largest accepted residual for --decompose
    #[arg(long, default_value_t = 1e-9)]
    pub tolerance: f64,
}

#[derive(Args, Debug)]
pub struct SourceArgs {
    /// Game to sample: `builtin:...` or a JSON game file
    #[arg(long, conflicts_with_all = ["model", "data", "x"])]
    pub game: Option<String>,
    /// Model to explain (needs --data and --x)
    #[arg(long, requires_all = ["data", "x"])]
    pub model: Option<String>,
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Dataset row to explain
    #[arg(long)]
    pub x: Option<usize>,
    #[arg(long, default_value_t = 30.0)]
    pub timeout: f64,
}

#[derive(Args, Debug)]
pub struct SampleArgs {
    #[command(flatten)]
    pub source: SourceArgs,
    #[arg(long)]
    pub k: usize,
    /// Coalitions to estimate, e.g. "0;1;0,1"; default all up to size k
    #[arg(long)]
    pub targets: Option<String>,
    #[arg(long, default_value_t = 10_000)]
    pub iters: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Also write a convergence trace CSV here
    #[arg(long, value_name = "PATH")]
    pub trace: Option<PathBuf>,
    /// Iterations between trace checkpoints
    #[arg(long)]
    pub batch: Option<u64>,
}

#[derive(Args, Debug)]
pub struct CompareArgs {
    #[arg(long)]
    pub game: String,
    /// Highest order for the Shapley-Taylor and joint columns (default n)
    #[arg(long)]
    pub k_max: Option<usize>,
}

#[derive(Args, Debug)]
pub struct VerifyArgs {
    #[arg(long)]
    pub game: String,
    #[arg(long)]
    pub k: Option<usize>,
    /// Random permutations for the anonymity check
    #[arg(long, default_value_t = 8)]
    pub trials: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReferenceArg {
    /// Exact values for games of up to 20 agents, none otherwise
    Auto,
    Exact,
    None,
}

#[derive(Args, Debug)]
pub struct TraceArgs {
    #[command(flatten)]
    pub source: SourceArgs,
    #[arg(long)]
    pub k: usize,
    #[arg(long)]
    pub targets: Option<String>,
    #[arg(long, default_value_t = 10_000)]
    pub iters: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Iterations between checkpoints (default iters/100)
    #[arg(long)]
    pub batch: Option<u64>,
    /// What the l2 column measures against
    #[arg(long, value_enum, default_value_t = ReferenceArg::Auto)]
    pub reference: ReferenceArg,
}
