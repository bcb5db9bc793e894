use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use shdf_core::{PhiVariant, PromptFormat, SamplerVariant, ScheduleCurve};

#[derive(Debug, Parser)]
#[command(
    name = "shdf",
    version,
    about = "Hierarchical shared-step diffusion planner"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build the embedding tree and print its statistics.
    Tree(TreeArgs),
    /// Compile a share plan and print the compute savings.
    Plan(PlanArgs),
    /// Execute a plan on the toy diffusion world.
    Simulate(SimulateArgs),
    /// Plan and simulate once per τ value, writing one CSV row each.
    Sweep(SweepArgs),
    /// Write a seeded synthetic prompt set with planted clusters.
    Synth(SynthArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Ablation {
    RandomEncodings,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FormatArg {
    Jsonl,
    Binary,
}

impl From<FormatArg> for PromptFormat {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Jsonl => PromptFormat::Jsonl,
            FormatArg::Binary => PromptFormat::Binary,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PhiArg {
    Main,
    Appendix,
}

impl From<PhiArg> for PhiVariant {
    fn from(p: PhiArg) -> Self {
        match p {
            PhiArg::Main => PhiVariant::Main,
            PhiArg::Appendix => PhiVariant::Appendix,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum CurveArg {
    Cosine,
    LinearBeta,
}

impl From<CurveArg> for ScheduleCurve {
    fn from(c: CurveArg) -> Self {
        match c {
            CurveArg::Cosine => ScheduleCurve::Cosine,
            CurveArg::LinearBeta => ScheduleCurve::LinearBeta,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum VariantArg {
    Deterministic,
    Ancestral,
}

impl From<VariantArg> for SamplerVariant {
    fn from(v: VariantArg) -> Self {
        match v {
            VariantArg::Deterministic => SamplerVariant::Deterministic,
            VariantArg::Ancestral => SamplerVariant::Ancestral,
        }
    }
}

/// Where prompts come from and how they are prepared.
#[derive(Debug, Clone, Args)]
pub struct InputArgs {
    /// Prompt file (JSON Lines or binary).
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Input format; guessed from the extension when omitted.
    #[arg(long, value_enum)]
    pub format: Option<FormatArg>,
    /// Scale every embedding to unit norm before clustering.
    #[arg(long)]
    pub normalize: bool,
    /// Select nodes on a tree built from random vectors instead of the embeddings.
    #[arg(long, value_enum)]
    pub ablation: Option<Ablation>,
    /// Tree cache file: reused when its input hash matches, rebuilt otherwise.
    #[arg(long)]
    pub tree: Option<PathBuf>,
}

/// Plan parameters shared by `plan`, `simulate` and `sweep`.
#[derive(Debug, Clone, Args)]
pub struct PlanParams {
    /// Number of denoising steps K (default 40, or the world file's value).
    #[arg(long = "k")]
    pub steps: Option<usize>,
    #[arg(long, value_enum, default_value = "main")]
    pub phi: PhiArg,
    /// Master seed (default 0, or the world file's value).
    #[arg(long)]
    pub seed: Option<u64>,
}

/// Toy-world and sampler settings.
#[derive(Debug, Clone, Args)]
pub struct WorldArgs {
    /// World config JSON; defaults to an identity map with unit target spread.
    #[arg(long)]
    pub world: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub schedule: Option<CurveArg>,
    #[arg(long, value_enum)]
    pub variant: Option<VariantArg>,
    /// Worker threads for plan execution (results do not depend on it).
    #[arg(long)]
    pub threads: Option<usize>,
}

#[derive(Debug, Args)]
pub struct TreeArgs {
    #[command(flatten)]
    pub input: InputArgs,
    /// Tree JSON output.
    #[arg(long)]
    pub output: PathBuf,
    /// Seed of the random encodings used by the ablation.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct PlanArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub params: PlanParams,
    #[arg(long, default_value_t = 1.0)]
    pub tau: f64,
    /// Plan JSON output.
    #[arg(long)]
    pub output: PathBuf,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub params: PlanParams,
    #[command(flatten)]
    pub world: WorldArgs,
    #[arg(long, default_value_t = 1.0)]
    pub tau: f64,
    /// Run independent per-prompt diffusion instead of a share plan.
    #[arg(long)]
    pub standard: bool,
    /// Samples JSONL output.
    #[arg(long)]
    pub output: PathBuf,
    /// Metrics JSON output (default: `<output>.metrics.json`).
    #[arg(long)]
    pub metrics: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub params: PlanParams,
    #[command(flatten)]
    pub world: WorldArgs,
    /// Comma-separated τ values.
    #[arg(long, value_delimiter = ',', default_value = "0,0.5,1,1.5")]
    pub sweep: Vec<f64>,
    /// CSV output.
    #[arg(long)]
    pub output: PathBuf,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 16)]
    pub clusters: usize,
    #[arg(long, default_value_t = 16)]
    pub per_cluster: usize,
    #[arg(long, default_value_t = 64)]
    pub dimension: usize,
    /// Per-coordinate jitter around each cluster center.
    #[arg(long, default_value_t = 0.02)]
    pub jitter: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum)]
    pub format: Option<FormatArg>,
    #[arg(long)]
    pub output: PathBuf,
}
