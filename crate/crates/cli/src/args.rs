use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(
    name = "asg",
    version,
    about = "Product-quantized token embedding toolkit"
)]
pub struct Cli {
    /// Worker threads for clustering. Results do not depend on this value.
    #[arg(long, global = true, env = "ASG_THREADS")]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Table,
    Jsonl,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Separate,
    Shared,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Convert a comma-separated text matrix to an ASGE file.
    ImportCsv { input: PathBuf, output: PathBuf },
    /// Generate Gaussian-blob embeddings.
    Synth(SynthArgs),
    /// Train segmented codebooks and the ConceptID map.
    Train(TrainArgs),
    /// Train the whole-vector k-means baseline.
    TrainSg(TrainSgArgs),
    /// Print ConceptIDs.
    Ids(IdsArgs),
    /// Rebuild embeddings from a model.
    Reconstruct(ReconstructArgs),
    /// Parameter and mapping-storage accounting.
    Report(ReportArgs),
    /// Tokens sharing a ConceptID with a query token at one segment.
    Neighbors(NeighborsArgs),
    /// Output logits for hidden states.
    Logits(LogitsArgs),
    /// Train both models at a matched parameter budget and compare errors.
    Compare(CompareArgs),
    /// Linear-probe retention of labels after quantization.
    Probe(ProbeArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub n_clusters: usize,
    #[arg(long)]
    pub v: usize,
    #[arg(long)]
    pub d: usize,
    #[arg(long, default_value_t = 0.1)]
    pub spread: f32,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    /// Write cluster labels, one per line.
    #[arg(long)]
    pub labels: Option<PathBuf>,
    /// Write a vocabulary of generated token names.
    #[arg(long)]
    pub vocab: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct KmeansArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = asg_core::kmeans::DEFAULT_MAX_ITERS)]
    pub max_iters: usize,
    #[arg(long, default_value_t = asg_core::kmeans::DEFAULT_TOL)]
    pub tol: f64,
}

#[derive(Debug, Args)]
pub struct ShapeArgs {
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub m: Option<usize>,
    #[arg(long, value_enum)]
    pub mode: Option<ModeArg>,
    /// Named (k, m, mode) bundle, e.g. xlmr-k1024-m48.
    #[arg(long)]
    pub preset: Option<String>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[command(flatten)]
    pub shape: ShapeArgs,
    #[command(flatten)]
    pub kmeans: KmeansArgs,
    #[arg(long)]
    pub out: PathBuf,
    /// Write per-iteration objectives as CSV.
    #[arg(long)]
    pub trace: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainSgArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub k: usize,
    #[command(flatten)]
    pub kmeans: KmeansArgs,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub trace: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct IdsArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Token index; all tokens when omitted.
    #[arg(long)]
    pub token: Option<usize>,
    #[arg(long, value_enum, default_value_t = Format::Table)]
    pub format: Format,
}

#[derive(Debug, Args)]
pub struct ReconstructArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Print a single reconstructed row instead of writing a matrix.
    #[arg(long, conflicts_with = "out")]
    pub token: Option<usize>,
    #[arg(long, required_unless_present = "token")]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Table)]
    pub format: Format,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    #[arg(long, conflicts_with_all = ["v", "d", "k", "m", "mode", "preset"])]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub v: Option<usize>,
    #[arg(long)]
    pub d: Option<usize>,
    #[command(flatten)]
    pub shape: ShapeArgs,
    #[arg(long, value_enum, default_value_t = Format::Table)]
    pub format: Format,
}

#[derive(Debug, Args)]
pub struct NeighborsArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub vocab: PathBuf,
    /// Original embeddings, for distances to the shared Concept Vector.
    #[arg(long = "in")]
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub token: String,
    #[arg(long)]
    pub segment: usize,
    #[arg(long, default_value_t = 20)]
    pub limit: usize,
    #[arg(long, value_enum, default_value_t = Format::Table)]
    pub format: Format,
}

#[derive(Debug, Args)]
pub struct LogitsArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// ASGE file with one hidden state per row.
    #[arg(long)]
    pub hidden: PathBuf,
    /// Print the highest-scoring tokens per hidden state.
    #[arg(long, default_value_t = 5)]
    pub top: usize,
    /// Write the full logit matrix (rows × V, f32) as ASGE.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub vocab: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Table)]
    pub format: Format,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[command(flatten)]
    pub shape: ShapeArgs,
    #[command(flatten)]
    pub kmeans: KmeansArgs,
    #[arg(long, value_enum, default_value_t = Format::Table)]
    pub format: Format,
}

#[derive(Debug, Args)]
pub struct ProbeArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    /// Class index per token, one per line.
    #[arg(long)]
    pub labels: PathBuf,
    #[arg(long, group = "quantized")]
    pub model: Option<PathBuf>,
    #[arg(long, group = "quantized")]
    pub sg: Option<PathBuf>,
    #[arg(long, group = "quantized")]
    pub reconstructed: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub split_seed: u64,
    #[arg(long, value_enum, default_value_t = Format::Table)]
    pub format: Format,
}
