//! Argument parsing, config resolution and error reporting for the `cdcl` binary.

mod commands;

use std::ffi::OsString;
use std::fmt;
use std::path::PathBuf;

use cdcl_core::error::{Error, ErrorCategory};
use cdcl_core::explain::ExtractionMode;
use cdcl_core::graph::FuseOptions;
use cdcl_core::model::{InteractionMode, ModelConfig, RelationNorm, TripletMode};
use cdcl_core::train::TrainConfig;
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

#[derive(Debug, Parser)]
#[command(name = "cdcl", version, about = "Discourse-graph fusion for cross-document NLI with EDU explanations")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check an instance file (and optionally an embedding container) and print summary counts
    Validate(ValidateArgs),
    /// Dump the two document graphs and the fused graph of one instance as JSON
    BuildGraph(BuildGraphArgs),
    /// Count cross-document lexical edges at each similarity threshold (CSV)
    DeltaSweep(DeltaSweepArgs),
    /// Train a model and write the best checkpoint and a per-epoch loss log
    Train(TrainArgs),
    /// Evaluate a checkpoint: classification, triplet ordering and explanation scores
    Eval(EvalArgs),
    /// Write predicted explanation EDUs for every instance as JSONL
    Explain(ExplainArgs),
    /// Finite-difference check of the full loss on a small seeded model
    Gradcheck(GradcheckArgs),
    /// Score a prediction dump against gold instances
    Metrics(MetricsArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EmbeddingSource {
    /// Deterministic hashed character n-grams of each text
    Hash,
    /// A precomputed embedding container
    File,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct EmbeddingArgs {
    /// Where EDU and hypothesis vectors come from
    #[arg(long, value_enum, default_value_t = EmbeddingSource::Hash)]
    pub embeddings: EmbeddingSource,
    /// Embedding container, required with `--embeddings file`
    #[arg(long, value_name = "PATH")]
    pub embeddings_file: Option<PathBuf>,
    /// Width of hash embeddings
    #[arg(long, default_value_t = 1024)]
    pub dim: usize,
    /// Seed of the hash embedding
    #[arg(long, default_value_t = 0)]
    pub hash_seed: u64,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct FuseArgs {
    /// Cosine threshold above which cross-document node pairs get a lexical edge
    #[arg(long, default_value_t = cdcl_core::graph::DEFAULT_DELTA)]
    pub delta: f64,
    /// Only link leaf (EDU) nodes across documents
    #[arg(long)]
    pub leaves_only: bool,
}

impl FuseArgs {
    fn options(&self) -> FuseOptions {
        FuseOptions { delta: self.delta, leaves_only: self.leaves_only }
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ExtractArgs {
    /// Select EDUs whose probability is at least this value
    #[arg(long, default_value_t = 0.5)]
    pub threshold: f64,
    /// Select the k highest-scoring EDUs per document instead of thresholding
    #[arg(long, value_name = "K")]
    pub top_k: Option<usize>,
}

impl ExtractArgs {
    fn mode(&self) -> ExtractionMode {
        match self.top_k {
            Some(k) => ExtractionMode::TopK(k),
            None => ExtractionMode::Threshold(self.threshold),
        }
    }
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    /// Instance file (JSONL)
    pub data: PathBuf,
    /// Embedding container to check for complete coverage of the instances
    #[arg(long, value_name = "PATH")]
    pub embeddings_file: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BuildGraphArgs {
    /// Instance file (JSONL)
    pub data: PathBuf,
    /// Instance id to build; defaults to the first instance
    #[arg(long)]
    pub id: Option<String>,
    #[command(flatten)]
    pub embeddings: EmbeddingArgs,
    #[command(flatten)]
    pub fuse: FuseArgs,
    /// Output JSON path; stdout when omitted
    #[arg(long, value_name = "PATH")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct DeltaSweepArgs {
    /// Instance file (JSONL)
    pub data: PathBuf,
    /// Ascending comma-separated thresholds
    #[arg(long, value_delimiter = ',', default_value = "0.5,0.6,0.7,0.8,0.9,0.95")]
    pub deltas: Vec<f64>,
    /// Only count leaf (EDU) pairs
    #[arg(long)]
    pub leaves_only: bool,
    #[command(flatten)]
    pub embeddings: EmbeddingArgs,
    /// Output CSV path; stdout when omitted
    #[arg(long, value_name = "PATH")]
    pub out: Option<PathBuf>,
}

fn kebab<T: DeserializeOwned>(s: &str) -> Result<T, String> {
    serde_json::from_value(serde_json::Value::String(s.to_string())).map_err(|e| e.to_string())
}

/// Model and training settings that override the config file when given.
#[derive(Debug, Clone, Default, Args)]
pub struct HyperArgs {
    /// Hidden width of the graph layers [default: 256]
    #[arg(long)]
    pub hidden: Option<usize>,
    /// Hidden width of the classifier and explanation MLPs [default: 256]
    #[arg(long)]
    pub mlp_hidden: Option<usize>,
    /// Attention heads in the first graph layer [default: 4]
    #[arg(long)]
    pub heads1: Option<usize>,
    /// Attention heads in the second graph layer [default: 1]
    #[arg(long)]
    pub heads2: Option<usize>,
    /// Dropout probability after each graph layer [default: 0.1]
    #[arg(long)]
    pub dropout: Option<f64>,
    /// Weight of the explanation loss [default: 0.2]
    #[arg(long)]
    pub gamma: Option<f64>,
    /// Weight of the classification plus triplet losses [default: 0.8]
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Margin between positive and negative hypotheses in the triplet loss [default: 1.0]
    #[arg(long)]
    pub sigma: Option<f64>,
    /// Margin between neutral and negative hypotheses in the triplet loss [default: 0.5]
    #[arg(long)]
    pub theta: Option<f64>,
    /// Divisor of the relation sum: present or global [default: present]
    #[arg(long, value_parser = kebab::<RelationNorm>)]
    pub relation_norm: Option<RelationNorm>,
    /// Triplet representation: pair-projection or hypothesis-projection [default: pair-projection]
    #[arg(long, value_parser = kebab::<TripletMode>)]
    pub triplet_mode: Option<TripletMode>,
    /// Explanation interaction: global or per-node [default: global]
    #[arg(long, value_parser = kebab::<InteractionMode>)]
    pub interaction: Option<InteractionMode>,
    /// AdamW learning rate [default: 1e-5]
    #[arg(long)]
    pub lr: Option<f64>,
    /// Premise groups per optimizer step [default: 16]
    #[arg(long)]
    pub batch_groups: Option<usize>,
    /// Training epochs [default: 20]
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Seed for initialization, shuffling and dropout [default: 0]
    #[arg(long)]
    pub seed: Option<u64>,
    /// AdamW decoupled weight decay [default: 0.01]
    #[arg(long)]
    pub weight_decay: Option<f64>,
    /// Global gradient-norm cap; 0 disables clipping [default: 1.0]
    #[arg(long)]
    pub clip_norm: Option<f64>,
    /// Stop after this many epochs without dev improvement [default: off]
    #[arg(long)]
    pub patience: Option<usize>,
    /// Cosine threshold for cross-document lexical edges [default: 0.8]
    #[arg(long)]
    pub delta: Option<f64>,
    /// Only link leaf (EDU) nodes across documents
    #[arg(long)]
    pub leaves_only: bool,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Training instance file (JSONL)
    pub data: PathBuf,
    /// Dev instance file; the training set is reused when omitted
    #[arg(long, value_name = "PATH")]
    pub dev: Option<PathBuf>,
    /// Embedding container for the dev set, with `--embeddings file`
    #[arg(long, value_name = "PATH")]
    pub dev_embeddings_file: Option<PathBuf>,
    /// TOML file with `[model]` and `[train]` tables; flags take precedence
    #[arg(long, value_name = "PATH")]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub hyper: HyperArgs,
    #[command(flatten)]
    pub embeddings: EmbeddingArgs,
    /// Where the best checkpoint is written
    #[arg(long, value_name = "PATH", default_value = "model.ckpt")]
    pub checkpoint: PathBuf,
    /// Where the per-epoch CSV loss log is written
    #[arg(long, value_name = "PATH", default_value = "train_log.csv")]
    pub log: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Instance file (JSONL)
    pub data: PathBuf,
    /// Checkpoint written by `train`
    #[arg(long, value_name = "PATH")]
    pub checkpoint: PathBuf,
    #[command(flatten)]
    pub embeddings: EmbeddingArgs,
    #[command(flatten)]
    pub fuse: FuseArgs,
    #[command(flatten)]
    pub extract: ExtractArgs,
    /// Write one JSON prediction per instance to this path
    #[arg(long, value_name = "PATH")]
    pub dump_predictions: Option<PathBuf>,
    /// Write the full report as JSON to this path
    #[arg(long, value_name = "PATH")]
    pub report: Option<PathBuf>,
    /// Write the headline metrics as `metric,value` CSV to this path
    #[arg(long, value_name = "PATH")]
    pub csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ExplainArgs {
    /// Instance file (JSONL)
    pub data: PathBuf,
    /// Checkpoint written by `train`
    #[arg(long, value_name = "PATH")]
    pub checkpoint: PathBuf,
    #[command(flatten)]
    pub embeddings: EmbeddingArgs,
    #[command(flatten)]
    pub fuse: FuseArgs,
    #[command(flatten)]
    pub extract: ExtractArgs,
    /// Output JSONL path; stdout when omitted
    #[arg(long, value_name = "PATH")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    /// Seed for the toy data and model
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Central-difference step
    #[arg(long, default_value_t = 1e-6)]
    pub eps: f64,
    /// Largest accepted relative error
    #[arg(long, default_value_t = 1e-4)]
    pub tolerance: f64,
}

#[derive(Debug, Args)]
pub struct MetricsArgs {
    /// Prediction dump written by `eval --dump-predictions`
    #[arg(long, value_name = "PATH")]
    pub predictions: PathBuf,
    /// Gold instance file (JSONL)
    #[arg(long, value_name = "PATH")]
    pub gold: PathBuf,
    /// Write the headline metrics as `metric,value` CSV to this path
    #[arg(long, value_name = "PATH")]
    pub csv: Option<PathBuf>,
}

/// Settings file layout; every field is optional.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub train: TrainConfig,
}

impl RunConfig {
    /// Applies flag overrides on top of `self`.
    pub fn apply(&mut self, h: &HyperArgs) {
        let m = &mut self.model;
        macro_rules! set {
            ($dst:expr, $src:expr) => {
                if let Some(v) = $src {
                    $dst = v;
                }
            };
        }
        set!(m.d_hidden, h.hidden);
        set!(m.mlp_hidden, h.mlp_hidden);
        set!(m.heads_layer1, h.heads1);
        set!(m.heads_layer2, h.heads2);
        set!(m.dropout, h.dropout);
        set!(m.gamma, h.gamma);
        set!(m.lambda, h.lambda);
        set!(m.sigma, h.sigma);
        set!(m.theta, h.theta);
        set!(m.relation_norm, h.relation_norm);
        set!(m.triplet_mode, h.triplet_mode);
        set!(m.interaction, h.interaction);
        let t = &mut self.train;
        set!(t.lr, h.lr);
        set!(t.batch_groups, h.batch_groups);
        set!(t.epochs, h.epochs);
        set!(t.seed, h.seed);
        set!(t.weight_decay, h.weight_decay);
        set!(t.delta, h.delta);
        if let Some(c) = h.clip_norm {
            t.clip_norm = (c > 0.0).then_some(c);
        }
        if h.patience.is_some() {
            t.patience = h.patience;
        }
        if h.leaves_only {
            t.leaves_only = true;
        }
    }
}

/// A failure with the category that decides the exit code.
#[derive(Debug)]
pub enum CliError {
    Core(Error),
    Usage(String),
    Numeric(String),
}

impl CliError {
    pub fn category(&self) -> ErrorCategory {
        match self {
            CliError::Core(e) => e.category(),
            CliError::Usage(_) => ErrorCategory::Usage,
            CliError::Numeric(_) => ErrorCategory::Numeric,
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self.category() {
            ErrorCategory::Usage => 2,
            ErrorCategory::Validation => 3,
            ErrorCategory::Numeric => 4,
            ErrorCategory::Io => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Core(e) => write!(f, "{e}"),
            CliError::Usage(m) | CliError::Numeric(m) => f.write_str(m),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Core(e)
    }
}

pub fn category_name(c: ErrorCategory) -> &'static str {
    match c {
        ErrorCategory::Io => "io",
        ErrorCategory::Validation => "validation",
        ErrorCategory::Numeric => "numeric",
        ErrorCategory::Usage => "usage",
    }
}

/// Parses `args` (program name first), runs the command and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"))
        .format_timestamp(None)
        .try_init();
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            // --help and --version
            print!("{e}");
            return 0;
        }
        Err(e) => {
            let text = e.to_string();
            let first = text.lines().next().unwrap_or("").trim_start_matches("error: ");
            eprintln!("error[usage]: {first}");
            let rest: Vec<&str> = text.lines().skip(1).filter(|l| !l.trim().is_empty()).collect();
            for line in rest {
                eprintln!("  {line}");
            }
            return 2;
        }
    };
    match commands::dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error[{}]: {e}", category_name(e.category()));
            e.exit_code()
        }
    }
}
