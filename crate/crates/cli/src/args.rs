use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "medclaim", version, about = "Medical claim tagging, evidence retrieval and evaluation")]
pub struct Cli {
    /// Seed for every random choice made by the command.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,

    /// Worker threads for parallel stages (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    /// TOML file of flag values. Top-level keys apply to every command and a
    /// `[command]` table to that command; flags on the command line win.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    /// Omit the timestamp from the JSON summary.
    #[arg(long, global = true)]
    pub no_timestamp: bool,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Corpus statistics for a claims file.
    Stats(StatsArgs),
    /// Seeded train/validation split of any JSONL file.
    Split(SplitArgs),
    /// Whole-word masking of claim texts.
    Mask(MaskArgs),
    /// Convert annotated posts to BIO-labeled CoNLL.
    TagConvert(TagConvertArgs),
    /// Train a CRF tagger on CoNLL data.
    TrainCrf(TrainCrfArgs),
    /// Tag posts or CoNLL tokens with a trained CRF.
    Predict(PredictArgs),
    /// Token-level precision, recall and F1 of predicted labels.
    ScoreSpans(ScoreSpansArgs),
    /// Build a BM25 index over evidence abstracts.
    Index(IndexArgs),
    /// Retrieve evidence for claims with BM25 or precomputed vectors.
    Search(SearchArgs),
    /// Build dense-retriever training pairs with sampled negatives.
    Pairs(PairsArgs),
    /// Precision@k and graded count tables for a run.
    Eval(EvalArgs),
    /// Generate synthetic claims through the external generator.
    Gen(GenArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum SchemeArg {
    Claim,
    Pio,
}

impl From<SchemeArg> for medclaim::Scheme {
    fn from(s: SchemeArg) -> Self {
        match s {
            SchemeArg::Claim => medclaim::Scheme::Claim,
            SchemeArg::Pio => medclaim::Scheme::Pio,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ModeArg {
    /// Claim text only.
    Claim,
    /// Claim text followed by its PIO elements.
    #[value(name = "claim_pio", alias = "claim-pio")]
    ClaimPio,
}

impl From<ModeArg> for medclaim::QueryMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Claim => medclaim::QueryMode::ClaimOnly,
            ModeArg::ClaimPio => medclaim::QueryMode::ClaimPlusPio,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum MetricArg {
    Dot,
    Cosine,
}

impl From<MetricArg> for medclaim::Metric {
    fn from(m: MetricArg) -> Self {
        match m {
            MetricArg::Dot => medclaim::Metric::Dot,
            MetricArg::Cosine => medclaim::Metric::Cosine,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum OptimizerArg {
    Adamw,
    Sgd,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum AveragingArg {
    Micro,
    Macro,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum PrecisionArg {
    /// Per-query precision over k, averaged across queries.
    Mean,
    /// Relevant retrieved over retrieved, pooled across queries.
    Pooled,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum InputFormat {
    Posts,
    Conll,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum PresetArg {
    T5,
    Byt5,
}

#[derive(Debug, Args)]
pub struct StatsArgs {
    /// Claims in claims.jsonl format.
    #[arg(long)]
    pub claims: PathBuf,
}

#[derive(Debug, Args)]
pub struct SplitArgs {
    /// Input file.
    #[arg(long)]
    pub input: PathBuf,
    /// Destination of the training side.
    #[arg(long)]
    pub train_out: PathBuf,
    /// Destination of the validation side.
    #[arg(long)]
    pub val_out: PathBuf,
    /// Fraction of records assigned to the training side.
    #[arg(long, default_value_t = 0.9)]
    pub ratio: f64,
}

#[derive(Debug, Args)]
pub struct MaskArgs {
    /// Claims in claims.jsonl format.
    #[arg(long)]
    pub claims: PathBuf,
    /// Output file.
    #[arg(long)]
    pub output: PathBuf,
    /// Fraction of words to mask in each claim.
    #[arg(long, default_value_t = 0.15)]
    pub rate: f64,
    /// Replacement for masked words.
    #[arg(long, default_value = medclaim::corpus::DEFAULT_MASK_TOKEN)]
    pub mask_token: String,
}

#[derive(Debug, Args)]
pub struct TagConvertArgs {
    /// Annotated posts JSONL.
    #[arg(long)]
    pub posts: PathBuf,
    /// Label scheme.
    #[arg(long, value_enum)]
    pub scheme: SchemeArg,
    /// Output file.
    #[arg(long)]
    pub output: PathBuf,
    /// Add a heuristic POS column.
    #[arg(long)]
    pub pos: bool,
}

#[derive(Debug, Args)]
pub struct TrainCrfArgs {
    /// Training sentences in CoNLL format.
    #[arg(long)]
    pub train: PathBuf,
    /// Validation sentences; split from `--train` when absent.
    #[arg(long)]
    pub val: Option<PathBuf>,
    /// Training fraction used when `--val` is absent.
    #[arg(long, default_value_t = 0.9)]
    pub ratio: f64,
    /// Label scheme.
    #[arg(long, value_enum)]
    pub scheme: SchemeArg,
    /// Where to save the trained model.
    #[arg(long)]
    pub model_out: PathBuf,
    /// Sentences per gradient step.
    #[arg(long, default_value_t = 8)]
    pub batch_size: usize,
    /// Maximum number of epochs.
    #[arg(long, default_value_t = 20)]
    pub epochs: usize,
    /// Epochs without validation improvement before stopping.
    #[arg(long, default_value_t = 3)]
    pub patience: usize,
    /// Learning rate.
    #[arg(long, default_value_t = 1e-5)]
    pub lr: f64,
    /// Optimizer.
    #[arg(long, value_enum, default_value = "adamw")]
    pub optimizer: OptimizerArg,
    /// Decoupled weight decay for AdamW.
    #[arg(long, default_value_t = 0.0)]
    pub weight_decay: f64,
    /// L2 penalty added to the loss.
    #[arg(long, default_value_t = 1e-2)]
    pub l2: f64,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    /// Model saved by `train-crf`.
    #[arg(long)]
    pub model: PathBuf,
    /// Input file.
    #[arg(long)]
    pub input: PathBuf,
    /// Input format.
    #[arg(long, value_enum, default_value = "posts")]
    pub format: InputFormat,
    /// Predicted labels in CoNLL format.
    #[arg(long)]
    pub output: PathBuf,
}

#[derive(Debug, Args)]
pub struct ScoreSpansArgs {
    /// Gold labels in CoNLL format.
    #[arg(long)]
    pub gold: PathBuf,
    /// Predicted labels in CoNLL format.
    #[arg(long)]
    pub pred: PathBuf,
    /// Label scheme.
    #[arg(long, value_enum)]
    pub scheme: SchemeArg,
    /// Averaging over labels.
    #[arg(long, value_enum, default_value = "micro")]
    pub averaging: AveragingArg,
    /// Also write the full report, with per-label scores, as JSON.
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct IndexArgs {
    /// Evidence abstracts JSONL.
    #[arg(long)]
    pub evidence: PathBuf,
    /// Output file.
    #[arg(long)]
    pub output: PathBuf,
    /// BM25 term saturation.
    #[arg(long, default_value_t = 1.5)]
    pub k1: f64,
    /// BM25 length normalization.
    #[arg(long, default_value_t = 0.75)]
    pub b: f64,
}

#[derive(Debug, Args)]
pub struct SearchArgs {
    /// Claims whose text and PIO elements form the queries.
    #[arg(long)]
    pub queries: PathBuf,
    /// Run file: `query TAB doc TAB rank TAB score`.
    #[arg(long)]
    pub output: PathBuf,
    /// Documents retrieved per query.
    #[arg(long, default_value_t = 10)]
    pub k: usize,
    /// BM25 index from `index`.
    #[arg(long, required_unless_present = "vectors", conflicts_with = "vectors")]
    pub index: Option<PathBuf>,
    /// Query construction.
    #[arg(long, value_enum, default_value = "claim")]
    pub mode: ModeArg,
    /// Document vectors (`{"id","vec"}` lines) for dense search.
    #[arg(long, requires = "query_vectors")]
    pub vectors: Option<PathBuf>,
    /// Query vectors keyed by claim id.
    #[arg(long, requires = "vectors")]
    pub query_vectors: Option<PathBuf>,
    /// Similarity for dense search.
    #[arg(long, value_enum, default_value = "dot")]
    pub metric: MetricArg,
}

#[derive(Debug, Args)]
pub struct PairsArgs {
    /// Claims in claims.jsonl format.
    #[arg(long)]
    pub claims: PathBuf,
    /// Evidence abstracts JSONL.
    #[arg(long)]
    pub evidence: PathBuf,
    /// Output file.
    #[arg(long)]
    pub output: PathBuf,
    /// Negatives sampled per claim.
    #[arg(long, default_value_t = medclaim::dense::DEFAULT_NEGATIVES)]
    pub negatives: usize,
    /// Query construction.
    #[arg(long, value_enum, default_value = "claim")]
    pub mode: ModeArg,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Run file from `search`.
    #[arg(long)]
    pub run: PathBuf,
    /// Relevance judgments: `query TAB doc TAB grade`.
    #[arg(long)]
    pub qrels: PathBuf,
    /// Comma-separated cutoffs.
    #[arg(long, value_delimiter = ',', default_value = "1,5,10,100")]
    pub k: Vec<usize>,
    /// Lowest grade counted as relevant.
    #[arg(long, default_value_t = medclaim::eval::DEFAULT_THRESHOLD)]
    pub threshold: u8,
    /// Precision aggregation.
    #[arg(long, value_enum, default_value = "mean")]
    pub precision: PrecisionArg,
    /// Also write the report as JSON.
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Print the graded count table to standard error.
    #[arg(long)]
    pub table: bool,
}

#[derive(Debug, Args)]
pub struct GenArgs {
    /// Evidence abstracts whose PIO elements become prompts.
    #[arg(long)]
    pub evidence: PathBuf,
    /// Generated claims in claims.jsonl format.
    #[arg(long)]
    pub output: PathBuf,
    /// Directory for the prompts, decoding config and raw generator output.
    #[arg(long)]
    pub workdir: PathBuf,
    /// Decoding preset.
    #[arg(long, value_enum, default_value = "t5")]
    pub preset: PresetArg,
    /// Decoding config JSON, overriding `--preset`.
    #[arg(long)]
    pub decoding: Option<PathBuf>,
    /// Generator executable.
    #[arg(long, default_value = "medclaim-gen")]
    pub bridge: String,
    /// Exit with an error when any claim violates the decoding constraints.
    #[arg(long)]
    pub strict: bool,
}
