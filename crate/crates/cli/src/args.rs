use std::net::SocketAddr;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use emojimodal::fusion::AlphaGrid;
use emojimodal::retrieval::Combine;
use emojimodal::train::TrainConfig;
use emojimodal::zeroshot::{Similarity, DEFAULT_TOP_CONCEPTS};

/// Emoji prediction, zero-shot scoring and query-by-emoji retrieval.
#[derive(Debug, Parser)]
#[command(name = "emojimodal", version)]
pub struct Cli {
    /// Flat key=value file of flag defaults for the subcommand; explicit flags win.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,

    /// Seed for every random choice.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Segment raw JSONL records into an emoji-annotated corpus.
    Ingest(IngestArgs),
    /// Split a corpus into train, validation and test.
    Split(SplitArgs),
    /// Generate a synthetic corpus with known ground truth.
    Synth(SynthArgs),
    /// Train the bidirectional LSTM text classifier.
    TrainText(TrainTextArgs),
    /// Train the linear softmax head on image features.
    TrainImage(TrainImageArgs),
    /// Sweep the text/image fusion weight on validation data.
    SweepAlpha(SweepArgs),
    /// Top-k and msAP of a model on a corpus.
    Eval(EvalArgs),
    /// Zero-shot prediction and retrieval from word embeddings.
    ZeroshotEval(EvalArgs),
    /// Score every document of a corpus into a retrieval index.
    Index(IndexArgs),
    /// Rank indexed documents for an emoji query.
    Search(SearchArgs),
    /// Serve search and prediction over HTTP.
    Serve(ServeArgs),
    /// Top-k and msAP from score and label matrices.
    Metrics(MetricsArgs),
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    /// Line-delimited JSON records with id, text and optional image_features.
    #[arg(long)]
    pub input: PathBuf,
    /// Emoji catalog TSV.
    #[arg(long)]
    pub catalog: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Expected image feature width; inferred when absent.
    #[arg(long)]
    pub image_dim: Option<usize>,
    /// Treat each regional indicator as its own emoji instead of pairing flags.
    #[arg(long)]
    pub letterwise_flags: bool,
    /// Do not map unknown skin-tone or presentation variants to their base emoji.
    #[arg(long)]
    pub no_modifier_fallback: bool,
}

#[derive(Debug, Args)]
pub struct SplitArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    /// Train, validation and test fractions.
    #[arg(long, value_delimiter = ',', num_args = 3, default_values_t = [0.8, 0.1, 0.1])]
    pub ratios: Vec<f64>,
    /// Directory receiving train.bin, val.bin and test.bin.
    #[arg(long)]
    pub out_dir: PathBuf,
    /// Also write test_balanced.bin with at most this many documents per class.
    #[arg(long)]
    pub balanced_cap: Option<usize>,
    /// Also write image-only splits (image_train.bin, ...) without train/test image overlap.
    #[arg(long)]
    pub image_splits: bool,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 30)]
    pub classes: usize,
    #[arg(long, default_value_t = 3000)]
    pub docs: usize,
    /// Probability that a document's text carries its own class signature.
    #[arg(long, default_value_t = 1.0)]
    pub strength: f64,
    /// Filler tokens per document.
    #[arg(long)]
    pub text_len: Option<usize>,
    /// Probability that a document carries a second class.
    #[arg(long)]
    pub extra_label_prob: Option<f64>,
    /// Attach image features of this width.
    #[arg(long)]
    pub image_dim: Option<usize>,
    #[arg(long, default_value_t = 0.2)]
    pub image_noise: f64,
    /// Classes whose text carries signal, as `start..end`; others get uninformative text.
    #[arg(long, value_parser = parse_class_range)]
    pub text_classes: Option<std::ops::Range<usize>>,
    /// Classes whose image features carry signal, as `start..end`.
    #[arg(long, value_parser = parse_class_range)]
    pub image_classes: Option<std::ops::Range<usize>>,
    /// Write embeddings.txt with vectors of this width for the zero-shot scorer.
    #[arg(long)]
    pub embedding_dim: Option<usize>,
    /// Filler words included in embeddings.txt.
    #[arg(long, default_value_t = 20)]
    pub embedding_fillers: usize,
    /// Fractions for the train.bin, val.bin and test.bin written alongside.
    #[arg(long, value_delimiter = ',', num_args = 3, default_values_t = [0.8, 0.1, 0.1])]
    pub ratios: Vec<f64>,
    #[arg(long)]
    pub out_dir: PathBuf,
}

fn parse_class_range(s: &str) -> Result<std::ops::Range<usize>, String> {
    let (a, b) = s.split_once("..").ok_or_else(|| format!("expected start..end, got {s:?}"))?;
    let a: usize = a.trim().parse().map_err(|_| format!("bad range start {a:?}"))?;
    let b: usize = b.trim().parse().map_err(|_| format!("bad range end {b:?}"))?;
    if a >= b {
        return Err(format!("empty range {s:?}"));
    }
    Ok(a..b)
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long, default_value_t = TrainConfig::default().learning_rate)]
    pub learning_rate: f64,
    /// Learning-rate multiplier after a validation epoch without improvement.
    #[arg(long, default_value_t = TrainConfig::default().lr_decay)]
    pub lr_decay: f64,
    #[arg(long, default_value_t = TrainConfig::default().batch_size)]
    pub batch_size: usize,
    #[arg(long, default_value_t = TrainConfig::default().max_epochs)]
    pub max_epochs: usize,
    /// Validation epochs without improvement before stopping.
    #[arg(long, default_value_t = TrainConfig::default().patience)]
    pub patience: usize,
    /// Gradient norm clipping threshold.
    #[arg(long, default_value_t = TrainConfig::default().clip_norm)]
    pub clip_norm: f64,
}

impl TrainArgs {
    pub fn config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            learning_rate: self.learning_rate,
            lr_decay: self.lr_decay,
            batch_size: self.batch_size,
            max_epochs: self.max_epochs,
            patience: self.patience,
            clip_norm: self.clip_norm,
            seed,
        }
    }
}

#[derive(Debug, Args)]
pub struct TrainTextArgs {
    #[arg(long)]
    pub train: PathBuf,
    #[arg(long)]
    pub val: PathBuf,
    /// Checkpoint path; a JSON sidecar is written next to it.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 64)]
    pub embed_dim: usize,
    #[arg(long, default_value_t = 128)]
    pub hidden: usize,
    /// Tokens kept per document; the tail is truncated.
    #[arg(long, default_value_t = 64)]
    pub max_len: usize,
    /// Minimum training-set frequency for a token to enter the vocabulary.
    #[arg(long, default_value_t = 5)]
    pub min_count: usize,
    #[command(flatten)]
    pub train_args: TrainArgs,
}

#[derive(Debug, Args)]
pub struct TrainImageArgs {
    #[arg(long)]
    pub train: PathBuf,
    #[arg(long)]
    pub val: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// L2 penalty on the weight matrix.
    #[arg(long, default_value_t = emojimodal::vision_model::DEFAULT_L2)]
    pub l2: f64,
    #[command(flatten)]
    pub train_args: TrainArgs,
}

/// Which scorer to run. Text and image checkpoints together give the fused
/// scorer; an embedding table gives the zero-shot scorer.
#[derive(Debug, Args)]
pub struct ModelArgs {
    #[arg(long)]
    pub text_model: Option<PathBuf>,
    #[arg(long)]
    pub image_model: Option<PathBuf>,
    /// Text weight when fusing.
    #[arg(long, default_value_t = 0.5)]
    pub alpha: f64,
    /// Word embedding table (`token v1 ... vd` per line) for zero-shot scoring.
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
    /// Emoji catalog TSV; needed for zero-shot prototypes.
    #[arg(long)]
    pub catalog: Option<PathBuf>,
    /// Per-document visual concepts: `id<TAB>name:confidence...` lines.
    #[arg(long, conflicts_with = "concept_names")]
    pub concepts: Option<PathBuf>,
    /// Concept names, one per line, naming the image feature dimensions.
    #[arg(long)]
    pub concept_names: Option<PathBuf>,
    #[arg(long, default_value = "cosine")]
    pub similarity: Similarity,
    /// Most confident concepts averaged into the image embedding.
    #[arg(long, default_value_t = DEFAULT_TOP_CONCEPTS)]
    pub top_concepts: usize,
    /// Ignore document text in zero-shot scoring.
    #[arg(long)]
    pub no_text: bool,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long, value_delimiter = ',', default_values_t = [1, 5, 10, 100])]
    pub topk: Vec<usize>,
    /// Also report retrieval mAP over the corpus.
    #[arg(long)]
    pub retrieval: bool,
    /// JSON lines instead of the text block.
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    /// Validation corpus; documents without image features are skipped.
    #[arg(long)]
    pub val: PathBuf,
    #[arg(long)]
    pub text_model: PathBuf,
    #[arg(long)]
    pub image_model: PathBuf,
    /// `start:end:step` or a comma-separated list.
    #[arg(long, default_value = "0:1:0.05")]
    pub grid: AlphaGrid,
    /// Also write the table here, with a JSON summary next to it.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct IndexArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SearchArgs {
    #[arg(long)]
    pub index: PathBuf,
    #[arg(long)]
    pub catalog: PathBuf,
    /// Emoji separated by spaces, '+' or ','.
    #[arg(long)]
    pub query: String,
    #[arg(long, default_value_t = 10)]
    pub k: usize,
    #[arg(long, default_value = "geo")]
    pub combine: Combine,
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long)]
    pub index: PathBuf,
    #[arg(long, default_value = "127.0.0.1:8080")]
    pub bind: SocketAddr,
    #[command(flatten)]
    pub model: ModelArgs,
    /// Static files served under /ui/.
    #[arg(long)]
    pub ui_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct MetricsArgs {
    /// Tab-separated N x C score matrix.
    #[arg(long)]
    pub scores: PathBuf,
    /// Tab-separated N x C matrix of 0/1 relevance.
    #[arg(long)]
    pub labels: PathBuf,
    #[arg(long, value_delimiter = ',', default_values_t = [1, 5, 10, 100])]
    pub topk: Vec<usize>,
    /// Also report per-query mAP over the columns.
    #[arg(long)]
    pub map: bool,
    #[arg(long)]
    pub json: bool,
}
