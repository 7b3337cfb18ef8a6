//! Command-line surface.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use lode_core::eval::ScalingMode;
use lode_core::scalenet::Architecture;

#[derive(Debug, Parser)]
#[command(
    name = "lode",
    version,
    about = "Layer scaling upscaler for Lode Runner levels"
)]
pub struct Cli {
    /// Suppress progress output on stderr.
    #[arg(long, short, global = true)]
    pub quiet: bool,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build window/downscale pair datasets.
    #[command(subcommand)]
    Dataset(DatasetCommand),
    /// Train one architecture and write the model with its loss curves.
    Train(TrainArgs),
    /// Upscale seeded noise through trained models and score the results.
    Generate(GenerateArgs),
    /// Score a directory of levels against reference levels.
    Evaluate(EvaluateArgs),
    /// Run the local HTTP service.
    Serve(ServeArgs),
    /// Inspect model files.
    #[command(subcommand)]
    Model(ModelCommand),
}

#[derive(Debug, Subcommand)]
pub enum DatasetCommand {
    /// Slide windows over a corpus, augment, downscale and write the cache.
    Build(DatasetBuildArgs),
}

#[derive(Debug, Subcommand)]
pub enum ModelCommand {
    /// Print a model file's header, parameter count and checksum as JSON.
    Info { path: PathBuf },
}

/// Where levels come from: a VGLC directory or the seeded synthetic corpus.
#[derive(Debug, Clone, Args, Serialize)]
#[group(required = true, multiple = false)]
pub struct CorpusSource {
    /// Directory of VGLC level text files.
    #[arg(long, env = "LODE_CORPUS", value_name = "DIR")]
    pub corpus: Option<PathBuf>,

    /// Use this many seeded synthetic 32x22 levels instead of a corpus.
    #[arg(long, value_name = "LEVELS")]
    pub synthetic: Option<usize>,
}

#[derive(Debug, Clone, Args, Serialize)]
#[group(required = true, multiple = false)]
pub struct PairSource {
    /// Dataset cache written by `dataset build`.
    #[arg(long, value_name = "FILE")]
    pub dataset: Option<PathBuf>,

    #[arg(long, env = "LODE_CORPUS", value_name = "DIR")]
    pub corpus: Option<PathBuf>,

    #[arg(long, value_name = "LEVELS")]
    pub synthetic: Option<usize>,
}

#[derive(Debug, Args, Serialize)]
pub struct DatasetBuildArgs {
    #[command(flatten)]
    pub source: CorpusSource,

    /// Seed of the synthetic corpus.
    #[arg(long, default_value_t = 0)]
    pub synthetic_seed: u64,

    /// High-resolution window size.
    #[arg(long, default_value_t = 16, value_parser = parse_window)]
    pub window: usize,

    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ArchArg {
    LayerScaling,
    HeadOnly,
    Conv,
}

impl From<ArchArg> for Architecture {
    fn from(a: ArchArg) -> Self {
        match a {
            ArchArg::LayerScaling => Architecture::LayerScaling,
            ArchArg::HeadOnly => Architecture::HeadOnly,
            ArchArg::Conv => Architecture::Conv,
        }
    }
}

pub const DESK_BASE_EPOCHS: usize = 50;
pub const DESK_GREEDY_EPOCHS: usize = 100;
pub const DESK_SUBSET: usize = 500;

#[derive(Debug, Args, Serialize)]
pub struct TrainArgs {
    #[command(flatten)]
    pub source: PairSource,

    #[arg(long, default_value_t = 0)]
    pub synthetic_seed: u64,

    /// Window size when building pairs from a corpus [default: 16].
    #[arg(long, value_parser = parse_window, conflicts_with = "dataset")]
    pub window: Option<usize>,

    #[arg(long, value_enum, default_value_t = ArchArg::LayerScaling)]
    pub arch: ArchArg,

    /// Base training epochs [default: 3000, or 50 with --desk].
    #[arg(long)]
    pub base_epochs: Option<usize>,

    /// Per-layer fine-tuning epochs [default: 1000, or 100 with --desk].
    #[arg(long)]
    pub greedy_epochs: Option<usize>,

    /// Train on a seeded random subset of this many pairs [--desk: 500].
    #[arg(long)]
    pub subset: Option<usize>,

    /// Desk-scale presets for epochs and subset; explicit flags still win.
    #[arg(long)]
    pub desk: bool,

    #[arg(long, default_value_t = 10)]
    pub patience: usize,

    #[arg(long, default_value_t = 32)]
    pub batch_size: usize,

    #[arg(long, default_value_t = 1e-3)]
    pub learning_rate: f64,

    #[arg(long, default_value_t = 1e-4)]
    pub finetune_learning_rate: f64,

    #[arg(long, default_value_t = 0)]
    pub seed: u64,

    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModeArg {
    Once,
    Twice,
}

impl From<ModeArg> for ScalingMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Once => ScalingMode::Once,
            ModeArg::Twice => ScalingMode::Twice,
        }
    }
}

/// Reference levels for divergence scoring and noise statistics: the 16x16
/// windows of a corpus or dataset, optionally a seeded subset.
#[derive(Debug, Args, Serialize)]
pub struct ReferenceArgs {
    #[command(flatten)]
    pub source: PairSource,

    #[arg(long, default_value_t = 0)]
    pub synthetic_seed: u64,

    /// Score against a seeded subset of this many reference windows.
    #[arg(long)]
    pub reference_subset: Option<usize>,

    /// Pattern size for TPKLDiv.
    #[arg(long, default_value_t = 3)]
    pub pattern_size: usize,

    #[arg(long, default_value_t = 1e-5)]
    pub epsilon: f64,

    /// Let the reachability agent dig bricks.
    #[arg(long)]
    pub dig: bool,
}

#[derive(Debug, Args, Serialize)]
pub struct GenerateArgs {
    /// 8x8 to 16x16 models; repeat for several pipelines.
    #[arg(long = "model-8to16", value_name = "FILE", required = true)]
    pub model_8to16: Vec<PathBuf>,

    /// 4x4 to 8x8 models, paired by position with --model-8to16.
    #[arg(long = "model-4to8", value_name = "FILE")]
    pub model_4to8: Vec<PathBuf>,

    #[arg(long, value_enum, default_value_t = ModeArg::Twice)]
    pub mode: ModeArg,

    /// Noise levels per pipeline.
    #[arg(long, default_value_t = 200)]
    pub count: usize,

    #[arg(long, default_value_t = 0)]
    pub seed: u64,

    #[command(flatten)]
    pub reference: ReferenceArgs,

    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct EvaluateArgs {
    /// Directory of level text files to score.
    #[arg(long, value_name = "DIR")]
    pub levels: PathBuf,

    #[command(flatten)]
    pub reference: ReferenceArgs,

    #[arg(long, default_value_t = 0)]
    pub seed: u64,

    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, env = "LODE_HOST", default_value = lode_service::DEFAULT_HOST)]
    pub host: String,

    #[arg(long, env = "PORT", default_value_t = lode_service::DEFAULT_PORT)]
    pub port: u16,

    #[arg(long = "model-4to8", env = "MODEL_4TO8", value_name = "FILE")]
    pub model_4to8: Option<PathBuf>,

    #[arg(long = "model-8to16", env = "MODEL_8TO16", value_name = "FILE")]
    pub model_8to16: Option<PathBuf>,

    /// Editor bundle served for paths outside the API.
    #[arg(long, env = "STATIC_DIR", value_name = "DIR")]
    pub static_dir: Option<PathBuf>,

    /// Write all sessions here as JSON on shutdown.
    #[arg(long, env = "LODE_SNAPSHOT", value_name = "FILE")]
    pub snapshot: Option<PathBuf>,
}

fn parse_window(s: &str) -> Result<usize, String> {
    match s.parse::<usize>() {
        Ok(w @ (8 | 16)) => Ok(w),
        _ => Err(format!("window must be 8 or 16, got {s}")),
    }
}
