use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "tconv", version, about = "Learnable FIR filter-bank front-ends for heart sound classification")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Design one band-pass filter, or the default four-band bank.
    Design(DesignArgs),
    /// Magnitude and phase response of a filter or bank JSON file.
    Response(ResponseArgs),
    /// Generate labelled synthetic recordings.
    Synth(SynthArgs),
    /// Segment a directory of labelled WAV files into a cycle store.
    Ingest(IngestArgs),
    /// Segment a single WAV file.
    Segment(SegmentArgs),
    /// Assign recordings of a cycle store to balanced validation folds.
    Folds(FoldsArgs),
    /// Train one fold.
    Train(TrainArgs),
    /// Evaluate a checkpoint on one validation fold.
    Eval(EvalArgs),
    /// Aggregate fold evaluations into a cross-fold table.
    Report(ReportArgs),
    /// Export learned kernels, their responses and LTSA profiles.
    Analyze(AnalyzeArgs),
}

#[derive(Debug, Args)]
pub struct OutArg {
    /// Output directory, created when missing.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct DesignArgs {
    /// Write the four default bands instead of a single filter.
    #[arg(long, conflicts_with_all = ["lo", "hi"])]
    pub bank: bool,
    #[arg(long, required_unless_present = "bank")]
    pub lo: Option<f64>,
    #[arg(long, required_unless_present = "bank")]
    pub hi: Option<f64>,
    #[arg(long, default_value_t = tconv_core::fir::DEFAULT_ORDER)]
    pub order: usize,
    #[arg(long, default_value_t = tconv_core::PIPELINE_RATE_HZ)]
    pub rate: f64,
    /// Frequency points of the exported response.
    #[arg(long, default_value_t = 512)]
    pub points: usize,
    #[command(flatten)]
    pub out: OutArg,
}

#[derive(Debug, Args)]
pub struct ResponseArgs {
    /// Filter or bank JSON written by `design`.
    #[arg(long)]
    pub filter: PathBuf,
    #[arg(long, default_value_t = 512)]
    pub points: usize,
    #[command(flatten)]
    pub out: OutArg,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Generator settings as JSON; flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub abnormal_fraction: Option<f64>,
    /// Recording length in seconds.
    #[arg(long)]
    pub duration: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[command(flatten)]
    pub out: OutArg,
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    #[arg(long)]
    pub wav_dir: PathBuf,
    /// `id,label` manifest with −1 normal and 1 abnormal.
    #[arg(long)]
    pub labels: PathBuf,
    #[command(flatten)]
    pub out: OutArg,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum LabelArg {
    Normal,
    Abnormal,
}

#[derive(Debug, Args)]
pub struct SegmentArgs {
    #[arg(long)]
    pub wav: PathBuf,
    #[arg(long, value_enum, default_value_t = LabelArg::Normal)]
    pub label: LabelArg,
    #[command(flatten)]
    pub out: OutArg,
}

#[derive(Debug, Args)]
pub struct FoldsArgs {
    #[arg(long)]
    pub cycles: PathBuf,
    /// CSV whose first column lists the recordings pinned to fold 0.
    #[arg(long)]
    pub fold0: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub out: OutArg,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FrontendArg {
    /// Fixed filter bank applied before the network.
    Baseline,
    /// Unconstrained tConv.
    Tconv,
    /// Linear-phase tConv.
    Lp,
    /// Zero-phase tConv.
    Zp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitArg {
    Fir,
    Random,
    Zeros,
    He,
}

#[derive(Debug, Args)]
pub struct DataSplitArgs {
    #[arg(long)]
    pub cycles: PathBuf,
    #[arg(long)]
    pub folds: PathBuf,
    /// Validation fold, 0 to 3.
    #[arg(long)]
    pub fold: i32,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub split: DataSplitArgs,
    /// Run settings as JSON; flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub frontend: Option<FrontendArg>,
    #[arg(long, value_enum)]
    pub init: Option<InitArg>,
    #[arg(long, overrides_with = "no_trainable")]
    pub trainable: bool,
    #[arg(long, overrides_with = "trainable")]
    pub no_trainable: bool,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub lr0: Option<f64>,
    #[arg(long)]
    pub lr_decay: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Use at most this many cycles of each training recording.
    #[arg(long)]
    pub max_cycles_per_recording: Option<usize>,
    #[command(flatten)]
    pub out: OutArg,
}

impl TrainArgs {
    pub fn trainable_flag(&self) -> Option<bool> {
        match (self.trainable, self.no_trainable) {
            (true, _) => Some(true),
            (_, true) => Some(false),
            _ => None,
        }
    }
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub ckpt: PathBuf,
    #[command(flatten)]
    pub split: DataSplitArgs,
    #[command(flatten)]
    pub out: OutArg,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Directory searched recursively for `eval.json` files.
    #[arg(long)]
    pub runs: PathBuf,
    #[command(flatten)]
    pub out: OutArg,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    #[arg(long)]
    pub ckpt: PathBuf,
    #[arg(long, default_value_t = 512)]
    pub points: usize,
    /// Recordings for LTSA profiles; needs `--labels`.
    #[arg(long, requires = "labels")]
    pub wav_dir: Option<PathBuf>,
    #[arg(long, requires = "wav_dir")]
    pub labels: Option<PathBuf>,
    #[command(flatten)]
    pub out: OutArg,
}
