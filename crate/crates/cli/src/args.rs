use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

/// Defaults shared by every subcommand.
pub const DEFAULT_B: f64 = 0.0;
pub const DEFAULT_DELTA: f64 = 0.0;
pub const DEFAULT_C: f64 = 0.5;
pub const DEFAULT_BETA: f64 = 0.1;

const DEFAULTS_TABLE: &str = "\
Defaults:
  --b          0      baseline reward
  --delta      0      dead-band half-width (dead-zone mode)
  --tau        auto   pivot threshold (std of whitened first differences)
  --c          0.5    per-segment noise scale
  --beta       0.1    KL coefficient
  --aggregate  mean   segment reward aggregator

Environment:
  SEGREW_THREADS      caps the worker thread count

Exit status: 0 success, 1 invalid input data, 2 usage error";

#[derive(Debug, Parser)]
#[command(name = "segrew", version, about = "Segment-level reward analysis for token reward traces", after_help = DEFAULTS_TABLE)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Classify tokens and group them into labelled segments.
    Segment(SegmentArgs),
    /// Emit binary loss masks.
    Mask(MaskArgs),
    /// Optimal segmentation and error report per trace.
    Analyze(AnalyzeArgs),
    /// Evaluate an objective and its gradient.
    Score(ScoreArgs),
    /// Run a noisy-trace error study.
    Simulate(SimulateArgs),
    /// Train masked and unmasked toy policies on the poison-span task.
    TrainToy(TrainToyArgs),
    /// Error-versus-noise-scale table as CSV.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct Io {
    /// Input JSONL of traces.
    #[arg(long = "in", value_name = "PATH")]
    pub input: PathBuf,
    /// Output path (stdout when omitted).
    #[arg(long = "out", value_name = "PATH")]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ClassifyMode {
    DeadZone,
    Hysteresis,
    Pivot,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Initial {
    Neutral,
    FirstExit,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Aggregate {
    Mean,
    Last,
}

#[derive(Debug, Args)]
pub struct Schmitt {
    /// Baseline reward b.
    #[arg(long, default_value_t = DEFAULT_B, allow_negative_numbers = true)]
    pub b: f64,
    /// Dead-band half-width.
    #[arg(long, default_value_t = DEFAULT_DELTA)]
    pub delta: f64,
    #[arg(long, value_enum, default_value_t = ClassifyMode::DeadZone)]
    pub mode: ClassifyMode,
    /// Hysteresis state before the first band exit.
    #[arg(long, value_enum, default_value_t = Initial::Neutral)]
    pub initial: Initial,
    /// Pivot threshold for `--mode pivot`: a number or `auto`.
    #[arg(long, default_value = "auto")]
    pub tau: String,
}

#[derive(Debug, Args)]
pub struct SegmentArgs {
    #[command(flatten)]
    pub io: Io,
    #[command(flatten)]
    pub schmitt: Schmitt,
    #[arg(long, value_enum, default_value_t = Aggregate::Mean)]
    pub aggregate: Aggregate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MaskKind {
    /// Per-token agreement with the sample class.
    Adaptive,
    /// Segments whose sign matches the sequence reward.
    SignConsistent,
}

#[derive(Debug, Args)]
pub struct MaskArgs {
    #[command(flatten)]
    pub io: Io,
    #[arg(long, value_enum, default_value_t = MaskKind::Adaptive)]
    pub kind: MaskKind,
    #[command(flatten)]
    pub schmitt: Schmitt,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    #[command(flatten)]
    pub io: Io,
    /// Per-segment noise scale.
    #[arg(long, default_value_t = DEFAULT_C)]
    pub c: f64,
    #[arg(long, value_enum, default_value_t = Aggregate::Mean)]
    pub aggregate: Aggregate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Objective {
    MaskedCe,
    Dpo,
    AdaptiveDpo,
    Ppo,
    AdaptivePpo,
    Rs,
    AdaptiveRs,
}

#[derive(Debug, Args)]
pub struct ScoreArgs {
    #[command(flatten)]
    pub io: Io,
    #[arg(long, value_enum, default_value_t = Objective::Dpo)]
    pub objective: Objective,
    /// KL coefficient.
    #[arg(long, default_value_t = DEFAULT_BETA)]
    pub beta: f64,
    /// Mask used by masked and adaptive objectives.
    #[arg(long, value_enum, default_value_t = MaskKind::Adaptive)]
    pub masking: MaskKind,
    #[command(flatten)]
    pub schmitt: Schmitt,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Ground-truth segments as `len:reward,len:reward,...`.
    #[arg(long, allow_hyphen_values = true)]
    pub segments: String,
    #[arg(long, default_value_t = 1.0)]
    pub sigma: f64,
    #[arg(long, default_value_t = 100)]
    pub trials: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Noise scale for the optimal segmenter.
    #[arg(long, default_value_t = DEFAULT_C)]
    pub c: f64,
    /// Study report (stdout when omitted).
    #[arg(long = "out", value_name = "PATH")]
    pub output: Option<PathBuf>,
    /// Also write every simulated trace as JSONL.
    #[arg(long, value_name = "PATH")]
    pub traces: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ToyObjective {
    Dpo,
    Rs,
    MaskedCe,
}

#[derive(Debug, Args)]
pub struct TrainToyArgs {
    /// Task configuration JSON; flags below override its fields.
    #[arg(long, value_name = "PATH")]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub vocab_size: Option<usize>,
    #[arg(long)]
    pub sequence_length: Option<usize>,
    #[arg(long)]
    pub poison_fraction: Option<f64>,
    #[arg(long)]
    pub num_pairs: Option<usize>,
    #[arg(long)]
    pub context_order: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_enum, default_value_t = ToyObjective::Dpo)]
    pub objective: ToyObjective,
    #[arg(long, default_value_t = DEFAULT_BETA)]
    pub beta: f64,
    #[arg(long, default_value_t = 0.1)]
    pub lr: f64,
    #[arg(long, default_value_t = 200)]
    pub steps: usize,
    /// Two-arm JSON report (stdout when omitted).
    #[arg(long = "out", value_name = "PATH")]
    pub output: Option<PathBuf>,
    /// Per-step learning curves as CSV.
    #[arg(long, value_name = "PATH")]
    pub csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    #[command(flatten)]
    pub io: Io,
    /// Comma-separated noise scales.
    #[arg(long, default_value = "0,0.25,0.5,1,2")]
    pub c_grid: String,
    #[arg(long, value_enum, default_value_t = Aggregate::Mean)]
    pub aggregate: Aggregate,
}
