use std::path::PathBuf;

use avse_ci::avse::FusionMode;
use avse_ci::eval::SystemKind;
use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "avse-ci", version, about = "Cochlear-implant coding with an audio-visual enhancement front-end")]
pub struct Cli {
    /// Global seed; overrides the seed in `--config`.
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// JSON file with command settings; flags take precedence.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Repeat for more log output.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Synthetic corpus construction.
    #[command(subcommand)]
    Corpus(CorpusCmd),
    /// The conventional ACE coder.
    #[command(subcommand)]
    Ace(AceCmd),
    /// The neural channel-selection coder.
    #[command(subcommand)]
    Ecs(EcsCmd),
    /// The enhancement front-end.
    #[command(subcommand)]
    Avse(AvseCmd),
    /// Enhance one noisy WAV file.
    Enhance(EnhanceArgs),
    /// Tone-vocode an electrodogram file.
    Vocode(VocodeArgs),
    /// Score one system on a corpus split.
    Eval(EvalArgs),
    /// Run one of the comparison experiments.
    #[command(subcommand)]
    Experiment(ExperimentCmd),
    /// Render artifacts as images.
    #[command(subcommand)]
    Plot(PlotCmd),
}

#[derive(Debug, Subcommand)]
pub enum CorpusCmd {
    Build(CorpusBuildArgs),
}

#[derive(Debug, Args)]
pub struct CorpusBuildArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub n_train: Option<usize>,
    #[arg(long)]
    pub n_val: Option<usize>,
    #[arg(long)]
    pub n_test: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ElecFormat {
    Text,
    Binary,
}

#[derive(Debug, Subcommand)]
pub enum AceCmd {
    Encode(AceEncodeArgs),
}

#[derive(Debug, Args)]
pub struct AceEncodeArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Envelope normalization peak. Defaults to the ECS checkpoint's corpus
    /// peak when `--ecs` is given, else the built-in reference.
    #[arg(long)]
    pub peak: Option<f64>,
    #[arg(long)]
    pub ecs: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = ElecFormat::Text)]
    pub format: ElecFormat,
}

#[derive(Debug, Subcommand)]
pub enum EcsCmd {
    Train(EcsTrainArgs),
    Encode(EcsEncodeArgs),
}

#[derive(Debug, Args)]
pub struct EcsTrainArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    /// Checkpoint directory.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
}

#[derive(Debug, Args)]
pub struct EcsEncodeArgs {
    #[arg(long)]
    pub ecs: PathBuf,
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value_t = ElecFormat::Text)]
    pub format: ElecFormat,
}

#[derive(Debug, Subcommand)]
pub enum AvseCmd {
    Train(AvseTrainArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FusionArg {
    Cross,
    #[value(name = "self")]
    SelfAttn,
}

impl From<FusionArg> for FusionMode {
    fn from(f: FusionArg) -> Self {
        match f {
            FusionArg::Cross => FusionMode::Cross,
            FusionArg::SelfAttn => FusionMode::SelfAttn,
        }
    }
}

#[derive(Debug, Args)]
pub struct AvseTrainArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub ecs: PathBuf,
    /// Checkpoint directory; the per-step loss log goes to `<out>/loss.csv`.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum)]
    pub fusion: Option<FusionArg>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub crop_frames: Option<usize>,
    #[arg(long)]
    pub max_utterances: Option<usize>,
}

#[derive(Debug, Args)]
pub struct EnhanceArgs {
    #[arg(long)]
    pub enhancer: PathBuf,
    #[arg(long)]
    pub input: PathBuf,
    /// VISF feature file; required for cross-attention enhancers.
    #[arg(long)]
    pub visual: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct VocodeArgs {
    /// ELEC file (text, or binary with its `.json` sidecar).
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Output length in samples.
    #[arg(long)]
    pub length: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SplitArg {
    Train,
    Val,
    Test,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum InputArg {
    Clean,
    Noisy,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long, value_parser = parse_system)]
    pub system: SystemKind,
    #[arg(long)]
    pub ecs: PathBuf,
    #[arg(long)]
    pub enhancer: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = SplitArg::Test)]
    pub split: SplitArg,
    #[arg(long, value_enum, default_value_t = InputArg::Noisy)]
    pub input: InputArg,
    #[arg(long)]
    pub out: PathBuf,
}

fn parse_system(s: &str) -> Result<SystemKind, String> {
    s.parse().map_err(|e: avse_ci::Error| e.to_string())
}

#[derive(Debug, Subcommand)]
pub enum ExperimentCmd {
    Table1(ExperimentArgs),
    Table2(ExperimentArgs),
    Table3(ExperimentArgs),
}

#[derive(Debug, Args)]
pub struct ExperimentArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub ecs: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    /// Comma-separated β values for table 2.
    #[arg(long, value_delimiter = ',')]
    pub betas: Option<Vec<f64>>,
    #[arg(long)]
    pub max_utterances: Option<usize>,
    /// Reuse enhancer checkpoints already in `<out>/checkpoints` when their config matches.
    #[arg(long)]
    pub reuse: bool,
}

#[derive(Debug, Subcommand)]
pub enum PlotCmd {
    Electrodogram(PlotArgs),
}

#[derive(Debug, Args)]
pub struct PlotArgs {
    #[arg(long)]
    pub input: PathBuf,
    /// Output prefix; writes `<out>.pgm` and `<out>.csv`.
    #[arg(long)]
    pub out: PathBuf,
}
