//! `pcf`: parameter audits, receptive-field maps, toy training and trial
//! scoring for ECAPA-style speaker embedding models.

mod commands;
mod manifest;
mod settings;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

/// Exit 2 for bad usage or configuration, 1 for everything else.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Runtime(String),
}

impl From<pcf_ecapa::Error> for CliError {
    fn from(e: pcf_ecapa::Error) -> Self {
        match e {
            pcf_ecapa::Error::Config(_) | pcf_ecapa::Error::Range(_) => CliError::Usage(e.to_string()),
            _ => CliError::Runtime(e.to_string()),
        }
    }
}

#[derive(Parser, Debug)]
#[command(name = "pcf", version, about = "Speaker-embedding lab: audits, receptive fields, toy training, scoring")]
pub struct Cli {
    /// Directory for every file the command writes.
    #[arg(long, global = true, default_value = "pcf-out")]
    pub out: PathBuf,

    /// Seed for all random draws.
    #[arg(long, global = true, env = "PCF_SEED")]
    pub seed: Option<u64>,

    /// Settings file of `key=value` lines; flags win on conflict.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Per-layer and total parameter counts.
    Summary(SummaryArgs),
    /// Receptive-field maps of the trunk, checked against input gradients.
    Rf(RfArgs),
    /// Write a synthetic speaker corpus as feature files and trial lists.
    Synth(SynthCmd),
    /// Toy training on a synthetic corpus; writes a checkpoint and the loss curve.
    Train(TrainArgs),
    /// Score a trial list and compute EER and minDCF.
    Eval(EvalArgs),
    /// Score a trial list without computing metrics.
    Score(ScoreArgs),
}

#[derive(Args, Debug, Default)]
pub struct ModelArgs {
    /// ecapa, ecapa-large, ecapa-a, ecapa-ab, ecapa-ac or pcf-ecapa.
    #[arg(long)]
    pub variant: Option<String>,
    #[arg(long)]
    pub channels: Option<usize>,
    #[arg(long)]
    pub feat_dim: Option<usize>,
    #[arg(long)]
    pub embed_dim: Option<usize>,
    #[arg(long)]
    pub mfa_out: Option<usize>,
    /// Hidden units per sub-band in squeeze-excitation.
    #[arg(long)]
    pub se_bottleneck: Option<usize>,
    #[arg(long)]
    pub attention_bottleneck: Option<usize>,
    #[arg(long)]
    pub res2_scale: Option<usize>,
    #[arg(long)]
    pub stages: Option<usize>,
}

#[derive(Args, Debug)]
pub struct SummaryArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// Add a linear classifier head to the total.
    #[arg(long)]
    pub include_classifier: bool,
    /// Classifier outputs when it is included.
    #[arg(long)]
    pub classes: Option<usize>,
}

#[derive(Args, Debug)]
pub struct RfArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// Single block to map; all blocks when omitted.
    #[arg(long)]
    pub block: Option<usize>,
    /// Output channel to anchor at.
    #[arg(long)]
    pub channel: Option<usize>,
}

#[derive(Args, Debug, Default)]
pub struct SynthArgs {
    #[arg(long)]
    pub speakers: Option<usize>,
    #[arg(long)]
    pub train_utts: Option<usize>,
    #[arg(long)]
    pub heldout_utts: Option<usize>,
    #[arg(long)]
    pub frames: Option<usize>,
    #[arg(long)]
    pub template_noise: Option<f64>,
    #[arg(long)]
    pub frame_noise: Option<f64>,
    #[arg(long)]
    pub session_dims: Option<usize>,
    #[arg(long)]
    pub session_scale: Option<f64>,
}

#[derive(Args, Debug)]
pub struct SynthCmd {
    #[command(flatten)]
    pub synth: SynthArgs,
    #[arg(long)]
    pub feat_dim: Option<usize>,
}

#[derive(Args, Debug, Default)]
pub struct ScheduleArgs {
    #[arg(long)]
    pub batch: Option<usize>,
    #[arg(long)]
    pub cycle_steps: Option<usize>,
    #[arg(long)]
    pub cycles: Option<usize>,
    #[arg(long)]
    pub lr_min: Option<f64>,
    #[arg(long)]
    pub lr_max: Option<f64>,
    #[arg(long)]
    pub weight_decay: Option<f64>,
    /// circle or aam.
    #[arg(long)]
    pub loss: Option<String>,
    #[arg(long)]
    pub margin: Option<f64>,
    #[arg(long)]
    pub scale: Option<f64>,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub synth: SynthArgs,
    #[command(flatten)]
    pub schedule: ScheduleArgs,
}

#[derive(Args, Debug, Default)]
pub struct ChunkArgs {
    /// Frames per embedding chunk.
    #[arg(long)]
    pub chunk: Option<usize>,
    #[arg(long)]
    pub stride: Option<usize>,
    /// Shorter utterances are padded by repetition.
    #[arg(long)]
    pub min_frames: Option<usize>,
}

#[derive(Args, Debug)]
pub struct InputArgs {
    /// Model file or checkpoint.
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Feature manifest of `<id> <file>` lines.
    #[arg(long)]
    pub features: Option<PathBuf>,
    /// Trial list of `1|0 <enroll> <test>` lines.
    #[arg(long)]
    pub trials: Option<PathBuf>,
    #[command(flatten)]
    pub chunks: ChunkArgs,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[arg(long)]
    pub p_target: Option<f64>,
    #[arg(long)]
    pub c_miss: Option<f64>,
    #[arg(long)]
    pub c_fa: Option<f64>,
}

#[derive(Args, Debug)]
pub struct ScoreArgs {
    #[command(flatten)]
    pub input: InputArgs,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
        Err(CliError::Runtime(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
    }
}
