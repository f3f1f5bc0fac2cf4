use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "condtune", version, about = "Test-time conditioning tuning for a frozen video editor")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a seeded suite of toy tasks and its manifest.
    Synth(SynthArgs),
    /// Tune every task in a manifest.
    Tune(RunArgs),
    /// Gradient tuning against PPO at matched critic-call budgets.
    Compare(RunArgs),
    /// Metric report with loss plots.
    Eval(EvalArgs),
    /// Finite-difference check of every differentiable path.
    Gradcheck(GradcheckArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DimsPreset {
    Desk,
    Tiny,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub out: PathBuf,
    /// Falls back to CONDTUNE_SEED, then 0.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, default_value_t = 10)]
    pub count: usize,
    #[arg(long, value_enum, default_value_t = DimsPreset::Desk)]
    pub dims: DimsPreset,
}

#[derive(Debug, Clone, Default, Args)]
pub struct TuningFlags {
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub iters: Option<usize>,
    #[arg(long)]
    pub patience: Option<usize>,
    #[arg(long = "lambda-alpha")]
    pub lambda_alpha: Option<f64>,
    #[arg(long = "lambda-v")]
    pub lambda_v: Option<f64>,
    #[arg(long = "lambda-lpips")]
    pub lambda_lpips: Option<f64>,
    #[arg(long = "lambda-temp")]
    pub lambda_temp: Option<f64>,
    #[arg(long, value_parser = ["uniform", "midpoint"])]
    pub schedule: Option<String>,
    #[arg(long = "n-frames")]
    pub n_frames: Option<usize>,
    #[arg(long = "k-grad")]
    pub k_grad: Option<usize>,
    #[arg(long, value_parser = ["temporal", "framewise"])]
    pub variant: Option<String>,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Falls back to CONDTUNE_SEED, then 0.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Critic-call budget (compare) or iteration cap.
    #[arg(long)]
    pub budget: Option<usize>,
    /// Give PPO the gradient run's wall-clock time instead of its call count.
    #[arg(long = "ppo-wall-clock")]
    pub ppo_wall_clock: bool,
    #[arg(long, default_value_t = 1)]
    pub workers: usize,
    #[command(flatten)]
    pub tuning: TuningFlags,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Directory written by `tune` or `compare`.
    #[arg(long)]
    pub results: PathBuf,
    /// CSV: rater,scenario,method,rank,achieved.
    #[arg(long)]
    pub survey: Option<PathBuf>,
    /// CSV: scenario,method,ea,mq,sp,vq[,align,motion,natural,preserve,visual,local].
    #[arg(long)]
    pub judge: Option<PathBuf>,
    /// Defaults to the results directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    #[arg(long)]
    pub seed: Option<u64>,
}
