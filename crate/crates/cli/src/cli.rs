use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "mazelab", version, about = "Train, fine-tune, evaluate and compare tilt-maze agents")]
pub struct Cli {
    /// Serve the environment over TCP at ADDR instead of running a command.
    #[arg(long, value_name = "ADDR")]
    pub serve: Option<String>,

    /// Experiment configuration (TOML). Defaults to the desk-scale setup.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,

    /// Use the state-vector desk configuration (the default).
    #[arg(long, global = true, conflicts_with = "image")]
    pub lowdim: bool,

    /// Use the full-size image configuration.
    #[arg(long, global = true)]
    pub image: bool,

    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,

    /// Domain ranges: a TOML file or one of `nominal`, `randomized`, `real-proxy`.
    #[arg(long, global = true, value_name = "PATH")]
    pub domain: Option<String>,

    #[command(subcommand)]
    pub command: Option<Command>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Offline pretraining with parallel workers.
    Train(TrainArgs),
    /// Online fine-tuning of a pretrained checkpoint under actuation latency.
    Transfer(TransferArgs),
    /// Greedy rollouts without learning.
    Eval(EvalArgs),
    /// Fine-tune a robust and a nonrobust checkpoint across seeds.
    Compare(CompareArgs),
    /// Dump frames and a transcript of one greedy episode.
    Play(PlayArgs),
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Sample physics, delay and appearance afresh every episode.
    #[arg(long, conflicts_with = "nonrobust", required_unless_present_any = ["nonrobust", "manifest"])]
    pub robust: bool,
    /// Keep nominal parameters throughout.
    #[arg(long)]
    pub nonrobust: bool,
    /// Re-run the job recorded in a manifest.
    #[arg(long, value_name = "PATH", conflicts_with_all = ["robust", "nonrobust"])]
    pub manifest: Option<PathBuf>,
    /// Environment step budget.
    #[arg(long)]
    pub steps: Option<u64>,
    #[arg(long)]
    pub workers: Option<usize>,
    /// Steps between intermediate checkpoints; 0 disables them.
    #[arg(long)]
    pub checkpoint_every: Option<u64>,
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TransferArgs {
    /// Checkpoint file, or the manifest of the run that produced it.
    #[arg(long, value_name = "PATH")]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub steps: Option<u64>,
    #[arg(long)]
    pub checkpoint_every: Option<u64>,
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long, value_name = "PATH")]
    pub checkpoint: PathBuf,
    #[arg(long, default_value_t = 100)]
    pub episodes: usize,
    /// Also write the per-episode series and summary here.
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    /// Manifest (or checkpoint) of the domain-randomized run.
    pub robust: PathBuf,
    /// Manifest (or checkpoint) of the fixed-parameter run.
    pub nonrobust: PathBuf,
    /// Fine-tuning runs per arm; seeds start at `--seed`.
    #[arg(long, default_value_t = 5)]
    pub seeds: usize,
    /// Fine-tuning budget per run.
    #[arg(long)]
    pub steps: Option<u64>,
    /// Unseen in-range domains for the paired generalization probe.
    #[arg(long, default_value_t = 20)]
    pub probe_domains: usize,
    #[arg(long, default_value_t = 10)]
    pub probe_episodes: usize,
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct PlayArgs {
    #[arg(long, value_name = "PATH")]
    pub checkpoint: PathBuf,
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
}
