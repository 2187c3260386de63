//! `uavsense`: simulate captures, track UAVs, train and run the classifier.
//!
//! Exit codes: 0 success, 1 invalid input, 2 I/O failure, 3 internal error.
//! Global flags can also be set through `UAVSENSE_CONFIG`, `UAVSENSE_SEED`,
//! `UAVSENSE_OUT` and `UAVSENSE_THREADS`.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "uavsense", version, about = "FMCW radar UAV tracking and identification")]
pub struct Cli {
    /// Experiment config (TOML); defaults apply when omitted.
    #[arg(long, global = true, env = "UAVSENSE_CONFIG")]
    pub config: Option<PathBuf>,
    /// Master seed; every random stream is derived from it (default 0).
    /// For `simulate` it replaces the scenario's own seed.
    #[arg(long, global = true, env = "UAVSENSE_SEED")]
    pub seed: Option<u64>,
    /// Output directory, created if missing.
    #[arg(long, global = true, env = "UAVSENSE_OUT", default_value = "out")]
    pub out: PathBuf,
    /// Worker threads (0 = one per core).
    #[arg(long, global = true, env = "UAVSENSE_THREADS", default_value_t = 0)]
    pub threads: usize,
    #[command(subcommand)]
    pub command: Command,
}

impl Cli {
    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(0)
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Synthesize a capture from a scenario file; writes frames.bin and truth.csv.
    Simulate(SimulateArgs),
    /// Track the strongest UAV-like target; writes track.csv and summary.json.
    Track(TrackArgs),
    /// Classify segments from a capture or a dataset file; writes labels.csv and metrics.json.
    Identify(IdentifyArgs),
    /// Train a classifier on a dataset file; writes model.bin and loss.csv.
    Train(TrainArgs),
    /// Relative range error of a track against ground truth.
    Evaluate(EvaluateArgs),
    /// Generate, split or summarize segment datasets.
    #[command(subcommand)]
    Dataset(DatasetCommand),
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub scenario: PathBuf,
    /// Overrides the scenario's frame count.
    #[arg(long)]
    pub frames: Option<usize>,
}

#[derive(Debug, Args)]
pub struct CaptureArgs {
    /// Frame file, or headerless int16 with --int16.
    #[arg(long)]
    pub frames: PathBuf,
    /// Target-free capture for the noise profile.
    #[arg(long)]
    pub background: Option<PathBuf>,
    /// Read headerless int16 (re, im) using the config's chirps and samples.
    #[arg(long)]
    pub int16: bool,
}

#[derive(Debug, Args)]
pub struct TrackArgs {
    #[command(flatten)]
    pub capture: CaptureArgs,
    #[arg(long)]
    pub j_min: Option<usize>,
    #[arg(long)]
    pub j_max: Option<usize>,
    /// Per-frame range-bin constraint; derived from v_max when omitted.
    #[arg(long)]
    pub k_bins: Option<usize>,
    #[arg(long)]
    pub no_filter: bool,
    /// Ground truth CSV; adds error figures to the summary.
    #[arg(long)]
    pub truth: Option<PathBuf>,
    /// Also write rpmm.csv.
    #[arg(long)]
    pub dump_rpmm: bool,
    /// Also write rd_maps.csv (large).
    #[arg(long)]
    pub dump_rd: bool,
}

#[derive(Debug, Args)]
pub struct IdentifyArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Labeled or unlabeled dataset file.
    #[arg(long, conflicts_with = "frames")]
    pub dataset: Option<PathBuf>,
    #[arg(long)]
    pub frames: Option<PathBuf>,
    #[arg(long, requires = "frames")]
    pub background: Option<PathBuf>,
    #[arg(long, requires = "frames")]
    pub int16: bool,
    /// `model` (threshold stored with the model), `fixed` (raw-capture
    /// default 30000) or a number.
    #[arg(long, default_value = "model")]
    pub threshold: String,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    /// Held-out set for the per-epoch validation loss.
    #[arg(long)]
    pub validation: Option<PathBuf>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long, default_value_t = uavsense::identifier::DEFAULT_HIDDEN)]
    pub hidden: usize,
    /// Dataset metadata holding the calibrated threshold; defaults to
    /// meta.json next to the dataset when present.
    #[arg(long)]
    pub meta: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub track: PathBuf,
    #[arg(long)]
    pub truth: PathBuf,
    /// Relative-error budget reported against.
    #[arg(long, default_value_t = 0.02)]
    pub budget: f64,
}

#[derive(Debug, Subcommand)]
pub enum DatasetCommand {
    /// Balanced UAV/distractor segments split into train.bin and test.bin.
    Gen {
        #[arg(long)]
        uav: Option<usize>,
        #[arg(long)]
        other: Option<usize>,
    },
    /// Re-split a dataset file into train.bin and test.bin.
    Split {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        train_fraction: Option<f64>,
    },
    /// Class balance and filter statistics as JSON on stdout.
    Stats {
        #[arg(long)]
        dataset: PathBuf,
    },
}

/// Invalid command-line input that clap cannot catch.
#[derive(Debug)]
pub struct Usage(pub String);

impl std::fmt::Display for Usage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<uavsense::Error>() {
            return match e {
                uavsense::Error::Io { .. } => 2,
                e if e.is_validation() => 1,
                _ => 3,
            };
        }
        if cause.is::<Usage>() {
            return 1;
        }
        if cause.is::<std::io::Error>() {
            return 2;
        }
    }
    3
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    if cli.threads > 0 {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(cli.threads).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(3);
        }
    }
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
