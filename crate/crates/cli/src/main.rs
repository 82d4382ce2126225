//! `syncforge`: batch command-line front end.
//!
//! Exit codes: 0 on success, 1 on usage errors (bad flags or config), 2 on
//! data errors (unreadable or inconsistent inputs).

mod commands;
mod config;
mod files;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

/// Usage problems exit with 1, everything the data causes with 2.
#[derive(Debug)]
pub enum Failure {
    Usage(anyhow::Error),
    Data(anyhow::Error),
}

impl Failure {
    pub fn usage(e: impl Into<anyhow::Error>) -> Self {
        Self::Usage(e.into())
    }

    pub fn data(e: impl Into<anyhow::Error>) -> Self {
        Self::Data(e.into())
    }
}

macro_rules! data_errors {
    ($($t:ty),*) => {$(
        impl From<$t> for Failure {
            fn from(e: $t) -> Self {
                Self::Data(e.into())
            }
        }
    )*};
}

data_errors!(
    anyhow::Error,
    syncforge::Error,
    std::io::Error,
    serde_json::Error,
    csv::Error
);

#[derive(Parser)]
#[command(
    name = "syncforge",
    version,
    about = "Audio-visual offset estimation and alignment-aware speech metrics"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Log-mel spectrogram of a 16 kHz mono WAV, written as FMAT.
    Melspec {
        input: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
        /// Flat JSON config (mel keys are used).
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Synthetic pairs with known offsets plus a ground-truth manifest.
    Gen {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
        #[command(flatten)]
        jobs: Jobs,
    },
    /// Offset of a reference mel against video features.
    Estimate {
        video: PathBuf,
        reference: PathBuf,
        /// Checkpoint directory written by `train`. Without it the
        /// parameter-free oracle features are used.
        #[arg(long)]
        params: Option<PathBuf>,
        /// Synchronization radius in frames for oracle mode.
        #[arg(long)]
        radius: Option<usize>,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Front-end alignment of a generated WAV against a reference WAV.
    Align {
        generated: PathBuf,
        reference: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Raw and aligned metrics for a list of pairs, plus offset R².
    Eval {
        #[arg(long)]
        pairs: PathBuf,
        /// Report directory (report.csv, summary.json).
        #[arg(short, long)]
        output: PathBuf,
        /// Ground truth; defaults to manifest.json beside the pair list.
        #[arg(long)]
        manifest: Option<PathBuf>,
        /// Checkpoint for offset estimates; oracle mode when absent.
        #[arg(long)]
        params: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[command(flatten)]
        jobs: Jobs,
    },
    /// Trains the offset predictors on a `gen` directory.
    Train {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Checkpoint directory; also receives train_log.jsonl.
        #[arg(short, long)]
        output: PathBuf,
        #[command(flatten)]
        overrides: TrainOverrides,
    },
}

#[derive(Args, Clone, Copy)]
struct Jobs {
    /// Worker threads for per-file work (default: all cores).
    #[arg(long)]
    jobs: Option<usize>,
}

/// Flags that override config file values.
#[derive(Args, Clone, Copy, Default)]
pub struct TrainOverrides {
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub warmup: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub radius: Option<usize>,
    #[arg(long)]
    pub temperature: Option<f64>,
    #[arg(long)]
    pub ssm_weight: Option<f64>,
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Melspec { input, output, config } => commands::melspec(&input, &output, config.as_deref()),
        Command::Gen { scenario, output, jobs } => with_pool(jobs, || commands::gen(&scenario, &output)),
        Command::Estimate {
            video,
            reference,
            params,
            radius,
            output,
        } => commands::estimate(&video, &reference, params.as_deref(), radius, output.as_deref()),
        Command::Align {
            generated,
            reference,
            config,
            output,
        } => commands::align(&generated, &reference, config.as_deref(), output.as_deref()),
        Command::Eval {
            pairs,
            output,
            manifest,
            params,
            config,
            jobs,
        } => with_pool(jobs, || {
            commands::eval(
                &pairs,
                &output,
                manifest.as_deref(),
                params.as_deref(),
                config.as_deref(),
            )
        }),
        Command::Train {
            data,
            config,
            output,
            overrides,
        } => commands::train(&data, config.as_deref(), &output, &overrides),
    }
}

fn with_pool(jobs: Jobs, f: impl FnOnce() -> Result<(), Failure> + Send) -> Result<(), Failure> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = jobs.jobs {
        if n == 0 {
            return Err(Failure::usage(anyhow::anyhow!("--jobs must be positive")));
        }
        builder = builder.num_threads(n);
    }
    let pool = builder.build().map_err(Failure::usage)?;
    pool.install(f)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
        Err(Failure::Data(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
