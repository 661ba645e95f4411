mod commands;
mod config;

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

/// Creativity scoring for paintings: data preparation, training,
/// evaluation and the rating service.
#[derive(Debug, Parser)]
#[command(name = "paintscore", version)]
pub struct Cli {
    #[command(flatten)]
    pub global: Global,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct Global {
    /// Seed for generation, shuffling, augmentation and initialization.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Directory for all written artifacts.
    #[arg(long, global = true, default_value = "out")]
    pub out_dir: PathBuf,
    /// error, warn, info, debug or trace.
    #[arg(long, global = true, default_value = "info")]
    pub log_level: log::LevelFilter,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Validate a CSV/JSON manifest and write the canonical JSON manifest.
    Ingest {
        #[arg(long)]
        manifest: PathBuf,
        /// Directory that relative image paths resolve against.
        #[arg(long)]
        images: Option<PathBuf>,
        /// Output path (default: <out-dir>/manifest.json).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Minimum width/height for artist paintings.
        #[arg(long, default_value_t = paintscore::dataset::MIN_ARTIST_SIDE)]
        min_artist_side: u32,
    },
    /// Generate seeded synthetic paintings with pixel-measured scores.
    Synth {
        #[arg(long, default_value_t = 300)]
        count: usize,
        #[arg(long, default_value_t = 72)]
        side: u32,
        #[arg(long, default_value_t = 2.0 / 3.0)]
        child_fraction: f64,
    },
    /// Assign every k-th painting to the test split.
    Split {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        every: usize,
        /// Output path (default: rewrite the manifest in place).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train a model from a YAML or JSON config.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Continue from this checkpoint (overrides the config's `resume`).
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Evaluate a checkpoint on a manifest split and write reports.
    Evaluate {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        images: Option<PathBuf>,
        /// test, train or all.
        #[arg(long, default_value = "test")]
        split: String,
    },
    /// Score one image.
    Score {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        image: PathBuf,
        /// Print JSON instead of a table.
        #[arg(long)]
        json: bool,
    },
    /// Replay the reference confusion matrices, or render a saved report.
    Report {
        #[arg(long)]
        tables: bool,
        /// Evaluation report JSON to render as Markdown.
        #[arg(long)]
        evaluation: Option<PathBuf>,
    },
    /// Run the HTTP rating service.
    Serve {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        images: Option<PathBuf>,
        /// Rating ledger (default: <out-dir>/ledger.jsonl).
        #[arg(long)]
        ledger: Option<PathBuf>,
        /// Checkpoint directory for comparisons (default: <out-dir>/checkpoints).
        #[arg(long)]
        checkpoints: Option<PathBuf>,
        /// Evaluation report served at /report (default: <out-dir>/report.json).
        #[arg(long)]
        report: Option<PathBuf>,
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: String,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    env_logger::Builder::new()
        .filter_level(cli.global.log_level)
        .format_timestamp(None)
        .init();
    match commands::run(&cli) {
        Ok(result) => {
            // A closed pipe (e.g. `| head`) is not an error worth reporting.
            let mut out = std::io::stdout().lock();
            let _ = writeln!(out, "{}", result.summary);
            for a in &result.artifacts_written {
                let _ = writeln!(out, "wrote {}", a.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            let code = commands::exit_code(&e);
            eprintln!("error: {e:#}");
            ExitCode::from(code)
        }
    }
}
