use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use fixmark_core::ColourScheme;

mod commands;
mod config;
mod io;

use config::{CommonArgs, RunConfig};

/// Markov-mixture analysis of eye-fixation sequences.
#[derive(Debug, Parser)]
#[command(name = "fixmark", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    #[command(flatten)]
    common: CommonArgs,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Parse raw fixation rows into `<out-dir>/dataset.json`.
    Ingest,
    /// Fit the k-state model on all subjects of one image.
    Fit {
        #[arg(long)]
        image: u32,
        #[arg(long, value_parser = parse_scheme)]
        scheme: ColourScheme,
        #[arg(long)]
        k: usize,
        /// Also write a W × H density grid with cluster labels.
        #[arg(long, num_args = 2, value_names = ["W", "H"])]
        grid: Option<Vec<usize>>,
    },
    /// Leave-one-subject-out Bayes factors for every image, k = 1..k-max.
    Score,
    /// ROC curve of coloured vs grayscale images from stored reports.
    Roc,
    /// Saccade-length KS tests and fixation-count rank tests.
    Saccades,
    /// Correlation of fixation duration with leave-one-out fixation density.
    Duration {
        /// Also report a correlation for each image.
        #[arg(long)]
        per_image: bool,
    },
    /// Generate a dataset from a Markov-mixture spec (JSON).
    Simulate {
        #[arg(long, value_name = "FILE")]
        spec: PathBuf,
        /// Output rows (default `<out-dir>/simulated.csv`).
        #[arg(long, value_name = "FILE")]
        out: Option<PathBuf>,
    },
    /// Rank images by strongest Bayes factor from stored reports.
    Report {
        /// Images listed at each end of the ranking.
        #[arg(long, default_value_t = 4)]
        top: usize,
    },
}

fn parse_scheme(s: &str) -> Result<ColourScheme, String> {
    s.parse()
}

fn run(cli: Cli) -> anyhow::Result<commands::Outcome> {
    let cfg = RunConfig::resolve(&cli.common)?;
    match cli.command {
        Command::Ingest => commands::ingest(&cfg),
        Command::Fit { image, scheme, k, grid } => commands::fit(&cfg, image, scheme, k, grid.as_deref()),
        Command::Score => commands::score(&cfg),
        Command::Roc => commands::roc_cmd(&cfg),
        Command::Saccades => commands::saccades(&cfg),
        Command::Duration { per_image } => commands::duration(&cfg, per_image),
        Command::Simulate { spec, out } => commands::simulate(&cfg, &spec, out.as_deref(), cli.common.seed),
        Command::Report { top } => commands::report(&cfg, top),
    }
}

fn main() -> ExitCode {
    // exit quietly when piped into `head` and the like
    #[cfg(unix)]
    unsafe {
        libc::signal(libc::SIGPIPE, libc::SIG_DFL);
    }
    match run(Cli::parse()) {
        Ok(outcome) if outcome.failures.is_empty() => ExitCode::SUCCESS,
        Ok(outcome) => {
            for f in &outcome.failures {
                eprintln!("error: {f}");
            }
            eprintln!("{} item(s) failed", outcome.failures.len());
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
