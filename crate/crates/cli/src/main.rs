//! `stockout` command-line front end.

mod commands;

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "stockout", version, about = "Arrival-rate and substitution inference from stockout-censored sales")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// Run configuration (a scenario file for `simulate`).
    #[arg(long)]
    config: PathBuf,
    /// Overrides the seed in the configuration.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory; overrides the configuration, default `out`.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic dataset from a scenario.
    Simulate {
        #[command(flatten)]
        common: Common,
    },
    /// Sample the posterior and report R-hat and holdout perplexity.
    Fit {
        #[command(flatten)]
        common: Common,
    },
    /// Convergence and trace summaries of a samples file.
    Diagnose {
        #[command(flatten)]
        common: Common,
        /// Samples file; default `<out>/samples.csv`.
        #[arg(long)]
        samples: Option<PathBuf>,
    },
    /// Posterior-predictive purchase counts under given stock conditions.
    Predict {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        samples: Option<PathBuf>,
        /// Stock indicators, e.g. `0,1,1`; repeatable.
        #[arg(long = "stock")]
        stocks: Vec<String>,
        /// Time interval `a:b` the stock conditions hold over; repeatable,
        /// default the whole period.
        #[arg(long = "interval")]
        intervals: Vec<String>,
        /// Use the stock conditions observed in the holdout periods and
        /// report the actual purchases alongside.
        #[arg(long)]
        from_data: bool,
        /// Store id; default the first store.
        #[arg(long)]
        store: Option<String>,
    },
    /// Full-stock predicted sales against actual sales.
    LostSales {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        samples: Option<PathBuf>,
    },
    /// MAP fits of the homogeneous-rate MNL baseline over a grid of
    /// no-purchase weights.
    BaselineFit {
        #[command(flatten)]
        common: Common,
        /// Comma-separated no-purchase weights; default 0.1,...,0.9.
        #[arg(long)]
        tau_grid: Option<String>,
    },
}

/// Runs the command line `argv` (program name first) and returns the exit
/// status. Errors are printed as `stockout: error[<category>] <detail>`.
fn run(argv: impl IntoIterator<Item = impl Into<OsString> + Clone>) -> i32 {
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = write!(std::io::stdout().lock(), "{e}");
            return 0;
        }
        Err(e) => {
            let detail = e.to_string();
            let message: Vec<&str> = detail
                .lines()
                .map(str::trim)
                .take_while(|l| !l.starts_with("Usage:"))
                .filter(|l| !l.is_empty())
                .collect();
            eprintln!("stockout: error[usage] {}", message.join(" ").trim_start_matches("error: "));
            return 2;
        }
    };
    match commands::dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("stockout: error[{}] {}", e.category, e.detail.replace('\n', " "));
            1
        }
    }
}

fn main() -> ExitCode {
    ExitCode::from(run(std::env::args_os()) as u8)
}
