mod commands;
mod input;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

/// Quadratic-distance risk estimation for choosing the number of Gaussian
/// mixture components.
#[derive(Parser, Debug)]
#[command(name = "qdrisk", version)]
pub struct Cli {
    /// Worker threads (0 = all cores). Falls back to QDRISK_THREADS.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Scan k and apply the selection rules.
    Select(SelectArgs),
    /// Spectral degrees of freedom over a bandwidth grid.
    Sdof(SdofArgs),
    /// Repeated generate-and-select experiments on a built-in scenario.
    Simulate(SimulateArgs),
    /// Cross-validated unbiased risk per k.
    Cv(CvArgs),
}

#[derive(Args, Debug, Clone)]
pub struct DataArgs {
    /// CSV file, one observation per row, numeric columns only.
    #[arg(long)]
    pub input: PathBuf,
    /// The first row is a header.
    #[arg(long)]
    pub header: bool,
    /// Scale columns to unit variance before anything else.
    #[arg(long, default_value_t = true, action = clap::ArgAction::Set)]
    pub standardize: bool,
}

#[derive(Args, Debug, Clone)]
pub struct ModelArgs {
    #[arg(long, default_value_t = 1)]
    pub kmin: usize,
    #[arg(long, default_value_t = 8)]
    pub kmax: usize,
    /// Gaussian kernel bandwidth, or `auto` for the sDOF recommendation.
    #[arg(long, default_value = "auto")]
    pub h: String,
    /// spherical, diagonal or full (default: full up to three dimensions).
    #[arg(long)]
    pub cov: Option<String>,
    /// EM restarts per k.
    #[arg(long, default_value_t = 5)]
    pub restarts: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Args, Debug)]
pub struct SelectArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    /// Comma-separated subset of aic,bic,qaic,qbic,mra,cv to report.
    #[arg(long, default_value = "qaic,qbic,mra,aic,bic")]
    pub criteria: String,
    /// Extra risk column at this sample size.
    #[arg(long)]
    pub m: Option<f64>,
    /// Folds for the cv criterion.
    #[arg(long, default_value_t = 5)]
    pub cv_folds: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct SdofArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Log-spaced grid `lo:hi:count`.
    #[arg(long, default_value = "0.1:3:24")]
    pub h_grid: String,
    /// Directory for sdof.csv and the manifest; stdout only when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct SimulateArgs {
    /// Scenario 1-7 or u.
    #[arg(long)]
    pub model: String,
    #[arg(long, default_value_t = 1000)]
    pub n: usize,
    #[arg(long, default_value_t = 25)]
    pub reps: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1)]
    pub kmin: usize,
    #[arg(long, default_value_t = 8)]
    pub kmax: usize,
    /// Bandwidth, or `auto` (recommended from a pilot sample).
    #[arg(long, default_value = "auto")]
    pub h: String,
    #[arg(long)]
    pub cov: Option<String>,
    #[arg(long, default_value_t = 5)]
    pub restarts: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct CvArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    /// Fitting-subset size (required with --subsets).
    #[arg(long)]
    pub m: Option<usize>,
    #[arg(long, conflicts_with = "subsets")]
    pub folds: Option<usize>,
    #[arg(long)]
    pub subsets: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn init_threads(flag: Option<usize>) -> anyhow::Result<()> {
    let n = match flag {
        Some(n) => n,
        None => match std::env::var("QDRISK_THREADS") {
            Ok(v) => v
                .trim()
                .parse()
                .map_err(|_| anyhow::anyhow!("QDRISK_THREADS=`{v}` is not a thread count"))?,
            Err(_) => 0,
        },
    };
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let outcome = init_threads(cli.threads).and_then(|()| match cli.command {
        Command::Select(a) => commands::select(a),
        Command::Sdof(a) => commands::sdof(a),
        Command::Simulate(a) => commands::simulate(a),
        Command::Cv(a) => commands::cv(a),
    });
    match outcome {
        Ok(commands::Outcome::Complete) => ExitCode::SUCCESS,
        Ok(commands::Outcome::Partial) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
