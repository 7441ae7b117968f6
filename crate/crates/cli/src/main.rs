mod commands;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

/// Multi-level single-server queue lab.
#[derive(Debug, Parser)]
#[command(name = "mlqlab", version, about)]
pub struct Cli {
    #[command(flatten)]
    pub global: Global,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Global {
    /// Experiment file (TOML). Defaults to the built-in two-level example.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true, default_value_t = 1)]
    pub seed: u64,
    /// Independent replicas; defaults to the config's sweep setting.
    #[arg(long, global = true)]
    pub replicas: Option<u32>,
    #[arg(long, global = true, default_value = ".")]
    pub out_dir: PathBuf,
    /// Format of grids and tables; reports are always JSON.
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Limit density on a grid, with its coefficients.
    Density {
        #[arg(long, default_value_t = 1001)]
        points: usize,
        /// Right end of the grid; defaults to where the tail is negligible.
        #[arg(long)]
        upper: Option<f64>,
    },
    /// Stationary DES run at one scaling index.
    Simulate {
        #[arg(long)]
        n: u64,
        #[command(flatten)]
        run: RunArgs,
        /// Keep this many leading events as an event-log CSV.
        #[arg(long, default_value_t = 0)]
        log_cap: usize,
    },
    /// Stationary reflected Euler run of the limiting diffusion.
    Sde {
        #[arg(long, default_value_t = 1e-3)]
        dt: f64,
        #[arg(long, default_value_t = 1e4)]
        horizon: f64,
        #[arg(long, default_value_t = 32)]
        batches: usize,
    },
    /// Basic adjoint relation residuals, Palm identities and moment bounds.
    Barcheck {
        #[arg(long)]
        n: u64,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Exponents of the truncated transform equations and their expansions.
    Etazeta {
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true, default_values_t = [-1.0, -0.1, 0.1, 1.0])]
        theta: Vec<f64>,
        /// Truncation level; omitted means untruncated.
        #[arg(long)]
        m: Option<f64>,
        /// Scaling indices for the expansion-error table at `--expansion-theta`.
        #[arg(long, value_delimiter = ',', default_values_t = [100.0, 1000.0, 10000.0])]
        expansion_n: Vec<f64>,
        #[arg(long, default_value_t = 1.0)]
        expansion_theta: f64,
    },
    /// Pathwise renewal decomposition check on simulated traces.
    Dmcheck {
        #[arg(long, default_value_t = 100_000)]
        events: usize,
        #[arg(long, default_value_t = 1e-9)]
        tol: f64,
    },
    /// KS, W1 and moment gaps between an ECDF file and another ECDF or the limit.
    Compare {
        /// ECDF CSV (`x,F,ci_half`) as written by `simulate` or `sde`.
        a: PathBuf,
        /// Second ECDF; omitted means the limit law of the config.
        b: Option<PathBuf>,
    },
    /// DES over several `n`, optionally with one SDE run.
    Sweep {
        #[arg(long, value_delimiter = ',')]
        n: Option<Vec<u64>>,
        /// Fixed per-replica events; otherwise `events_per_n · n`.
        #[arg(long)]
        events: Option<u64>,
        #[arg(long)]
        events_per_n: Option<u64>,
        #[arg(long)]
        batches: Option<usize>,
        #[arg(long)]
        warmup_fraction: Option<f64>,
        /// Also run the diffusion with the config's step and horizon.
        #[arg(long)]
        sde: bool,
    },
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// Per-replica events including warm-up; defaults to `events_per_n · n`.
    #[arg(long)]
    pub events: Option<u64>,
    #[arg(long)]
    pub warmup_fraction: Option<f64>,
    #[arg(long)]
    pub batches: Option<usize>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
