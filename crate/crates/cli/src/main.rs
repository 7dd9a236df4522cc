mod analyze;
mod lowrank;
mod output;
mod simulate;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rmt_spectre_core::{Error, FitMethod, ReshapeMode};

/// Random-matrix-theory signal/noise separation for weight-matrix spectra.
#[derive(Parser, Debug)]
#[command(name = "rmt-spectre", version, propagate_version = true)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    Analyze(analyze::AnalyzeArgs),
    Simulate(simulate::SimulateArgs),
    Lowrank(lowrank::LowrankArgs),
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum MethodChoice {
    Bema,
    Gb,
    Both,
}

impl MethodChoice {
    pub fn methods(self) -> Vec<FitMethod> {
        match self {
            MethodChoice::Bema => vec![FitMethod::Bema],
            MethodChoice::Gb => vec![FitMethod::Gb],
            MethodChoice::Both => vec![FitMethod::Bema, FitMethod::Gb],
        }
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum ReshapeChoice {
    OutByRest,
    InByRest,
}

impl From<ReshapeChoice> for ReshapeMode {
    fn from(c: ReshapeChoice) -> Self {
        match c {
            ReshapeChoice::OutByRest => ReshapeMode::OutByRest,
            ReshapeChoice::InByRest => ReshapeMode::InByRest,
        }
    }
}

/// Fit and threshold hyperparameters shared by `analyze` and `lowrank`.
#[derive(Args, Debug, Clone)]
pub struct FitFlags {
    /// BEMA trim fraction, in (0, 0.5).
    #[arg(long, default_value_t = 0.2)]
    pub alpha: f64,
    /// TW significance level; the threshold uses the (1 - beta) quantile.
    #[arg(long, default_value_t = 0.1)]
    pub beta: f64,
    /// Gaussian-broadening window half-width.
    #[arg(long = "window", default_value_t = 5)]
    pub window_a: usize,
    /// Gaussian-broadening outlier-exclusion rounds (0 disables exclusion).
    #[arg(long, default_value_t = 10)]
    pub max_rounds: usize,
    /// Replacement TW quantile table (CSV of `level,value`).
    #[arg(long)]
    pub tw_table: Option<PathBuf>,
}

impl FitFlags {
    pub fn config(&self) -> Result<rmt_spectre_core::AnalysisConfig, Failure> {
        let tw = match &self.tw_table {
            Some(path) => rmt_spectre_core::TwTable::from_csv_path(path)?,
            None => rmt_spectre_core::TwTable::embedded().clone(),
        };
        Ok(rmt_spectre_core::AnalysisConfig {
            alpha: self.alpha,
            beta: self.beta,
            window_a: self.window_a,
            max_rounds: self.max_rounds,
            tw,
        })
    }
}

/// A failed command, carrying its exit status.
#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Input(String),
    Numerical(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Input(_) => 2,
            Failure::Numerical(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Usage(m) | Failure::Input(m) | Failure::Numerical(m) => m,
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        if e.is_input_error() {
            Failure::Input(e.to_string())
        } else {
            Failure::Numerical(e.to_string())
        }
    }
}

pub fn io_failure(path: &std::path::Path, e: std::io::Error) -> Failure {
    Failure::Input(format!("{}: {e}", path.display()))
}

pub fn thread_pool(jobs: Option<usize>) -> Result<rayon::ThreadPool, Failure> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(j) = jobs {
        if j == 0 {
            return Err(Failure::Usage("--jobs must be at least 1".into()));
        }
        builder = builder.num_threads(j);
    }
    builder.build().map_err(|e| Failure::Numerical(format!("thread pool: {e}")))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    let result = match cli.command {
        Command::Analyze(args) => analyze::run(args),
        Command::Simulate(args) => simulate::run(args),
        Command::Lowrank(args) => lowrank::run(args),
    };
    match result {
        Ok(code) => code,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}
