use std::path::PathBuf;
use std::process::ExitCode;
use std::str::FromStr;

use clap::{Args, ValueEnum};

use rmt_spectre_core::bgn;
use rmt_spectre_core::io::load_matrix;
use rmt_spectre_core::lowrank::{truncate, write_factors};
use rmt_spectre_core::svd::svd;
use rmt_spectre_core::FitMethod;

use crate::{Failure, FitFlags, ReshapeChoice};

#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum Rank {
    Fixed(usize),
    Auto,
}

impl FromStr for Rank {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "auto" => Ok(Rank::Auto),
            _ => match s.parse::<usize>() {
                Ok(0) => Err("rank 0 would discard the whole matrix; use a positive rank or `auto`".into()),
                Ok(k) => Ok(Rank::Fixed(k)),
                Err(_) => Err(format!("expected a positive integer or `auto`, got `{s}`")),
            },
        }
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum LowrankMethod {
    Bema,
    Gb,
}

/// Rank-s factorization W ≈ L·R with the singular values folded into L.
///
/// Writes <stem>.left.npy (n x s), <stem>.right.npy (s x m) and <stem>.json,
/// which records the convention, s, the residual and the parameter counts.
#[derive(Args, Debug)]
#[command(verbatim_doc_comment)]
pub struct LowrankArgs {
    /// Matrix file, or manifest with --layer.
    pub input: PathBuf,
    /// Retained rank, or `auto` for the detected spike count.
    #[arg(long)]
    pub rank: Rank,
    /// Fit used by `--rank auto`.
    #[arg(long, value_enum, default_value = "bema")]
    pub method: LowrankMethod,
    #[command(flatten)]
    pub fit: FitFlags,
    #[arg(long, value_enum, default_value = "out-by-rest")]
    pub reshape: ReshapeChoice,
    #[arg(long)]
    pub layer: Option<String>,
    #[arg(long, short, default_value = "rmt-spectre-lowrank")]
    pub out: PathBuf,
}

pub fn run(args: LowrankArgs) -> Result<ExitCode, Failure> {
    let w = load_matrix(&args.input, args.layer.as_deref(), args.reshape.into())?;
    let spectrum = svd(&w)?;
    let method = match args.method {
        LowrankMethod::Bema => FitMethod::Bema,
        LowrankMethod::Gb => FitMethod::Gb,
    };
    let (s, used) = match args.rank {
        Rank::Fixed(s) => (s, None),
        Rank::Auto => {
            let report = bgn::analyze_values(&spectrum.gamma, spectrum.n, spectrum.m, method, &args.fit.config()?)?;
            let s_hat = report.threshold.s_hat;
            if s_hat == 0 {
                return Err(Failure::Input(format!(
                    "no singular value exceeds the {method} threshold (gamma_plus = {}); nothing to keep",
                    report.threshold.gamma_plus
                )));
            }
            (s_hat, Some(method.as_str()))
        }
    };
    let factors = truncate(&spectrum, s)?;
    let stem = args
        .layer
        .clone()
        .or_else(|| args.input.file_stem().map(|s| s.to_string_lossy().into_owned()))
        .unwrap_or_else(|| "matrix".into());
    let written = write_factors(&args.out, &crate::output::slug(&stem), &factors, &spectrum, used)?;
    let savings = written.meta.savings;
    println!("rank {s} of {}x{}", spectrum.n, spectrum.m);
    println!(
        "parameters: {} -> {} ({})",
        savings.original,
        savings.factored,
        if savings.saves { "saves" } else { "no saving" }
    );
    println!("residual frobenius norm: {}", factors.recon_error);
    println!("sidecar: {}", written.sidecar.display());
    Ok(ExitCode::SUCCESS)
}
