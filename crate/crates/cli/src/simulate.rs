use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, ValueEnum};
use rayon::prelude::*;
use serde::Serialize;

use rmt_spectre_core::io::write_npy;
use rmt_spectre_core::sim::{self, McOptions, McReport, NoiseKind, SpikedSpec};
use rmt_spectre_core::FitMethod;

use crate::analyze::{tool, Tool, SCHEMA_VERSION};
use crate::output::{self, num, opt, Csv};
use crate::{thread_pool, Failure, FitFlags};

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum NoiseChoice {
    Gaussian,
    Uniform,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum DetectChoice {
    Bema,
    Gb,
}

/// Monte Carlo study of planted spikes against their predicted limits.
///
/// Writes into the output directory:
///   simulate.json  settings and the full comparison
///   simulate.csv   index,theta,separates,theory_rho,mean_gamma,gamma_deviation,
///                  theory_phi,mean_overlap,overlap_deviation,theory_phi_long,
///                  long_overlap_deviation,mean_right_overlap,right_overlap_deviation
///   trials.csv     trial,gamma_1,converged,s_hat,sigma_hat,ave_w
#[derive(Args, Debug)]
#[command(verbatim_doc_comment)]
pub struct SimulateArgs {
    /// Rows (the longer side).
    #[arg(long)]
    pub n: usize,
    /// Columns.
    #[arg(long)]
    pub m: usize,
    /// Noise scale; entries have variance sigma^2 / n.
    #[arg(long, default_value_t = 1.0)]
    pub sigma: f64,
    /// Comma-separated planted strengths in descending order; empty for pure noise.
    #[arg(long, default_value = "", allow_hyphen_values = true)]
    pub thetas: String,
    #[arg(long, default_value_t = 20)]
    pub trials: usize,
    /// RNG seed [default: 0].
    #[arg(long, env = "RMT_SPECTRE_SEED")]
    pub seed: Option<u64>,
    #[arg(long, value_enum, default_value = "gaussian")]
    pub noise: NoiseChoice,
    /// Also run the detection pipeline on every trial.
    #[arg(long, value_enum)]
    pub detect: Option<DetectChoice>,
    #[command(flatten)]
    pub fit: FitFlags,
    /// Save the trial-0 matrix as NPY.
    #[arg(long)]
    pub save_matrix: Option<PathBuf>,
    #[arg(long, short, default_value = "rmt-spectre-sim")]
    pub out: PathBuf,
    /// Trials run concurrently (default: all cores).
    #[arg(long, short)]
    pub jobs: Option<usize>,
}

#[derive(Debug, Serialize)]
struct Settings {
    trials: usize,
    seed: u64,
    detect: Option<FitMethod>,
    alpha: f64,
    beta: f64,
    window_a: usize,
    max_rounds: usize,
    partial_svd_tol: f64,
    partial_svd_max_steps: usize,
}

#[derive(Debug, Serialize)]
struct SimulationReport<'a> {
    schema_version: &'static str,
    tool: Tool,
    command: &'static str,
    settings: Settings,
    result: &'a McReport,
}

fn parse_thetas(text: &str) -> Result<Vec<f64>, Failure> {
    text.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<f64>().map_err(|_| Failure::Usage(format!("--thetas: `{s}` is not a number"))))
        .collect()
}

pub fn run(args: SimulateArgs) -> Result<ExitCode, Failure> {
    if args.trials == 0 {
        return Err(Failure::Usage("--trials must be at least 1".into()));
    }
    let seed = args.seed.unwrap_or(0);
    let spec = SpikedSpec {
        n: args.n,
        m: args.m,
        sigma: args.sigma,
        thetas: parse_thetas(&args.thetas)?,
        seed,
        noise: match args.noise {
            NoiseChoice::Gaussian => NoiseKind::Gaussian,
            NoiseChoice::Uniform => NoiseKind::Uniform,
        },
    };
    spec.validate()?;
    let detect = args.detect.map(|d| match d {
        DetectChoice::Bema => FitMethod::Bema,
        DetectChoice::Gb => FitMethod::Gb,
    });
    let options = McOptions { detect, config: args.fit.config()?, ..McOptions::default() };

    if let Some(path) = &args.save_matrix {
        let (w, _) = sim::gen_spiked(&spec)?;
        let mat = w.mat();
        let mut data = Vec::with_capacity(spec.n * spec.m);
        for i in 0..spec.n {
            for j in 0..spec.m {
                data.push(mat.read(i, j));
            }
        }
        write_npy(path, &[spec.n, spec.m], &data)?;
    }

    let pool = thread_pool(args.jobs)?;
    let outcomes = pool.install(|| {
        (0..args.trials as u64)
            .into_par_iter()
            .map(|t| sim::run_trial(&spec, t, &options))
            .collect::<Result<Vec<_>, _>>()
    })?;
    let result = sim::summarize(&spec, outcomes)?;

    std::fs::create_dir_all(&args.out).map_err(|e| crate::io_failure(&args.out, e))?;
    let report = SimulationReport {
        schema_version: SCHEMA_VERSION,
        tool: tool(),
        command: "simulate",
        settings: Settings {
            trials: args.trials,
            seed,
            detect,
            alpha: options.config.alpha,
            beta: options.config.beta,
            window_a: options.config.window_a,
            max_rounds: options.config.max_rounds,
            partial_svd_tol: options.tol,
            partial_svd_max_steps: options.max_steps,
        },
        result: &result,
    };
    output::write_json(&args.out.join("simulate.json"), &report)?;

    let mut csv = Csv::new(&[
        "index",
        "theta",
        "separates",
        "theory_rho",
        "mean_gamma",
        "gamma_deviation",
        "theory_phi",
        "mean_overlap",
        "overlap_deviation",
        "theory_phi_long",
        "long_overlap_deviation",
        "mean_right_overlap",
        "right_overlap_deviation",
    ]);
    for r in &result.rows {
        csv.row(&[
            r.index.to_string(),
            num(r.theta),
            r.separates.to_string(),
            num(r.theory_rho),
            num(r.mean_gamma),
            num(r.gamma_deviation),
            num(r.theory_phi),
            num(r.mean_overlap),
            num(r.overlap_deviation),
            num(r.theory_phi_long),
            num(r.long_overlap_deviation),
            num(r.mean_right_overlap),
            num(r.right_overlap_deviation),
        ]);
    }
    csv.write(&args.out.join("simulate.csv"))?;

    let mut csv = Csv::new(&["trial", "gamma_1", "converged", "s_hat", "sigma_hat", "ave_w"]);
    for o in &result.outcomes {
        let d = o.detection.as_ref();
        csv.row(&[
            o.trial.to_string(),
            num(o.gamma[0]),
            o.converged.to_string(),
            d.map(|d| d.s_hat.to_string()).unwrap_or_default(),
            opt(d.map(|d| d.sigma_hat)),
            opt(d.and_then(|d| d.ave_w)),
        ]);
    }
    csv.write(&args.out.join("trials.csv"))?;

    println!(
        "n={} m={} sigma={} trials={} seed={} bulk_edge={} detection_threshold={}",
        spec.n, spec.m, spec.sigma, result.trials, seed, result.bulk_edge, result.detection_threshold
    );
    println!("mean gamma_1={}", result.mean_top_gamma);
    for r in &result.rows {
        println!(
            "theta_{}={} rho={} mean_gamma={} phi={} mean_overlap={} (length-n limit {}, length-m overlap {})",
            r.index, r.theta, r.theory_rho, r.mean_gamma, r.theory_phi, r.mean_overlap, r.theory_phi_long, r.mean_right_overlap
        );
    }
    if detect.is_some() {
        println!("trials with s_hat=0: {}/{}", result.null_detections(), result.trials);
    }
    Ok(ExitCode::SUCCESS)
}
