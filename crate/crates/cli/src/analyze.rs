use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::Args;
use rayon::prelude::*;
use serde::Serialize;

use rmt_spectre_core::bgn::{self, SweepPoint};
use rmt_spectre_core::io::{self, Manifest, ManifestEntry};
use rmt_spectre_core::svd::singular_values;
use rmt_spectre_core::{
    AnalysisConfig, Error, FitMethod, MpFit, OrientedMatrix, Provenance, ReshapeMode, Spike, ThresholdResult,
};

use crate::output::{self, histogram, num, opt, Csv, Histogram};
use crate::{thread_pool, Failure, FitFlags, MethodChoice, ReshapeChoice};

pub const SCHEMA_VERSION: &str = "1.0.0";

/// Fit the MP bulk, threshold the spectrum and score the spikes.
///
/// Inputs are `.npy`/`.csv` matrices or `.json` layer manifests. Writes
/// `report.json` plus, per matrix, into the output directory:
///   <name>.hist.csv     bin_lo,bin_hi,count,density
///   <name>.density.csv  x,<one MP density column per method>
///   <name>.spikes.csv   method,index,gamma,theta_hat,phi_hat,phi_closed_form_rescaled
///   <name>.sweep.csv    method,s,gamma_plus,ave_w   (with --sweep)
#[derive(Args, Debug)]
#[command(verbatim_doc_comment)]
pub struct AnalyzeArgs {
    /// Matrix files or layer manifests.
    #[arg(required = true)]
    pub inputs: Vec<PathBuf>,
    #[arg(long, value_enum, default_value = "both")]
    pub method: MethodChoice,
    #[command(flatten)]
    pub fit: FitFlags,
    /// Flattening of 4-D convolution kernels.
    #[arg(long, value_enum, default_value = "out-by-rest")]
    pub reshape: ReshapeChoice,
    /// Only analyze the manifest layer with this name.
    #[arg(long)]
    pub layer: Option<String>,
    /// Ave_w sweep over the top fraction of singular values (e.g. 0.2).
    #[arg(long)]
    pub sweep: Option<f64>,
    /// Histogram bin count.
    #[arg(long, default_value_t = 100)]
    pub bins: usize,
    /// Number of MP density samples per fit.
    #[arg(long, default_value_t = 400)]
    pub density_points: usize,
    /// Output directory.
    #[arg(long, short, default_value = "rmt-spectre-out")]
    pub out: PathBuf,
    /// Matrices analyzed concurrently (default: all cores).
    #[arg(long, short)]
    pub jobs: Option<usize>,
}

#[derive(Debug, Serialize)]
pub struct Tool {
    pub name: &'static str,
    pub version: &'static str,
}

pub fn tool() -> Tool {
    Tool { name: env!("CARGO_PKG_NAME"), version: env!("CARGO_PKG_VERSION") }
}

#[derive(Debug, Serialize)]
struct Settings {
    methods: Vec<FitMethod>,
    alpha: f64,
    beta: f64,
    window_a: usize,
    max_rounds: usize,
    reshape: ReshapeMode,
    tw_order: u8,
    tw_table: String,
    tw_quantile: f64,
    bins: usize,
    density_points: usize,
    sweep_fraction: Option<f64>,
}

#[derive(Debug, Serialize)]
struct Report {
    schema_version: &'static str,
    tool: Tool,
    command: &'static str,
    settings: Settings,
    entries: Vec<Entry>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ErrorInfo {
    pub kind: &'static str,
    pub message: String,
}

impl From<&Error> for ErrorInfo {
    fn from(e: &Error) -> Self {
        ErrorInfo { kind: if e.is_input_error() { "input" } else { "numerical" }, message: e.to_string() }
    }
}

#[derive(Debug, Serialize)]
struct MethodAnalysis {
    method: FitMethod,
    status: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<ErrorInfo>,
    #[serde(skip_serializing_if = "Option::is_none")]
    fit: Option<MpFit>,
    #[serde(skip_serializing_if = "Option::is_none")]
    threshold: Option<ThresholdResult>,
    #[serde(skip_serializing_if = "Option::is_none")]
    spikes: Option<Vec<Spike>>,
    /// Null when no spike survives the threshold.
    #[serde(skip_serializing_if = "Option::is_none")]
    ave_w: Option<Option<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    excluded: Option<Vec<usize>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    sweep: Option<Vec<SweepPoint>>,
}

#[derive(Debug, Serialize)]
struct DensityCurve {
    method: FitMethod,
    sigma_hat: f64,
    values: Vec<f64>,
}

#[derive(Debug, Serialize)]
struct DensitySamples {
    x: Vec<f64>,
    curves: Vec<DensityCurve>,
}

#[derive(Debug, Serialize)]
struct Entry {
    name: String,
    status: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<ErrorInfo>,
    #[serde(skip_serializing_if = "Option::is_none")]
    provenance: Option<Provenance>,
    #[serde(skip_serializing_if = "Option::is_none")]
    n: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    m: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    q: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    frobenius_norm: Option<f64>,
    analyses: Vec<MethodAnalysis>,
    #[serde(skip_serializing_if = "Option::is_none")]
    histogram: Option<Histogram>,
    #[serde(skip_serializing_if = "Option::is_none")]
    density: Option<DensitySamples>,
    files: BTreeMap<String, String>,
}

impl Entry {
    fn failed(name: String, error: ErrorInfo) -> Self {
        Entry {
            name,
            status: "error",
            error: Some(error),
            provenance: None,
            n: None,
            m: None,
            q: None,
            frobenius_norm: None,
            analyses: Vec::new(),
            histogram: None,
            density: None,
            files: BTreeMap::new(),
        }
    }
}

enum Source {
    File(PathBuf),
    Layer(Manifest, ManifestEntry),
    Broken(ErrorInfo),
}

struct Job {
    name: String,
    source: Source,
}

impl Job {
    fn load(&self, mode: ReshapeMode, layer: Option<&str>) -> Result<OrientedMatrix, ErrorInfo> {
        let loaded = match &self.source {
            Source::File(path) => io::load_matrix(path, layer, mode),
            Source::Layer(manifest, entry) => manifest.load_entry(entry, mode),
            Source::Broken(info) => return Err(info.clone()),
        };
        loaded.map_err(|e| ErrorInfo::from(&e))
    }
}

fn stem(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| path.display().to_string())
}

fn expand(inputs: &[PathBuf], layer: Option<&str>) -> Vec<Job> {
    let mut jobs = Vec::new();
    for path in inputs {
        let is_manifest = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"));
        if !is_manifest {
            jobs.push(Job { name: stem(path), source: Source::File(path.clone()) });
            continue;
        }
        match Manifest::load(path) {
            Ok(manifest) => {
                let selected: Vec<ManifestEntry> =
                    manifest.entries.iter().filter(|e| layer.map_or(true, |l| e.name == l)).cloned().collect();
                if selected.is_empty() {
                    let e = Error::Manifest(format!("{}: no matching layers", path.display()));
                    jobs.push(Job { name: stem(path), source: Source::Broken((&e).into()) });
                }
                for entry in selected {
                    jobs.push(Job { name: entry.name.clone(), source: Source::Layer(manifest.clone(), entry) });
                }
            }
            Err(e) => jobs.push(Job { name: stem(path), source: Source::Broken((&e).into()) }),
        }
    }
    jobs
}

struct Options<'a> {
    methods: &'a [FitMethod],
    config: &'a AnalysisConfig,
    reshape: ReshapeMode,
    layer: Option<&'a str>,
    sweep: Option<f64>,
    bins: usize,
    density_points: usize,
}

fn analyze_job(job: &Job, opts: &Options) -> Entry {
    let w = match job.load(opts.reshape, opts.layer) {
        Ok(w) => w,
        Err(info) => return Entry::failed(job.name.clone(), info),
    };
    let (n, m) = (w.nrows(), w.ncols());
    let gamma = match singular_values(&w) {
        Ok(g) => g,
        Err(e) => return Entry::failed(job.name.clone(), (&e).into()),
    };
    let analyses: Vec<MethodAnalysis> = opts
        .methods
        .iter()
        .map(|&method| analyze_method(&gamma, n, m, method, opts))
        .collect();

    let top = gamma[0];
    let reach = analyses
        .iter()
        .filter_map(|a| a.fit.as_ref())
        .map(|f| f.sigma_hat * (1.0 + f.q.sqrt()))
        .fold(top, f64::max)
        * 1.05;
    let points = opts.density_points.max(2);
    let x: Vec<f64> = (0..points).map(|i| reach * i as f64 / (points - 1) as f64).collect();
    let curves = analyses
        .iter()
        .filter_map(|a| a.fit.as_ref())
        .filter_map(|f| {
            let p = f.params().ok()?;
            Some(DensityCurve { method: f.method, sigma_hat: f.sigma_hat, values: x.iter().map(|&v| p.density(v)).collect() })
        })
        .collect();

    Entry {
        name: job.name.clone(),
        status: if analyses.iter().all(|a| a.error.is_none()) { "ok" } else { "error" },
        error: None,
        provenance: Some(w.source().clone()),
        n: Some(n),
        m: Some(m),
        q: Some(w.aspect_ratio()),
        frobenius_norm: Some(gamma.iter().map(|g| g * g).sum::<f64>().sqrt()),
        histogram: Some(histogram(&gamma, opts.bins.max(1))),
        density: Some(DensitySamples { x, curves }),
        analyses,
        files: BTreeMap::new(),
    }
}

fn analyze_method(gamma: &[f64], n: usize, m: usize, method: FitMethod, opts: &Options) -> MethodAnalysis {
    let failed = |e: &Error| MethodAnalysis {
        method,
        status: "error",
        error: Some(e.into()),
        fit: None,
        threshold: None,
        spikes: None,
        ave_w: None,
        excluded: None,
        sweep: None,
    };
    let report = match bgn::analyze_values(gamma, n, m, method, opts.config) {
        Ok(r) => r,
        Err(e) => return failed(&e),
    };
    let sweep = match opts.sweep {
        Some(frac) => {
            let k = (frac * m as f64).floor() as usize;
            match bgn::sweep(gamma, &report.fit, k) {
                Ok(points) => Some(points),
                Err(e) => return failed(&e),
            }
        }
        None => None,
    };
    MethodAnalysis {
        method,
        status: "ok",
        error: None,
        fit: Some(report.fit),
        threshold: Some(report.threshold),
        spikes: Some(report.spikes),
        ave_w: Some(report.ave_w),
        excluded: Some(report.excluded),
        sweep,
    }
}

fn write_entry_files(dir: &Path, slug: &str, entry: &mut Entry) -> Result<(), Failure> {
    let (Some(hist), Some(density), Some(m)) = (&entry.histogram, &entry.density, entry.m) else {
        return Ok(());
    };
    let mut files = BTreeMap::new();

    let mut csv = Csv::new(&["bin_lo", "bin_hi", "count", "density"]);
    for (i, &c) in hist.counts.iter().enumerate() {
        let (lo, hi) = (hist.edges[i], hist.edges[i + 1]);
        csv.row(&[num(lo), num(hi), c.to_string(), num(c as f64 / (m as f64 * (hi - lo)))]);
    }
    let name = format!("{slug}.hist.csv");
    csv.write(&dir.join(&name))?;
    files.insert("histogram".to_string(), name);

    let mut header = vec!["x".to_string()];
    header.extend(density.curves.iter().map(|c| c.method.as_str().to_string()));
    let mut csv = Csv::new(&header.iter().map(String::as_str).collect::<Vec<_>>());
    for (i, &x) in density.x.iter().enumerate() {
        let mut row = vec![num(x)];
        row.extend(density.curves.iter().map(|c| num(c.values[i])));
        csv.row(&row);
    }
    let name = format!("{slug}.density.csv");
    csv.write(&dir.join(&name))?;
    files.insert("density".to_string(), name);

    let mut csv = Csv::new(&["method", "index", "gamma", "theta_hat", "phi_hat", "phi_closed_form_rescaled"]);
    for a in &entry.analyses {
        for s in a.spikes.iter().flatten() {
            csv.row(&[
                a.method.to_string(),
                s.index.to_string(),
                num(s.gamma),
                num(s.theta_hat),
                num(s.phi_hat),
                num(s.phi_closed_form_rescaled),
            ]);
        }
    }
    let name = format!("{slug}.spikes.csv");
    csv.write(&dir.join(&name))?;
    files.insert("spikes".to_string(), name);

    if entry.analyses.iter().any(|a| a.sweep.is_some()) {
        let mut csv = Csv::new(&["method", "s", "gamma_plus", "ave_w"]);
        for a in &entry.analyses {
            for p in a.sweep.iter().flatten() {
                csv.row(&[a.method.to_string(), p.s.to_string(), num(p.gamma_plus), opt(p.ave_w)]);
            }
        }
        let name = format!("{slug}.sweep.csv");
        csv.write(&dir.join(&name))?;
        files.insert("sweep".to_string(), name);
    }
    entry.files = files;
    Ok(())
}

pub fn run(args: AnalyzeArgs) -> Result<ExitCode, Failure> {
    if let Some(f) = args.sweep {
        if !(f > 0.0 && f <= 1.0) {
            return Err(Failure::Usage(format!("--sweep takes a fraction in (0, 1], got {f}")));
        }
    }
    if args.bins == 0 {
        return Err(Failure::Usage("--bins must be at least 1".into()));
    }
    let config = args.fit.config()?;
    let t = config.tw.quantile(1.0 - config.beta)?;
    let methods = args.method.methods();
    let opts = Options {
        methods: &methods,
        config: &config,
        reshape: args.reshape.into(),
        layer: args.layer.as_deref(),
        sweep: args.sweep,
        bins: args.bins,
        density_points: args.density_points,
    };
    let jobs = expand(&args.inputs, opts.layer);
    let pool = thread_pool(args.jobs)?;
    // collect keeps input order whatever the scheduling
    let mut entries: Vec<Entry> = pool.install(|| jobs.par_iter().map(|job| analyze_job(job, &opts)).collect());

    std::fs::create_dir_all(&args.out).map_err(|e| crate::io_failure(&args.out, e))?;
    let slugs = output::unique_slugs(&entries.iter().map(|e| e.name.clone()).collect::<Vec<_>>());
    for (entry, slug) in entries.iter_mut().zip(&slugs) {
        write_entry_files(&args.out, slug, entry)?;
    }

    let report = Report {
        schema_version: SCHEMA_VERSION,
        tool: tool(),
        command: "analyze",
        settings: Settings {
            methods: methods.clone(),
            alpha: config.alpha,
            beta: config.beta,
            window_a: config.window_a,
            max_rounds: config.max_rounds,
            reshape: args.reshape.into(),
            tw_order: 1,
            tw_table: args.fit.tw_table.as_ref().map_or("embedded".into(), |p| p.display().to_string()),
            tw_quantile: t,
            bins: args.bins,
            density_points: args.density_points,
            sweep_fraction: args.sweep,
        },
        entries,
    };
    let report_path = args.out.join("report.json");
    output::write_json(&report_path, &report)?;

    for entry in &report.entries {
        if let Some(err) = &entry.error {
            println!("{}: {} error: {}", entry.name, err.kind, err.message);
            continue;
        }
        for a in &entry.analyses {
            match (&a.fit, &a.threshold, &a.error) {
                (Some(fit), Some(th), _) => println!(
                    "{} [{}] sigma_hat={} gamma_plus_sq={} s_hat={} ave_w={}",
                    entry.name,
                    a.method,
                    fit.sigma_hat,
                    th.gamma_plus_sq,
                    th.s_hat,
                    a.ave_w.flatten().map_or("null".to_string(), |v| v.to_string())
                ),
                (_, _, Some(err)) => println!("{} [{}] {} error: {}", entry.name, a.method, err.kind, err.message),
                _ => {}
            }
        }
    }
    println!("report: {}", report_path.display());

    let errors: Vec<&ErrorInfo> = report
        .entries
        .iter()
        .flat_map(|e| e.error.iter().chain(e.analyses.iter().filter_map(|a| a.error.as_ref())))
        .collect();
    Ok(if errors.is_empty() {
        ExitCode::SUCCESS
    } else if errors.iter().any(|e| e.kind == "input") {
        ExitCode::from(2)
    } else {
        ExitCode::from(3)
    })
}
