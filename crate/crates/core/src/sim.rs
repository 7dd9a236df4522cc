//! Spiked-model generator and Monte Carlo comparison against the
//! asymptotic outlier location and overlap.

use faer::Mat;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::bgn::{self, AnalysisConfig};
use crate::error::{Error, Result};
use crate::fit::FitMethod;
use crate::matrix::{OrientedMatrix, Provenance};
use crate::svd;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseKind {
    #[default]
    Gaussian,
    /// Uniform entries with the same variance.
    Uniform,
}

impl std::str::FromStr for NoiseKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gaussian" => Ok(NoiseKind::Gaussian),
            "uniform" => Ok(NoiseKind::Uniform),
            other => Err(Error::InvalidArgument(format!("unknown noise kind `{other}`"))),
        }
    }
}

/// `W = Σ θ_i u_i v_iᵀ + noise`, noise entries i.i.d. with variance `σ²/n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpikedSpec {
    pub n: usize,
    pub m: usize,
    pub sigma: f64,
    /// Planted signal strengths, descending.
    pub thetas: Vec<f64>,
    pub seed: u64,
    #[serde(default)]
    pub noise: NoiseKind,
}

impl SpikedSpec {
    pub fn new(n: usize, m: usize, sigma: f64, thetas: Vec<f64>, seed: u64) -> Self {
        SpikedSpec { n, m, sigma, thetas, seed, noise: NoiseKind::Gaussian }
    }

    pub fn q(&self) -> f64 {
        self.m as f64 / self.n as f64
    }

    pub fn validate(&self) -> Result<()> {
        if self.m < 2 || self.n < self.m {
            return Err(Error::InvalidArgument(format!(
                "need n >= m >= 2, got n = {}, m = {}",
                self.n, self.m
            )));
        }
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(Error::InvalidArgument(format!("sigma must be positive, got {}", self.sigma)));
        }
        if self.thetas.len() >= self.m {
            return Err(Error::RankTooLarge { s: self.thetas.len(), m: self.m });
        }
        if self.thetas.iter().any(|t| !(t.is_finite() && *t >= 0.0)) {
            return Err(Error::InvalidArgument("thetas must be finite and non-negative".into()));
        }
        if !self.thetas.windows(2).all(|w| w[0] >= w[1]) {
            return Err(Error::InvalidArgument("thetas must be in descending order".into()));
        }
        Ok(())
    }
}

/// Planted signal: `left` is `n × s`, `right` is `m × s`, both orthonormal.
#[derive(Debug, Clone)]
pub struct PlantedSignal {
    pub thetas: Vec<f64>,
    pub left: Mat<f64>,
    pub right: Mat<f64>,
}

fn trial_rng(seed: u64, trial: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial);
    rng
}

fn orthonormal_frame(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Mat<f64> {
    if cols == 0 {
        return Mat::zeros(rows, 0);
    }
    let mut g = Mat::<f64>::zeros(rows, cols);
    for j in 0..cols {
        for i in 0..rows {
            g.write(i, j, StandardNormal.sample(rng));
        }
    }
    g.qr().compute_thin_q()
}

/// Draws the matrix for trial 0 of `spec`.
pub fn gen_spiked(spec: &SpikedSpec) -> Result<(OrientedMatrix, PlantedSignal)> {
    gen_spiked_trial(spec, 0)
}

/// Draws the matrix for a given trial; every trial owns its own RNG stream.
pub fn gen_spiked_trial(spec: &SpikedSpec, trial: u64) -> Result<(OrientedMatrix, PlantedSignal)> {
    spec.validate()?;
    let (n, m, s) = (spec.n, spec.m, spec.thetas.len());
    let mut rng = trial_rng(spec.seed, trial);
    let left = orthonormal_frame(&mut rng, n, s);
    let right = orthonormal_frame(&mut rng, m, s);

    let scale = spec.sigma / (n as f64).sqrt();
    let half_width = 3f64.sqrt() * scale;
    let mut w = Mat::<f64>::zeros(n, m);
    for j in 0..m {
        for i in 0..n {
            let e = match spec.noise {
                NoiseKind::Gaussian => {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    scale * z
                }
                NoiseKind::Uniform => rng.gen_range(-half_width..half_width),
            };
            w.write(i, j, e);
        }
    }
    if s > 0 {
        let scaled = Mat::from_fn(n, s, |i, k| left.read(i, k) * spec.thetas[k]);
        w += &scaled * right.transpose();
    }
    let source = Provenance { original_shape: vec![n, m], ..Provenance::default() };
    let matrix = OrientedMatrix::from_mat(w, source)?;
    Ok((matrix, PlantedSignal { thetas: spec.thetas.clone(), left, right }))
}

#[derive(Debug, Clone)]
pub struct McOptions {
    /// Also run the full analysis on each trial's spectrum.
    pub detect: Option<FitMethod>,
    pub config: AnalysisConfig,
    /// Residual tolerance of the partial SVD, relative to `γ₁`.
    pub tol: f64,
    pub max_steps: usize,
}

impl Default for McOptions {
    fn default() -> Self {
        McOptions { detect: None, config: AnalysisConfig::default(), tol: 1e-10, max_steps: 300 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialDetection {
    pub s_hat: usize,
    pub sigma_hat: f64,
    pub ave_w: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialOutcome {
    pub trial: u64,
    /// Leading singular values (at least one).
    pub gamma: Vec<f64>,
    /// `|⟨ũ_i, u_i⟩|²` for each planted direction (length-`n` vectors).
    pub overlaps: Vec<f64>,
    /// `|⟨ṽ_i, v_i⟩|²` (length-`m` vectors).
    pub right_overlaps: Vec<f64>,
    pub converged: bool,
    pub detection: Option<TrialDetection>,
}

/// One trial: draw, leading triplets, overlaps, optional detection.
pub fn run_trial(spec: &SpikedSpec, trial: u64, options: &McOptions) -> Result<TrialOutcome> {
    let (w, truth) = gen_spiked_trial(spec, trial)?;
    let s = truth.thetas.len();
    let k = s.max(1);
    let steps = options.max_steps.min(spec.m);
    let part = svd::top_singular_triplets(w.mat().as_ref(), k, options.tol, steps)?;
    if !part.converged {
        log::debug!("trial {trial}: partial SVD stopped after {} steps", part.steps);
    }
    let overlap = |a: &Mat<f64>, b: &Mat<f64>, i: usize| {
        let dot: f64 = (0..a.nrows()).map(|r| a.read(r, i) * b.read(r, i)).sum();
        dot * dot
    };
    let overlaps = (0..s).map(|i| overlap(&part.left, &truth.left, i)).collect();
    let right_overlaps = (0..s).map(|i| overlap(&part.right, &truth.right, i)).collect();
    let detection = match options.detect {
        Some(method) => {
            let gamma = svd::singular_values(&w)?;
            let report = bgn::analyze_values(&gamma, spec.n, spec.m, method, &options.config)?;
            Some(TrialDetection {
                s_hat: report.threshold.s_hat,
                sigma_hat: report.fit.sigma_hat,
                ave_w: report.ave_w,
            })
        }
        None => None,
    };
    Ok(TrialOutcome { trial, gamma: part.gamma, overlaps, right_overlaps, converged: part.converged, detection })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThetaRow {
    pub index: usize,
    pub theta: f64,
    /// Whether `θ > σ q^{1/4}`; below it the theory is the bulk edge and zero overlap.
    pub separates: bool,
    pub theory_rho: f64,
    /// Overlap limit used by the analysis; it describes the length-`m` vectors.
    pub theory_phi: f64,
    /// Overlap limit of the length-`n` vectors; equal to `theory_phi` when `n = m`.
    pub theory_phi_long: f64,
    pub mean_gamma: f64,
    pub mean_overlap: f64,
    pub sd_overlap: f64,
    pub mean_right_overlap: f64,
    pub gamma_deviation: f64,
    /// `|mean_overlap − theory_phi|`.
    pub overlap_deviation: f64,
    /// `|mean_overlap − theory_phi_long|`.
    pub long_overlap_deviation: f64,
    /// `|mean_right_overlap − theory_phi|`.
    pub right_overlap_deviation: f64,
}

/// Limit of `|⟨ũ, u⟩|²` for the length-`n` vectors at unit scale:
/// `1 − (q + θ²) / (θ²(θ² + 1))`.
pub fn long_side_overlap(theta: f64, q: f64) -> f64 {
    let t2 = theta * theta;
    1.0 - (q + t2) / (t2 * (t2 + 1.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McReport {
    pub spec: SpikedSpec,
    pub trials: usize,
    pub bulk_edge: f64,
    pub detection_threshold: f64,
    pub rows: Vec<ThetaRow>,
    /// Largest singular value of each trial.
    pub top_gamma: Vec<f64>,
    pub mean_top_gamma: f64,
    pub outcomes: Vec<TrialOutcome>,
}

impl McReport {
    /// Trials whose detection reported no spikes.
    pub fn null_detections(&self) -> usize {
        self.outcomes.iter().filter(|o| matches!(&o.detection, Some(d) if d.s_hat == 0)).count()
    }
}

/// Reduces trial outcomes (in trial order) into the comparison table.
pub fn summarize(spec: &SpikedSpec, mut outcomes: Vec<TrialOutcome>) -> Result<McReport> {
    spec.validate()?;
    if outcomes.is_empty() {
        return Err(Error::InvalidArgument("at least one trial is required".into()));
    }
    outcomes.sort_by_key(|o| o.trial);
    let (q, sigma) = (spec.q(), spec.sigma);
    let bulk_edge = sigma * (1.0 + q.sqrt());
    let floor = bgn::detection_threshold(q, sigma);
    let count = outcomes.len() as f64;
    let mut rows = Vec::with_capacity(spec.thetas.len());
    for (i, &theta) in spec.thetas.iter().enumerate() {
        let separates = theta > floor;
        let (theory_rho, theory_phi, theory_phi_long) = if separates {
            (bgn::rho(theta, q, sigma)?, bgn::phi(theta, q, sigma)?, long_side_overlap(theta / sigma, q).max(0.0))
        } else {
            (bulk_edge, 0.0, 0.0)
        };
        let mean_gamma = outcomes.iter().map(|o| o.gamma[i]).sum::<f64>() / count;
        let mean_overlap = outcomes.iter().map(|o| o.overlaps[i]).sum::<f64>() / count;
        let mean_right_overlap = outcomes.iter().map(|o| o.right_overlaps[i]).sum::<f64>() / count;
        let var = outcomes.iter().map(|o| (o.overlaps[i] - mean_overlap).powi(2)).sum::<f64>() / count;
        rows.push(ThetaRow {
            index: i + 1,
            theta,
            separates,
            theory_rho,
            theory_phi,
            theory_phi_long,
            mean_gamma,
            mean_overlap,
            sd_overlap: var.sqrt(),
            mean_right_overlap,
            gamma_deviation: (mean_gamma - theory_rho).abs(),
            overlap_deviation: (mean_overlap - theory_phi).abs(),
            long_overlap_deviation: (mean_overlap - theory_phi_long).abs(),
            right_overlap_deviation: (mean_right_overlap - theory_phi).abs(),
        });
    }
    let top_gamma: Vec<f64> = outcomes.iter().map(|o| o.gamma[0]).collect();
    let mean_top_gamma = top_gamma.iter().sum::<f64>() / count;
    Ok(McReport {
        spec: spec.clone(),
        trials: outcomes.len(),
        bulk_edge,
        detection_threshold: floor,
        rows,
        top_gamma,
        mean_top_gamma,
        outcomes,
    })
}

/// Runs `trials` independent draws sequentially and summarizes them.
pub fn mc_verify(spec: &SpikedSpec, trials: usize, options: &McOptions) -> Result<McReport> {
    spec.validate()?;
    if trials == 0 {
        return Err(Error::InvalidArgument("at least one trial is required".into()));
    }
    let outcomes = (0..trials as u64).map(|t| run_trial(spec, t, options)).collect::<Result<Vec<_>>>()?;
    summarize(spec, outcomes)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn validation() {
        assert!(SpikedSpec::new(100, 50, 1.0, vec![2.0, 1.0], 0).validate().is_ok());
        assert!(SpikedSpec::new(100, 3, 1.0, vec![3.0, 2.0, 1.0], 0).validate().is_err());
        assert!(SpikedSpec::new(100, 50, 1.0, vec![1.0, 2.0], 0).validate().is_err());
        assert!(SpikedSpec::new(100, 50, 1.0, vec![-1.0], 0).validate().is_err());
        assert!(SpikedSpec::new(100, 50, 0.0, vec![], 0).validate().is_err());
        assert!(SpikedSpec::new(50, 100, 1.0, vec![], 0).validate().is_err());
    }

    #[test]
    fn deterministic_and_stream_separated() {
        let spec = SpikedSpec::new(60, 30, 1.0, vec![3.0], 42);
        let (a, _) = gen_spiked(&spec).unwrap();
        let (b, _) = gen_spiked(&spec).unwrap();
        assert_eq!(a.mat(), b.mat());
        let (c, _) = gen_spiked_trial(&spec, 1).unwrap();
        assert_ne!(a.mat(), c.mat());
        let other = SpikedSpec { seed: 43, ..spec.clone() };
        assert_ne!(gen_spiked(&other).unwrap().0.mat(), a.mat());
    }

    #[test]
    fn planted_frames_are_orthonormal() {
        let spec = SpikedSpec::new(200, 80, 1.0, vec![5.0, 4.0, 3.0, 2.0], 9);
        let (_, truth) = gen_spiked(&spec).unwrap();
        for frame in [&truth.left, &truth.right] {
            let gram = frame.transpose() * frame;
            for i in 0..4 {
                for j in 0..4 {
                    let want = if i == j { 1.0 } else { 0.0 };
                    assert!((gram.read(i, j) - want).abs() <= 1e-12);
                }
            }
        }
    }

    #[test]
    fn noise_has_target_variance() {
        for noise in [NoiseKind::Gaussian, NoiseKind::Uniform] {
            let spec = SpikedSpec { noise, ..SpikedSpec::new(400, 200, 2.0, vec![], 3) };
            let (w, _) = gen_spiked(&spec).unwrap();
            let mean_sq = w.frobenius_norm().powi(2) / (400.0 * 200.0);
            let want = 4.0 / 400.0;
            assert!((mean_sq / want - 1.0).abs() < 0.02, "{noise:?}: {mean_sq}");
        }
    }

    #[test]
    fn pure_noise_top_value_near_edge() {
        let spec = SpikedSpec::new(1000, 500, 1.0, vec![], 5);
        let report = mc_verify(&spec, 2, &McOptions::default()).unwrap();
        assert!(report.rows.is_empty());
        let edge = 1.0 + 0.5f64.sqrt();
        assert!((report.mean_top_gamma - edge).abs() < 0.05, "{}", report.mean_top_gamma);
    }

    #[test]
    fn strong_spike_matches_theory() {
        let spec = SpikedSpec::new(1000, 1000, 1.0, vec![2.0], 11);
        let report = mc_verify(&spec, 2, &McOptions::default()).unwrap();
        let row = &report.rows[0];
        assert!(row.separates);
        assert!((row.theory_rho - 2.5).abs() < 1e-9);
        assert!((row.theory_phi - 0.75).abs() < 1e-6);
        assert!(row.gamma_deviation < 0.05, "{row:?}");
        assert!(row.overlap_deviation < 0.06, "{row:?}");
        assert_eq!(row.theory_phi_long, row.theory_phi);
    }

    #[test]
    fn rectangular_overlaps_split_by_side() {
        let spec = SpikedSpec::new(1600, 800, 1.0, vec![2.0], 3);
        let report = mc_verify(&spec, 2, &McOptions::default()).unwrap();
        let row = &report.rows[0];
        assert!((row.theory_phi - 0.8611).abs() < 1e-4);
        assert!((row.theory_phi_long - 0.775).abs() < 1e-12);
        assert!(row.long_overlap_deviation < 0.02, "{row:?}");
        assert!(row.right_overlap_deviation < 0.02, "{row:?}");
    }

    #[test]
    fn summary_is_order_independent() {
        let spec = SpikedSpec::new(200, 100, 1.0, vec![2.5], 1);
        let opts = McOptions::default();
        let outs: Vec<_> = (0..3).map(|t| run_trial(&spec, t, &opts).unwrap()).collect();
        let mut rev = outs.clone();
        rev.reverse();
        assert_eq!(summarize(&spec, outs).unwrap(), summarize(&spec, rev).unwrap());
    }
}
