//! Spike detection and the weighted cosine-similarity score.
//!
//! Given a spectrum `γ_1 ≥ … ≥ γ_m` of an `n × m` matrix and a fitted MP
//! scale `σ̂`:
//!
//! 1. `γ₊² = σ̂²[(1+√q)² + t_{1−β} n^{−2/3} q^{−1/6} (1+√q)^{4/3}]` and
//!    `ŝ = #{k : γ_k² > γ₊²}`.
//! 2. Each spike's signal strength is recovered by inverting the outlier
//!    location map, `θ̂_i = (σ/√2)·√(r + √(r² − 4q))` with `r = (γ_i/σ)² − q − 1`.
//! 3. The limiting squared overlap of observed and signal left singular
//!    vectors is `φ_i = −2 h(ρ_i) / (θ_i² D′(ρ_i))`, where
//!    `D(z) = [z² − σ²(q+1) − √((z² − σ²(q+1))² − 4σ⁴q)] / (2σ⁴q)`,
//!    `h(z) = ∫ z/(z² − t²) g(t) dt` and `ρ_i = D⁻¹(1/θ_i²)`.
//! 4. `Ave_w(φ) = Σ φ_i(γ_i − γ₊) / Σ (γ_i − γ₊)`.
//!
//! Spikes only separate from the bulk when `θ > σ q^{1/4}`; below that the
//! overlap limit is zero.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fit::{self, FitMethod, MpFit};
use crate::matrix::Provenance;
use crate::mp::MpParams;
use crate::numerics;
use crate::svd::SingularSpectrum;
use crate::tw::TwTable;

/// Threshold `γ₊²` with the TW finite-size correction.
pub fn threshold(sigma: f64, q: f64, n: usize, t: f64) -> Result<f64> {
    MpParams::new(sigma, q)?;
    if n < 2 {
        return Err(Error::InvalidArgument(format!("row count must be at least 2, got {n}")));
    }
    if !t.is_finite() {
        return Err(Error::InvalidArgument(format!("TW quantile must be finite, got {t}")));
    }
    let edge = 1.0 + q.sqrt();
    let correction = t * (n as f64).powf(-2.0 / 3.0) * q.powf(-1.0 / 6.0) * edge.powf(4.0 / 3.0);
    Ok(sigma * sigma * (edge * edge + correction))
}

/// Number of singular values with `γ_k² > γ₊²` (strict).
pub fn count_spikes(gamma: &[f64], gamma_plus_sq: f64) -> usize {
    gamma.iter().take_while(|&&g| g * g > gamma_plus_sq).count()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdResult {
    pub gamma_plus_sq: f64,
    pub gamma_plus: f64,
    /// `t_{1−β}` used.
    pub t: f64,
    pub s_hat: usize,
    pub sigma_hat: f64,
    pub q: f64,
    pub n: usize,
    pub beta: f64,
}

/// Minimum signal strength `σ q^{1/4}` for a spike to leave the bulk.
pub fn detection_threshold(q: f64, sigma: f64) -> f64 {
    sigma * q.powf(0.25)
}

/// Signal strength implied by an outlier singular value `γ > σ(1+√q)`.
pub fn theta_hat(gamma: f64, q: f64, sigma: f64) -> Result<f64> {
    let p = MpParams::new(sigma, q)?;
    let edge = p.x_max();
    if !(gamma > edge) {
        return Err(Error::InsideBulk { gamma, edge });
    }
    let x = gamma / sigma;
    let sq = q.sqrt();
    let r = x * x - q - 1.0;
    // r² − 4q factored as (x² − (1+√q)²)(x² − (1−√q)²) to keep precision near the edge
    let disc = (x - 1.0 - sq) * (x + 1.0 + sq) * (x * x - (1.0 - sq) * (1.0 - sq));
    Ok(sigma / std::f64::consts::SQRT_2 * (r + disc.max(0.0).sqrt()).sqrt())
}

// w = z² − σ²(q+1) and R = √(w² − 4σ⁴q), for z above the bulk edge.
fn d_parts(z: f64, q: f64, sigma: f64) -> (f64, f64) {
    let s2 = sigma * sigma;
    let sq = q.sqrt();
    let w = z * z - s2 * (q + 1.0);
    let hi = s2 * (1.0 + sq) * (1.0 + sq);
    let lo = s2 * (1.0 - sq) * (1.0 - sq);
    let r = ((z * z - hi) * (z * z - lo)).max(0.0).sqrt();
    (w, r)
}

/// `D(z)` for `z ≥ σ(1+√q)`, evaluated as `2/(w + R)`, which equals
/// `(w − R)/(2σ⁴q)` without the cancellation for large `z`.
pub fn d_transform(z: f64, q: f64, sigma: f64) -> f64 {
    let (w, r) = d_parts(z, q, sigma);
    2.0 / (w + r)
}

/// Analytic `D′(z) = −4z / (R (w + R))`.
pub fn d_transform_derivative(z: f64, q: f64, sigma: f64) -> f64 {
    let (w, r) = d_parts(z, q, sigma);
    -4.0 * z / (r * (w + r))
}

/// `ρ = D⁻¹(1/θ²)`, the limiting location of the outlier produced by a
/// signal of strength `θ > σ q^{1/4}`.
pub fn rho(theta: f64, q: f64, sigma: f64) -> Result<f64> {
    let p = MpParams::new(sigma, q)?;
    let floor = detection_threshold(q, sigma);
    if !(theta.is_finite() && theta > floor) {
        return Err(Error::Bracket(format!(
            "θ = {theta} is not above the detection threshold σ q^(1/4) = {floor}"
        )));
    }
    let target = 1.0 / (theta * theta);
    let edge = p.x_max();
    let f = |z: f64| d_transform(z, q, sigma) - target;
    let mut upper = (2.0 * theta).max(2.0 * edge);
    while f(upper) > 0.0 {
        upper *= 2.0;
        if !upper.is_finite() {
            return Err(Error::Bracket(format!("no upper bracket for ρ at θ = {theta}")));
        }
    }
    let root = numerics::find_root(f, edge, upper, 1e-16 * upper)?;
    let miss = (d_transform(root, q, sigma) - target).abs();
    if miss > 1e-12 * target {
        // the tolerance is in z; polish in case D is steep at the root
        log::debug!("ρ root at θ = {theta} misses D by {miss:e}");
    }
    Ok(root)
}

/// `h(z) = ∫ z/(z² − t²) g(t) dt` over the MP support, `z` above the edge.
pub fn h_transform(z: f64, params: &MpParams) -> Result<f64> {
    params.expectation(|t| z / (z * z - t * t), 1e-13)
}

/// Closed-form limit of `φ` at unit scale:
/// `1 − q(1 + θ²) / (θ²(θ² + q))`.
pub fn phi_closed_form(theta: f64, q: f64) -> f64 {
    let t2 = theta * theta;
    1.0 - q * (1.0 + t2) / (t2 * (t2 + q))
}

/// Intermediate quantities of the numeric `φ` evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhiEvaluation {
    pub phi: f64,
    pub rho: f64,
    pub h: f64,
    pub d_prime: f64,
    /// Central finite difference of `D` at `ρ`; absent when `ρ` is too close
    /// to the edge for the stencil.
    pub d_prime_fd: Option<f64>,
}

/// Relative step of the finite-difference `D′` cross-check.
const FD_STEP: f64 = 1e-6;
/// Allowed relative disagreement between analytic and finite-difference `D′`.
const FD_AGREEMENT: f64 = 1e-6;
/// Distance outside `[0, 1]` that is absorbed by clamping.
const PHI_CLAMP: f64 = 1e-9;

/// Limiting squared cosine similarity `φ(θ)` by the general-σ numeric path.
pub fn phi(theta: f64, q: f64, sigma: f64) -> Result<f64> {
    Ok(phi_detailed(theta, q, sigma)?.phi)
}

pub fn phi_detailed(theta: f64, q: f64, sigma: f64) -> Result<PhiEvaluation> {
    let p = MpParams::new(sigma, q)?;
    let floor = detection_threshold(q, sigma);
    if !(theta >= floor * (1.0 - 1e-12)) {
        return Err(Error::InvalidArgument(format!(
            "θ = {theta} is below the detection threshold {floor}"
        )));
    }
    if theta <= floor * (1.0 + 1e-12) {
        // ρ sits on the edge where D′ diverges
        return Ok(PhiEvaluation { phi: 0.0, rho: p.x_max(), h: f64::NAN, d_prime: f64::NEG_INFINITY, d_prime_fd: None });
    }
    let rho = rho(theta, q, sigma)?;
    let h = h_transform(rho, &p)?;
    let d_prime = d_transform_derivative(rho, q, sigma);

    let step = FD_STEP * rho;
    let d_prime_fd = if rho - p.x_max() > 1e-2 * rho {
        let fd = (d_transform(rho + step, q, sigma) - d_transform(rho - step, q, sigma)) / (2.0 * step);
        if ((fd - d_prime) / d_prime).abs() > FD_AGREEMENT {
            return Err(Error::DerivativeMismatch { analytic: d_prime, numeric: fd });
        }
        Some(fd)
    } else {
        None
    };

    let raw = -2.0 * h / (theta * theta * d_prime);
    let phi = if (0.0..=1.0).contains(&raw) {
        raw
    } else if raw >= -PHI_CLAMP && raw <= 1.0 + PHI_CLAMP {
        raw.clamp(0.0, 1.0)
    } else {
        return Err(Error::PhiOutOfRange(raw));
    };
    Ok(PhiEvaluation { phi, rho, h, d_prime, d_prime_fd })
}

/// `Σ φ_i(γ_i − γ₊) / Σ (γ_i − γ₊)` over the detected spikes.
pub fn ave_w(phis: &[f64], gammas: &[f64], gamma_plus: f64) -> Result<f64> {
    if phis.is_empty() {
        return Err(Error::NoSpikes);
    }
    if phis.len() != gammas.len() {
        return Err(Error::InvalidArgument(format!(
            "{} similarities for {} singular values",
            phis.len(),
            gammas.len()
        )));
    }
    if let Some(g) = gammas.iter().find(|&&g| !(g > gamma_plus)) {
        return Err(Error::InvalidArgument(format!("γ = {g} is not above γ₊ = {gamma_plus}")));
    }
    let (num, den) = phis
        .iter()
        .zip(gammas)
        .fold((0.0, 0.0), |(num, den), (&phi, &g)| (num + phi * (g - gamma_plus), den + (g - gamma_plus)));
    Ok(num / den)
}

/// Hyperparameters of the analysis pipeline.
#[derive(Debug, Clone)]
pub struct AnalysisConfig {
    /// BEMA trim fraction.
    pub alpha: f64,
    /// TW significance level; the threshold uses `t_{1−β}`.
    pub beta: f64,
    /// GB window half-width.
    pub window_a: usize,
    /// GB outlier-exclusion round limit.
    pub max_rounds: usize,
    pub tw: TwTable,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        AnalysisConfig {
            alpha: 0.2,
            beta: 0.1,
            window_a: fit::DEFAULT_WINDOW,
            max_rounds: fit::DEFAULT_MAX_ROUNDS,
            tw: TwTable::embedded().clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Spike {
    /// 1-based rank of the singular value.
    pub index: usize,
    pub gamma: f64,
    pub theta_hat: f64,
    pub phi_hat: f64,
    /// Unit-scale closed form evaluated at `θ̂/σ̂`, reported for comparison.
    pub phi_closed_form_rescaled: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityReport {
    pub method: FitMethod,
    pub n: usize,
    pub m: usize,
    pub q: f64,
    pub fit: MpFit,
    pub threshold: ThresholdResult,
    pub spikes: Vec<Spike>,
    /// `None` when no spike survives.
    pub ave_w: Option<f64>,
    /// Indices counted by the threshold but not strictly above `σ̂(1+√q)`
    /// (possible when `t < 0`); they carry no `θ̂`.
    pub excluded: Vec<usize>,
    pub provenance: Option<Provenance>,
}

/// Runs the four-step pipeline on a full SVD.
pub fn analyze(spectrum: &SingularSpectrum, method: FitMethod, config: &AnalysisConfig) -> Result<SimilarityReport> {
    let mut report = analyze_values(&spectrum.gamma, spectrum.n, spectrum.m, method, config)?;
    report.provenance = Some(spectrum.source.clone());
    Ok(report)
}

/// Runs the pipeline on singular values alone (the vectors are not needed).
pub fn analyze_values(
    gamma: &[f64],
    n: usize,
    m: usize,
    method: FitMethod,
    config: &AnalysisConfig,
) -> Result<SimilarityReport> {
    if gamma.len() != m || n < m {
        return Err(Error::InvalidArgument(format!(
            "{} singular values for an {n}x{m} matrix",
            gamma.len()
        )));
    }
    if !(config.beta > 0.0 && config.beta < 1.0) {
        return Err(Error::InvalidArgument(format!("beta must lie in (0, 1), got {}", config.beta)));
    }
    let q = m as f64 / n as f64;

    // step 1: σ̂, γ₊², ŝ
    let mut fit = match method {
        FitMethod::Bema => fit::bema(gamma, q, config.alpha)?,
        FitMethod::Gb => fit::gb_fit(gamma, q, config.window_a, config.max_rounds)?,
    };
    fit.beta = Some(config.beta);
    let sigma = fit.sigma_hat;
    let t = config.tw.quantile(1.0 - config.beta)?;
    let gamma_plus_sq = threshold(sigma, q, n, t)?;
    let s_hat = count_spikes(gamma, gamma_plus_sq);
    let threshold = ThresholdResult {
        gamma_plus_sq,
        gamma_plus: gamma_plus_sq.sqrt(),
        t,
        s_hat,
        sigma_hat: sigma,
        q,
        n,
        beta: config.beta,
    };

    // steps 2 and 3: θ̂_i and φ̂_i
    let edge = sigma * (1.0 + q.sqrt());
    let mut spikes = Vec::with_capacity(s_hat);
    let mut excluded = Vec::new();
    for (i, &g) in gamma.iter().enumerate().take(s_hat) {
        if !(g > edge) {
            log::warn!("γ_{} = {g} exceeds γ₊ but not the bulk edge {edge}; skipped", i + 1);
            excluded.push(i + 1);
            continue;
        }
        let theta = theta_hat(g, q, sigma)?;
        let phi_hat = phi(theta, q, sigma)?;
        let closed = phi_closed_form(theta / sigma, q);
        if (phi_hat - closed).abs() > 1e-6 {
            log::warn!("γ_{}: numeric φ = {phi_hat} differs from rescaled closed form {closed}", i + 1);
        }
        spikes.push(Spike { index: i + 1, gamma: g, theta_hat: theta, phi_hat, phi_closed_form_rescaled: closed });
    }

    // step 4
    let ave = if spikes.is_empty() {
        None
    } else {
        let phis: Vec<f64> = spikes.iter().map(|s| s.phi_hat).collect();
        let gs: Vec<f64> = spikes.iter().map(|s| s.gamma).collect();
        Some(ave_w(&phis, &gs, threshold.gamma_plus)?)
    };
    Ok(SimilarityReport { method, n, m, q, fit, threshold, spikes, ave_w: ave, excluded, provenance: None })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    /// Number of retained singular values.
    pub s: usize,
    /// Cut placed at the largest discarded value, `γ_{s+1}`.
    pub gamma_plus: f64,
    pub ave_w: Option<f64>,
}

/// `Ave_w` as a function of the retained count `s = 1..=k`.
///
/// For each `s` the cut is `γ₊(s) = γ_{s+1}`. Retained values at or below
/// the fitted bulk edge contribute `φ = 0`.
pub fn sweep(gamma: &[f64], fit: &MpFit, k: usize) -> Result<Vec<SweepPoint>> {
    let m = gamma.len();
    let k = k.min(m.saturating_sub(1));
    let (sigma, q) = (fit.sigma_hat, fit.q);
    let edge = sigma * (1.0 + q.sqrt());
    let phis = gamma[..k]
        .iter()
        .map(|&g| if g > edge { phi(theta_hat(g, q, sigma)?, q, sigma) } else { Ok(0.0) })
        .collect::<Result<Vec<_>>>()?;
    Ok((1..=k)
        .map(|s| {
            let cut = gamma[s];
            let (num, den) = (0..s).fold((0.0, 0.0), |(num, den), i| {
                let w = gamma[i] - cut;
                (num + phis[i] * w, den + w)
            });
            SweepPoint { s, gamma_plus: cut, ave_w: (den > 0.0).then(|| num / den) }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn threshold_examples() {
        for q in [0.1f64, 0.5, 1.0] {
            let edge = 1.0 + f64::sqrt(q);
            assert_eq!(threshold(1.7, q, 500, 0.0).unwrap(), 1.7 * 1.7 * (edge * edge));
        }
        let limit = threshold(1.0, 1.0, 100_000_000_000, 0.45).unwrap();
        assert!((limit - 4.0).abs() < 1e-6);

        // independent re-evaluation of the formula
        let t = crate::tw::tw_quantile(0.9).unwrap();
        let (q, n) = (0.5f64, 1000f64);
        let a = (1.0 + q.sqrt()).powi(2);
        let b = t * (1.0 / n.cbrt().powi(2)) * (1.0 / q.powf(1.0 / 6.0)) * (1.0 + q.sqrt()).powf(4.0 / 3.0);
        let got = threshold(1.0, 0.5, 1000, t).unwrap();
        assert!((got - (a + b)).abs() <= 1e-12 * got);

        assert!(threshold(1.0, 0.5, 1000, 0.5).unwrap() > threshold(1.0, 0.5, 1000, 0.4).unwrap());
        assert!(threshold(1.1, 0.5, 1000, 0.5).unwrap() > threshold(1.0, 0.5, 1000, 0.5).unwrap());
        assert!(threshold(1.0, 0.5, 1, 0.5).is_err());
        assert!(threshold(0.0, 0.5, 10, 0.5).is_err());
    }

    #[test]
    fn spike_counting() {
        assert_eq!(count_spikes(&[3.0, 2.5, 1.0], 4.0), 2);
        assert_eq!(count_spikes(&[1.9, 1.5, 1.0], 4.0), 0);
        assert_eq!(count_spikes(&[2.0, 1.5], 4.0), 0);
        assert_eq!(count_spikes(&[], 1.0), 0);
    }

    #[test]
    fn theta_hat_examples() {
        assert!((theta_hat(2.5, 1.0, 1.0).unwrap() - 2.0).abs() < 1e-14);
        for q in [0.1f64, 0.5, 1.0] {
            let edge = 1.0 + q.sqrt();
            let near = theta_hat(edge * (1.0 + 1e-12), q, 1.0).unwrap();
            assert!((near - q.powf(0.25)).abs() < 1e-5, "q={q}: {near}");
            assert!(near > q.powf(0.25));
            assert!(matches!(theta_hat(edge, q, 1.0), Err(Error::InsideBulk { .. })));
            assert!(theta_hat(0.5 * edge, q, 1.0).is_err());
        }
        for c in [0.01, 3.0, 250.0] {
            let base = theta_hat(2.3, 0.4, 1.1).unwrap();
            let scaled = theta_hat(c * 2.3, 0.4, c * 1.1).unwrap();
            assert!((scaled - c * base).abs() <= 1e-12 * c * base);
        }
    }

    #[test]
    fn rho_examples() {
        assert!((rho(2.0, 1.0, 1.0).unwrap() - 2.5).abs() < 1e-12);
        for theta in [1e3, 1e5] {
            let r = rho(theta, 0.5, 1.0).unwrap();
            assert!((r / theta - 1.0).abs() < 2.0 / (theta * theta) + 1e-12);
        }
        assert!(matches!(rho(0.5f64.powf(0.25), 0.5, 1.0), Err(Error::Bracket(_))));
        assert!(rho(0.3, 0.5, 1.0).is_err());
    }

    #[test]
    fn rho_satisfies_defining_equation() {
        for q in [0.1, 0.3, 0.7, 1.0] {
            for sigma in [0.02, 1.0, 9.0] {
                let floor = detection_threshold(q, sigma);
                for f in [1.001, 1.1, 1.5, 3.0, 20.0] {
                    let theta = floor * f;
                    let r = rho(theta, q, sigma).unwrap();
                    let target = 1.0 / (theta * theta);
                    assert!((d_transform(r, q, sigma) - target).abs() <= 1e-12 * target, "q={q} σ={sigma} f={f}");
                    assert!(r > sigma * (1.0 + q.sqrt()));
                    let back = theta_hat(r, q, sigma).unwrap();
                    assert!((back - theta).abs() <= 1e-9 * theta);
                }
            }
        }
    }

    #[test]
    fn d_transform_matches_textbook_form_and_derivative() {
        // the cancellation-prone (w − R)/(2σ⁴q) form agrees at moderate z
        for (z, q, s) in [(2.6, 1.0, 1.0), (3.0, 0.3, 1.2), (1.9, 0.5, 1.0)] {
            let s2: f64 = s * s;
            let w = z * z - s2 * (q + 1.0);
            let textbook = (w - (w * w - 4.0 * s2 * s2 * q).sqrt()) / (2.0 * s2 * s2 * q);
            assert!((d_transform(z, q, s) - textbook).abs() < 1e-12);
            let h = 1e-5;
            let fd = (d_transform(z + h, q, s) - d_transform(z - h, q, s)) / (2.0 * h);
            assert!((d_transform_derivative(z, q, s) - fd).abs() < 1e-8);
        }
        // D at the edge equals 1/(σ²√q): the detection boundary
        let (q, s) = (0.4f64, 1.3f64);
        let edge = s * (1.0 + q.sqrt());
        assert!((d_transform(edge, q, s) - 1.0 / (s * s * q.sqrt())).abs() < 1e-12);
    }

    #[test]
    fn phi_examples() {
        let e = phi_detailed(2.0, 1.0, 1.0).unwrap();
        assert!((e.phi - 0.75).abs() < 1e-6, "{}", e.phi);
        assert!((e.rho - 2.5).abs() < 1e-12);
        assert!(e.d_prime_fd.is_some());
        assert!((phi_closed_form(2.0, 1.0) - 0.75).abs() < 1e-15);
        for q in [0.1f64, 0.5, 1.0] {
            assert_eq!(phi(q.powf(0.25), q, 1.0).unwrap(), 0.0);
            assert!(phi_closed_form(q.powf(0.25), q).abs() < 1e-15);
            assert!(phi(0.5 * q.powf(0.25), q, 1.0).is_err());
        }
    }

    #[test]
    fn phi_matches_closed_form_at_unit_scale() {
        for q in [0.1f64, 0.25, 0.5, 0.75, 1.0] {
            let floor = q.powf(0.25);
            for j in 1..=20 {
                let theta = floor + (10.0 - floor) * j as f64 / 20.0;
                let numeric = phi(theta, q, 1.0).unwrap();
                assert!((numeric - phi_closed_form(theta, q)).abs() < 1e-6, "q={q} θ={theta}");
            }
        }
    }

    #[test]
    fn phi_depends_on_theta_over_sigma() {
        for sigma in [0.05, 3.0] {
            for theta_unit in [0.9, 1.4, 4.0] {
                let a = phi(theta_unit * sigma, 0.5, sigma).unwrap();
                let b = phi(theta_unit, 0.5, 1.0).unwrap();
                assert!((a - b).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn phi_is_monotone_in_theta() {
        for q in [0.2f64, 1.0] {
            let floor = q.powf(0.25);
            let mut prev = 0.0;
            for j in 1..=60 {
                let theta = floor * (1.0 + 0.05 * j as f64);
                let v = phi(theta, q, 1.3 * 1.0).ok();
                let v = v.unwrap_or(0.0);
                assert!(v >= prev, "q={q} θ={theta}");
                prev = v;
            }
        }
    }

    #[test]
    fn ave_w_examples() {
        assert_eq!(ave_w(&[0.8], &[3.0], 2.0).unwrap(), 0.8);
        // equal weights give the arithmetic mean
        let mean = ave_w(&[0.2, 0.6, 1.0], &[3.0, 3.0, 3.0], 2.0).unwrap();
        assert!((mean - 0.6).abs() < 1e-15);
        let v = ave_w(&[0.9, 0.5], &[3.0, 2.5], 2.0).unwrap();
        assert!((v - 23.0 / 30.0).abs() < 1e-15);
        assert!(matches!(ave_w(&[], &[], 2.0), Err(Error::NoSpikes)));
        assert!(ave_w(&[0.5], &[1.0], 2.0).is_err());
        assert!(ave_w(&[0.5, 0.4], &[3.0], 2.0).is_err());
    }

    fn quantile_spectrum(sigma: f64, q: f64, m: usize) -> Vec<f64> {
        let p = MpParams::new(sigma, q).unwrap();
        (0..m).map(|i| p.upper_quantile((i as f64 + 0.5) / m as f64).unwrap()).collect()
    }

    #[test]
    fn analyze_values_on_planted_outliers() {
        let (n, m) = (800, 400);
        let mut gamma = quantile_spectrum(1.0, 0.5, m);
        gamma[0] = 3.0;
        gamma[1] = 2.4;
        let report = analyze_values(&gamma, n, m, FitMethod::Bema, &AnalysisConfig::default()).unwrap();
        assert_eq!(report.threshold.s_hat, 2);
        assert_eq!(report.spikes.len(), 2);
        assert!(report.excluded.is_empty());
        let ave = report.ave_w.unwrap();
        assert!((0.0..=1.0).contains(&ave));
        for s in &report.spikes {
            assert!(s.theta_hat >= report.fit.sigma_hat * 0.5f64.powf(0.25));
            let r = rho(s.theta_hat, 0.5, report.fit.sigma_hat).unwrap();
            assert!((r - s.gamma).abs() <= 1e-8 * s.gamma);
            assert!((s.phi_hat - s.phi_closed_form_rescaled).abs() < 1e-6);
        }
        assert_eq!(report.fit.beta, Some(0.1));
        assert_eq!(report.fit.alpha, Some(0.2));

        let gb = analyze_values(&gamma, n, m, FitMethod::Gb, &AnalysisConfig::default()).unwrap();
        assert_eq!(gb.threshold.s_hat, 2);
    }

    #[test]
    fn analyze_values_without_spikes() {
        let gamma = quantile_spectrum(1.0, 0.5, 400);
        let report = analyze_values(&gamma, 800, 400, FitMethod::Bema, &AnalysisConfig::default()).unwrap();
        assert_eq!(report.threshold.s_hat, 0);
        assert!(report.spikes.is_empty());
        assert_eq!(report.ave_w, None);
    }

    #[test]
    fn negative_t_excludes_values_inside_the_bulk() {
        // β close to 1 gives t < 0, so γ₊ drops below the fitted edge
        let mut config = AnalysisConfig::default();
        config.beta = 0.95;
        let mut gamma = quantile_spectrum(1.0, 0.5, 400);
        gamma[0] = 2.5;
        let report = analyze_values(&gamma, 800, 400, FitMethod::Bema, &config).unwrap();
        assert!(report.threshold.t < 0.0);
        assert!(report.threshold.s_hat >= 1);
        assert!(report.spikes.iter().all(|s| s.gamma > report.fit.sigma_hat * (1.0 + 0.5f64.sqrt())));
        assert_eq!(report.spikes.len() + report.excluded.len(), report.threshold.s_hat);
    }

    #[test]
    fn analyze_rejects_bad_inputs() {
        let gamma = quantile_spectrum(1.0, 0.5, 10);
        let cfg = AnalysisConfig::default();
        assert!(analyze_values(&gamma, 20, 11, FitMethod::Bema, &cfg).is_err());
        assert!(analyze_values(&gamma, 5, 10, FitMethod::Bema, &cfg).is_err());
        let bad = AnalysisConfig { beta: 1.0, ..AnalysisConfig::default() };
        assert!(analyze_values(&gamma, 20, 10, FitMethod::Bema, &bad).is_err());
    }

    #[test]
    fn sweep_matches_ave_w_at_cut() {
        let (n, m) = (800, 400);
        let mut gamma = quantile_spectrum(1.0, 0.5, m);
        gamma[0] = 3.0;
        gamma[1] = 2.4;
        let report = analyze_values(&gamma, n, m, FitMethod::Bema, &AnalysisConfig::default()).unwrap();
        let points = sweep(&gamma, &report.fit, 80).unwrap();
        assert_eq!(points.len(), 80);
        assert_eq!(points[0].s, 1);
        // s = 1 reduces to the first spike's φ
        assert!((points[0].ave_w.unwrap() - report.spikes[0].phi_hat).abs() < 1e-12);
        let s2 = &points[1];
        let want = ave_w(
            &[report.spikes[0].phi_hat, report.spikes[1].phi_hat],
            &[gamma[0], gamma[1]],
            gamma[2],
        )
        .unwrap();
        assert!((s2.ave_w.unwrap() - want).abs() < 1e-12);
        // bulk values dilute the score
        assert!(points[79].ave_w.unwrap() < points[1].ave_w.unwrap());
        assert!(points.iter().all(|p| p.ave_w.map_or(true, |v| (0.0..=1.0).contains(&v))));
    }
}
