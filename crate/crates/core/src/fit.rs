//! Estimators of the Marchenko–Pastur scale `σ` from an observed spectrum.
//!
//! - [`bema`]: regresses the trimmed, sorted singular values on the unit-scale
//!   MP upper quantiles (bulk eigenvalue matching).
//! - [`gb_fit`]: least-squares fit of the MP density to a Gaussian-broadened
//!   empirical density, evaluated at the observed singular values.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mp::MpParams;
use crate::numerics;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FitMethod {
    Bema,
    Gb,
}

impl FitMethod {
    pub fn as_str(self) -> &'static str {
        match self {
            FitMethod::Bema => "bema",
            FitMethod::Gb => "gb",
        }
    }
}

impl fmt::Display for FitMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FitMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "bema" => Ok(FitMethod::Bema),
            "gb" | "gaussian-broadening" => Ok(FitMethod::Gb),
            other => Err(Error::InvalidArgument(format!("unknown fit method {other:?} (expected bema or gb)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitDiagnostics {
    /// BEMA: `Σ (γ_k − σ̂ p_k)²` over the trim window. GB: the least-squares
    /// objective at `σ̂`.
    pub residual: f64,
    /// GB outlier-exclusion refits performed (0 for BEMA).
    pub rounds: usize,
    pub points_used: usize,
    pub points_excluded: usize,
    /// False when GB exclusion did not stabilize within the round limit.
    pub converged: bool,
}

/// A fitted MP scale and the hyperparameters that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MpFit {
    pub sigma_hat: f64,
    pub q: f64,
    pub method: FitMethod,
    pub alpha: Option<f64>,
    /// Filled in by the analysis pipeline; the estimators themselves do not
    /// use the TW level.
    pub beta: Option<f64>,
    pub window_a: Option<usize>,
    pub max_rounds: Option<usize>,
    pub diagnostics: FitDiagnostics,
}

impl MpFit {
    pub fn params(&self) -> Result<MpParams> {
        MpParams::new(self.sigma_hat, self.q)
    }
}

fn check_spectrum(gamma: &[f64], min_len: usize) -> Result<()> {
    if gamma.len() < min_len {
        return Err(Error::InvalidArgument(format!(
            "need at least {min_len} singular values, got {}",
            gamma.len()
        )));
    }
    if gamma.iter().any(|g| !(g.is_finite() && *g >= 0.0)) {
        return Err(Error::InvalidArgument("singular values must be finite and non-negative".into()));
    }
    if !gamma.windows(2).all(|w| w[0] >= w[1]) {
        return Err(Error::InvalidArgument("singular values must be sorted in descending order".into()));
    }
    Ok(())
}

/// 1-based index range `⌈αm⌉ ..= ⌊(1−α)m⌋` used by BEMA.
pub fn bema_window(m: usize, alpha: f64) -> Result<(usize, usize)> {
    if !(alpha > 0.0 && alpha < 0.5) {
        return Err(Error::InvalidArgument(format!("alpha must lie in (0, 1/2), got {alpha}")));
    }
    let mf = m as f64;
    // the 1e-9 slack keeps exact products like 0.2·100 from rounding outward
    let lo = ((alpha * mf - 1e-9).ceil() as usize).max(1);
    let hi = (((1.0 - alpha) * mf + 1e-9).floor() as usize).min(m);
    if lo > hi {
        return Err(Error::EmptyTrimRange { alpha, m });
    }
    Ok((lo, hi))
}

/// Unit-scale MP upper quantiles `p_k` for `k` in the BEMA window.
pub fn bema_quantiles(m: usize, q: f64, alpha: f64) -> Result<Vec<(usize, f64)>> {
    let (lo, hi) = bema_window(m, alpha)?;
    let unit = MpParams::new(1.0, q)?;
    (lo..=hi).map(|k| Ok((k, unit.upper_quantile(k as f64 / m as f64)?))).collect()
}

/// BEMA estimate `σ̂ = Σ p_k γ_k / Σ p_k²`, pairing the k-th largest singular
/// value with the upper `k/m` quantile.
pub fn bema(gamma: &[f64], q: f64, alpha: f64) -> Result<MpFit> {
    check_spectrum(gamma, 5)?;
    let m = gamma.len();
    let quantiles = bema_quantiles(m, q, alpha)?;
    let (num, den) = quantiles
        .iter()
        .fold((0.0, 0.0), |(num, den), &(k, p)| (num + p * gamma[k - 1], den + p * p));
    let sigma_hat = num / den;
    if !(sigma_hat.is_finite() && sigma_hat > 0.0) {
        return Err(Error::DegenerateSpectrum(format!("BEMA produced σ̂ = {sigma_hat}")));
    }
    let residual = quantiles.iter().map(|&(k, p)| (gamma[k - 1] - sigma_hat * p).powi(2)).sum();
    Ok(MpFit {
        sigma_hat,
        q,
        method: FitMethod::Bema,
        alpha: Some(alpha),
        beta: None,
        window_a: None,
        max_rounds: None,
        diagnostics: FitDiagnostics {
            residual,
            rounds: 0,
            points_used: quantiles.len(),
            points_excluded: m - quantiles.len(),
            converged: true,
        },
    })
}

/// Gaussian-broadened empirical density
/// `P(γ) = (1/m) Σ_k N(γ; γ_k, σ_k²)`, `σ_k = (γ_{k+a} − γ_{k−a})/2`.
#[derive(Debug, Clone)]
pub struct Broadening {
    centers: Vec<f64>,
    widths: Vec<f64>,
}

/// Relative floor applied to zero local widths.
pub const WIDTH_FLOOR: f64 = 1e-12;

/// Builds the broadened density from ascending singular values. Window
/// indices are clamped to the spectrum and the divisor stays 2.
pub fn broaden(ascending: &[f64], a: usize) -> Result<Broadening> {
    let m = ascending.len();
    if a == 0 {
        return Err(Error::InvalidArgument("broadening window a must be at least 1".into()));
    }
    if m == 0 {
        return Err(Error::InvalidArgument("cannot broaden an empty spectrum".into()));
    }
    if !ascending.windows(2).all(|w| w[0] <= w[1]) {
        return Err(Error::InvalidArgument("broadening expects ascending singular values".into()));
    }
    let top = ascending[m - 1].abs().max(ascending[0].abs());
    if m >= 2 && ascending[m - 1] == ascending[0] {
        return Err(Error::DegenerateSpectrum("all singular values are equal".into()));
    }
    let floor = WIDTH_FLOOR * top;
    if floor <= 0.0 {
        return Err(Error::DegenerateSpectrum("spectrum is identically zero".into()));
    }
    let widths = (0..m)
        .map(|k| {
            let hi = (k + a).min(m - 1);
            let lo = k.saturating_sub(a);
            ((ascending[hi] - ascending[lo]) / 2.0).max(floor)
        })
        .collect();
    Ok(Broadening { centers: ascending.to_vec(), widths })
}

impl Broadening {
    pub fn widths(&self) -> &[f64] {
        &self.widths
    }

    pub fn density(&self, x: f64) -> f64 {
        let norm = 1.0 / (2.0 * PI).sqrt();
        let sum: f64 = self
            .centers
            .iter()
            .zip(&self.widths)
            .map(|(&c, &w)| {
                let z = (x - c) / w;
                norm * (-0.5 * z * z).exp() / w
            })
            .sum();
        sum / self.centers.len() as f64
    }
}

/// Default GB window half-width.
pub const DEFAULT_WINDOW: usize = 5;
/// Default limit on GB outlier-exclusion refits.
pub const DEFAULT_MAX_ROUNDS: usize = 10;

/// Gaussian-broadening fit of `σ`.
///
/// Minimizes `Σ_i [P(γ_i) − g_σ(γ_i)]²` over `σ`. After each fit, points
/// above `σ̂(1+√q)` are dropped from the sum and the fit repeats until the
/// excluded set is stable or `max_rounds` refits have run (`0` disables
/// exclusion).
pub fn gb_fit(gamma: &[f64], q: f64, a: usize, max_rounds: usize) -> Result<MpFit> {
    check_spectrum(gamma, 5)?;
    MpParams::new(1.0, q)?;
    let m = gamma.len();
    let ascending: Vec<f64> = gamma.iter().rev().copied().collect();
    let broadened = broaden(&ascending, a)?;
    let targets: Vec<f64> = gamma.iter().map(|&g| broadened.density(g)).collect();

    let edge_factor = 1.0 + q.sqrt();
    let median = if m % 2 == 1 { gamma[m / 2] } else { 0.5 * (gamma[m / 2 - 1] + gamma[m / 2]) };
    let lo = median / edge_factor * 0.2;
    let hi = gamma[0] / edge_factor * 2.0;
    if !(lo > 0.0 && hi > lo) {
        return Err(Error::Bracket(format!("σ search interval [{lo}, {hi}] is empty")));
    }

    let mut included = vec![true; m];
    let mut rounds = 0;
    let mut converged = max_rounds == 0;
    let (mut sigma_hat, mut residual) = minimize_objective(gamma, &targets, &included, q, lo, hi)?;
    while rounds < max_rounds {
        let next: Vec<bool> = gamma.iter().map(|&g| g <= sigma_hat * edge_factor).collect();
        if next == included {
            converged = true;
            break;
        }
        included = next;
        rounds += 1;
        (sigma_hat, residual) = minimize_objective(gamma, &targets, &included, q, lo, hi)?;
    }
    if !converged {
        // one more check: the last refit may have settled the set
        let next: Vec<bool> = gamma.iter().map(|&g| g <= sigma_hat * edge_factor).collect();
        converged = next == included;
        if !converged {
            log::warn!("GB outlier exclusion did not stabilize after {max_rounds} rounds");
        }
    }
    let used = included.iter().filter(|&&b| b).count();
    Ok(MpFit {
        sigma_hat,
        q,
        method: FitMethod::Gb,
        alpha: None,
        beta: None,
        window_a: Some(a),
        max_rounds: Some(max_rounds),
        diagnostics: FitDiagnostics {
            residual,
            rounds,
            points_used: used,
            points_excluded: m - used,
            converged,
        },
    })
}

/// The GB least-squares objective at `σ` over the included points.
pub fn gb_objective(gamma: &[f64], targets: &[f64], included: &[bool], q: f64, sigma: f64) -> f64 {
    let Ok(p) = MpParams::new(sigma, q) else {
        return f64::INFINITY;
    };
    gamma
        .iter()
        .zip(targets)
        .zip(included)
        .filter(|(_, &inc)| inc)
        .map(|((&g, &t), _)| (t - p.density(g)).powi(2))
        .sum()
}

// Log-spaced scan to locate the basin, then Brent inside the neighbouring
// grid cells.
fn minimize_objective(
    gamma: &[f64],
    targets: &[f64],
    included: &[bool],
    q: f64,
    lo: f64,
    hi: f64,
) -> Result<(f64, f64)> {
    const GRID: usize = 400;
    let f = |s: f64| gb_objective(gamma, targets, included, q, s);
    let ratio = (hi / lo).ln();
    let grid: Vec<f64> = (0..=GRID).map(|i| lo * (ratio * i as f64 / GRID as f64).exp()).collect();
    let values: Vec<f64> = grid.iter().map(|&s| f(s)).collect();
    let (best, &best_value) = values
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .expect("grid is non-empty");
    let worst = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !best_value.is_finite() || worst - best_value <= 1e-14 * worst.abs().max(1e-300) {
        return Err(Error::Bracket("GB objective is flat over the σ search interval".into()));
    }
    let a = grid[best.saturating_sub(1)];
    let b = grid[(best + 1).min(GRID)];
    let (s, v) = numerics::minimize(f, a, b, 1e-12 * grid[best]);
    Ok(if v <= best_value { (s, v) } else { (grid[best], best_value) })
}
