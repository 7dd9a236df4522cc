//! Rank-`s` truncation `Σ_{i≤s} γ_i ũ_i ṽ_iᵀ` and parameter accounting.

use std::path::{Path, PathBuf};

use faer::Mat;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::write_npy;
use crate::matrix::Provenance;
use crate::svd::SingularSpectrum;

/// How the singular values are split between the two factors.
pub const CONVENTION: &str = "left = U_s diag(gamma_1..s), right = V_s^T";

#[derive(Debug, Clone)]
pub struct LowRankFactors {
    /// `n × s`, left singular vectors scaled by their singular values.
    pub left: Mat<f64>,
    /// `s × m`.
    pub right: Mat<f64>,
    pub s: usize,
    /// Frobenius distance to the full reconstruction.
    pub recon_error: f64,
    pub convention: &'static str,
}

impl LowRankFactors {
    pub fn product(&self) -> Mat<f64> {
        if self.s == 0 {
            return Mat::zeros(self.left.nrows(), self.right.ncols());
        }
        &self.left * &self.right
    }
}

pub fn truncate(spectrum: &SingularSpectrum, s: usize) -> Result<LowRankFactors> {
    let (n, m) = (spectrum.n, spectrum.m);
    if s > m {
        return Err(Error::RankTooLarge { s, m });
    }
    let left = Mat::from_fn(n, s, |i, j| spectrum.left.read(i, j) * spectrum.gamma[j]);
    let right = Mat::from_fn(s, m, |i, j| spectrum.right.read(j, i));
    // the residual is the discarded part U_tail diag(γ_tail) V_tailᵀ, whose
    // norm only needs the left factor since V_tail is orthonormal
    let tail = Mat::from_fn(n, m - s, |i, j| spectrum.left.read(i, s + j) * spectrum.gamma[s + j]);
    let recon_error = if s == m { 0.0 } else { tail.norm_l2() };
    Ok(LowRankFactors { left, right, s, recon_error, convention: CONVENTION })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamSavings {
    pub original: u128,
    pub factored: u128,
    pub saves: bool,
}

/// `nm` parameters against `s(n + m)`; saves iff the factored count is smaller.
pub fn param_savings(n: usize, m: usize, s: usize) -> ParamSavings {
    let (n, m, s) = (n as u128, m as u128, s as u128);
    let original = n * m;
    let factored = s * (n + m);
    ParamSavings { original, factored, saves: factored < original }
}

/// Sidecar describing a pair of exported factor files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorSidecar {
    pub convention: String,
    pub s: usize,
    pub n: usize,
    pub m: usize,
    pub left: String,
    pub right: String,
    pub recon_error: f64,
    pub frobenius_norm: f64,
    pub savings: ParamSavings,
    pub provenance: Provenance,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub method: Option<String>,
}

#[derive(Debug, Clone)]
pub struct WrittenFactors {
    pub left: PathBuf,
    pub right: PathBuf,
    pub sidecar: PathBuf,
    pub meta: FactorSidecar,
}

/// Writes `<stem>.left.npy`, `<stem>.right.npy` and `<stem>.json` into `dir`.
pub fn write_factors(
    dir: &Path,
    stem: &str,
    factors: &LowRankFactors,
    spectrum: &SingularSpectrum,
    method: Option<&str>,
) -> Result<WrittenFactors> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let left_path = dir.join(format!("{stem}.left.npy"));
    let right_path = dir.join(format!("{stem}.right.npy"));
    let sidecar_path = dir.join(format!("{stem}.json"));
    write_npy(&left_path, &[factors.left.nrows(), factors.s], &row_major(&factors.left))?;
    write_npy(&right_path, &[factors.s, factors.right.ncols()], &row_major(&factors.right))?;
    let frobenius_norm = spectrum.gamma.iter().map(|g| g * g).sum::<f64>().sqrt();
    let meta = FactorSidecar {
        convention: factors.convention.to_string(),
        s: factors.s,
        n: spectrum.n,
        m: spectrum.m,
        left: file_name(&left_path),
        right: file_name(&right_path),
        recon_error: factors.recon_error,
        frobenius_norm,
        savings: param_savings(spectrum.n, spectrum.m, factors.s),
        provenance: spectrum.source.clone(),
        method: method.map(str::to_string),
    };
    let json = serde_json::to_string_pretty(&meta)?;
    std::fs::write(&sidecar_path, json + "\n").map_err(|e| Error::io(&sidecar_path, e))?;
    Ok(WrittenFactors { left: left_path, right: right_path, sidecar: sidecar_path, meta })
}

fn file_name(p: &Path) -> String {
    p.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

pub(crate) fn row_major(a: &Mat<f64>) -> Vec<f64> {
    let mut out = Vec::with_capacity(a.nrows() * a.ncols());
    for i in 0..a.nrows() {
        for j in 0..a.ncols() {
            out.push(a.read(i, j));
        }
    }
    out
}
