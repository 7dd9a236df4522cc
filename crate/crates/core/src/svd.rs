//! Thin SVD with a deterministic sign convention, singular values only, and
//! a Lanczos partial SVD for the leading triplets of large matrices.

use faer::{Mat, MatRef};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::matrix::{OrientedMatrix, Provenance};

/// `W = Σ γ_i ũ_i ṽ_iᵀ` with `γ` descending.
#[derive(Debug, Clone)]
pub struct SingularSpectrum {
    pub gamma: Vec<f64>,
    /// `n × m`, orthonormal columns.
    pub left: Mat<f64>,
    /// `m × m`, orthonormal columns.
    pub right: Mat<f64>,
    pub n: usize,
    pub m: usize,
    pub source: Provenance,
}

impl SingularSpectrum {
    pub fn q(&self) -> f64 {
        self.m as f64 / self.n as f64
    }

    /// `Σ_{i<k} γ_i ũ_i ṽ_iᵀ` for the leading `k` triplets.
    pub fn reconstruct(&self, k: usize) -> Mat<f64> {
        let k = k.min(self.m);
        let scaled = Mat::from_fn(self.n, k, |i, j| self.left.read(i, j) * self.gamma[j]);
        scaled * self.right.get(.., ..k).transpose()
    }
}

/// Thin SVD of an oriented matrix.
///
/// Sign convention: the first entry of each left vector whose magnitude
/// exceeds `1e-12` is non-negative; the paired right vector is flipped along.
pub fn svd(w: &OrientedMatrix) -> Result<SingularSpectrum> {
    let (n, m) = (w.nrows(), w.ncols());
    let fail = |reason: &str| Error::Svd { source_desc: w.source().describe(), reason: reason.to_string() };
    let dec = w.mat().thin_svd();
    let s = dec.s_diagonal();
    let mut order: Vec<usize> = (0..m).collect();
    // faer returns descending values already; the sort guards the contract
    order.sort_by(|&a, &b| s.read(b).total_cmp(&s.read(a)));
    let gamma: Vec<f64> = order.iter().map(|&j| s.read(j)).collect();
    if gamma.iter().any(|g| !g.is_finite()) {
        return Err(fail("non-finite singular values"));
    }
    let mut left = Mat::from_fn(n, m, |i, j| dec.u().read(i, order[j]));
    let mut right = Mat::from_fn(m, m, |i, j| dec.v().read(i, order[j]));
    if !(left.norm_l2().is_finite() && right.norm_l2().is_finite()) {
        return Err(fail("non-finite singular vectors"));
    }
    fix_signs(&mut left, &mut right);
    Ok(SingularSpectrum { gamma: gamma.iter().map(|g| g.max(0.0)).collect(), left, right, n, m, source: w.source().clone() })
}

/// Singular values only, descending.
pub fn singular_values(w: &OrientedMatrix) -> Result<Vec<f64>> {
    let mut gamma = w.mat().singular_values();
    gamma.sort_by(|a, b| b.total_cmp(a));
    if gamma.iter().any(|g| !g.is_finite()) {
        return Err(Error::Svd {
            source_desc: w.source().describe(),
            reason: "non-finite singular values".into(),
        });
    }
    Ok(gamma.into_iter().map(|g| g.max(0.0)).collect())
}

fn fix_signs(left: &mut Mat<f64>, right: &mut Mat<f64>) {
    for j in 0..left.ncols() {
        let lead = (0..left.nrows()).map(|i| left.read(i, j)).find(|v| v.abs() > 1e-12);
        if matches!(lead, Some(v) if v < 0.0) {
            for i in 0..left.nrows() {
                left.write(i, j, -left.read(i, j));
            }
            for i in 0..right.nrows() {
                right.write(i, j, -right.read(i, j));
            }
        }
    }
}

/// Leading singular triplets from [`top_singular_triplets`].
#[derive(Debug, Clone)]
pub struct PartialSvd {
    pub gamma: Vec<f64>,
    pub left: Mat<f64>,
    pub right: Mat<f64>,
    /// Residual bound `‖Wᵀũ_i − γ_i ṽ_i‖` per triplet.
    pub residuals: Vec<f64>,
    pub steps: usize,
    pub converged: bool,
}

/// Golub–Kahan–Lanczos bidiagonalization with full reorthogonalization.
///
/// Runs until the leading `k` Ritz triplets have residual at most
/// `tol · γ_1`, or until `max_steps` Lanczos steps. The start vector is
/// drawn from a fixed seed, so results are deterministic.
pub fn top_singular_triplets(w: MatRef<'_, f64>, k: usize, tol: f64, max_steps: usize) -> Result<PartialSvd> {
    let (n, m) = (w.nrows(), w.ncols());
    let max_steps = max_steps.min(m).max(k);
    if k == 0 || k > m {
        return Err(Error::InvalidArgument(format!("cannot extract {k} triplets from {n}x{m}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_1a2c_2b0b);
    let mut v: Vec<f64> = (0..m).map(|_| StandardNormal.sample(&mut rng)).collect();
    normalize(&mut v);

    let mut us: Vec<Vec<f64>> = Vec::new();
    let mut vs: Vec<Vec<f64>> = vec![v];
    let mut alphas = Vec::new();
    let mut betas: Vec<f64> = Vec::new();
    let ((gamma, (p, qm), residuals), steps, converged) = loop {
        let j = alphas.len();
        // u_j = W v_j − β_{j−1} u_{j−1}
        let mut u = mat_vec(w, &vs[j]);
        if j > 0 {
            axpy(-betas[j - 1], &us[j - 1], &mut u);
        }
        reorthogonalize(&mut u, &us);
        let alpha = normalize(&mut u);
        alphas.push(alpha);
        us.push(u);
        // v_{j+1} = Wᵀ u_j − α_j v_j
        let mut vn = mat_t_vec(w, &us[j]);
        axpy(-alpha, &vs[j], &mut vn);
        reorthogonalize(&mut vn, &vs);
        let beta = normalize(&mut vn);
        betas.push(beta);
        vs.push(vn);

        let steps = alphas.len();
        let exhausted = steps >= max_steps || beta <= 1e-14 * alphas[0].max(1e-300) || alpha == 0.0;
        if steps >= k && (steps % 8 == 0 || exhausted) {
            let ritz = ritz_triplets(&alphas, &betas, k)?;
            let top = ritz.0[0].max(f64::MIN_POSITIVE);
            let converged = ritz.2.iter().all(|r| *r <= tol * top);
            if converged || exhausted {
                break (ritz, steps, converged);
            }
        }
    };
    let kk = gamma.len();
    let mut left = Mat::zeros(n, kk);
    let mut right = Mat::zeros(m, kk);
    for c in 0..kk {
        for (j, uj) in us.iter().enumerate().take(p.nrows()) {
            let coef = p.read(j, c);
            for i in 0..n {
                left.write(i, c, left.read(i, c) + coef * uj[i]);
            }
        }
        for (j, vj) in vs.iter().enumerate().take(qm.nrows()) {
            let coef = qm.read(j, c);
            for i in 0..m {
                right.write(i, c, right.read(i, c) + coef * vj[i]);
            }
        }
    }
    fix_signs(&mut left, &mut right);
    Ok(PartialSvd { gamma, left, right, residuals, steps, converged })
}

type RitzSolve = (Vec<f64>, (Mat<f64>, Mat<f64>), Vec<f64>);

// SVD of the K×K upper bidiagonal B; for B = P Σ Qᵀ the residual of triplet i
// is β_K |P[K−1, i]|.
fn ritz_triplets(alphas: &[f64], betas: &[f64], k: usize) -> Result<RitzSolve> {
    let steps = alphas.len();
    let b = Mat::from_fn(steps, steps, |i, j| {
        if i == j {
            alphas[i]
        } else if j == i + 1 {
            betas[i]
        } else {
            0.0
        }
    });
    let dec = b.thin_svd();
    let s = dec.s_diagonal();
    let mut order: Vec<usize> = (0..steps).collect();
    order.sort_by(|&x, &y| s.read(y).total_cmp(&s.read(x)));
    let k = k.min(steps);
    let gamma: Vec<f64> = order[..k].iter().map(|&c| s.read(c)).collect();
    if gamma.iter().any(|g| !g.is_finite()) {
        return Err(Error::Svd { source_desc: "Lanczos bidiagonal".into(), reason: "non-finite Ritz values".into() });
    }
    let p = Mat::from_fn(steps, k, |i, c| dec.u().read(i, order[c]));
    let q = Mat::from_fn(steps, k, |i, c| dec.v().read(i, order[c]));
    let beta_last = betas[steps - 1];
    let residuals = (0..k).map(|c| (beta_last * p.read(steps - 1, c)).abs()).collect();
    Ok((gamma, (p, q), residuals))
}

fn mat_vec(w: MatRef<'_, f64>, x: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; w.nrows()];
    for (j, &xj) in x.iter().enumerate() {
        axpy(xj, w.col(j).try_as_slice().expect("owned matrices are column-contiguous"), &mut out);
    }
    out
}

fn mat_t_vec(w: MatRef<'_, f64>, y: &[f64]) -> Vec<f64> {
    (0..w.ncols())
        .map(|j| dot(w.col(j).try_as_slice().expect("owned matrices are column-contiguous"), y))
        .collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn axpy(a: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

fn normalize(x: &mut [f64]) -> f64 {
    let norm = dot(x, x).sqrt();
    if norm > 0.0 {
        x.iter_mut().for_each(|v| *v /= norm);
    }
    norm
}

// two passes of classical Gram–Schmidt
fn reorthogonalize(x: &mut [f64], basis: &[Vec<f64>]) {
    for _ in 0..2 {
        for b in basis {
            let c = dot(x, b);
            axpy(-c, b, x);
        }
    }
}
