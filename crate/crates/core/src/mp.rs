//! Marchenko–Pastur law in singular-value form.
//!
//! For scale `σ` and aspect ratio `q ∈ (0, 1]` the density is
//!
//! ```text
//! g(x) = √((x² − x_min²)(x_max² − x²)) / (π q σ² x),   x ∈ [x_min, x_max]
//! x_min = σ(1 − √q),  x_max = σ(1 + √q)
//! ```
//!
//! Integrals against `g` are taken in the variable `u ∈ [0, π/2]` with
//! `x² = x_min² + (x_max² − x_min²)·sin²u`, which removes the square-root
//! behaviour at both edges:
//!
//! ```text
//! g(x) dx = 16 σ² sin²u cos²u / (π x²) du
//! ```

use std::f64::consts::{FRAC_PI_2, PI};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics;

/// Absolute tolerance for every quadrature against the density.
pub const QUAD_ABS_TOL: f64 = 1e-13;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MpParams {
    sigma: f64,
    q: f64,
}

impl MpParams {
    pub fn new(sigma: f64, q: f64) -> Result<Self> {
        if !(sigma.is_finite() && sigma > 0.0) {
            return Err(Error::InvalidArgument(format!("MP scale must be positive, got {sigma}")));
        }
        if !(q > 0.0 && q <= 1.0) {
            return Err(Error::InvalidArgument(format!("aspect ratio must lie in (0, 1], got {q}")));
        }
        Ok(MpParams { sigma, q })
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn q(&self) -> f64 {
        self.q
    }

    pub fn x_min(&self) -> f64 {
        self.sigma * (1.0 - self.q.sqrt())
    }

    pub fn x_max(&self) -> f64 {
        self.sigma * (1.0 + self.q.sqrt())
    }

    /// Density `g(x)`; zero outside the support. At `x = 0` with `q = 1` the
    /// continuous limit `2/(πσ)` is returned.
    pub fn density(&self, x: f64) -> f64 {
        let (lo, hi) = (self.x_min(), self.x_max());
        if !(x >= lo && x < hi) {
            return 0.0;
        }
        let s2 = self.sigma * self.sigma;
        if x == 0.0 {
            // only reachable when x_min = 0, i.e. q = 1
            return hi / (PI * self.q * s2);
        }
        let num = (x * x - lo * lo) * (hi * hi - x * x);
        num.max(0.0).sqrt() / (PI * self.q * s2 * x)
    }

    fn x_of_u(&self, u: f64) -> f64 {
        let (lo, hi) = (self.x_min(), self.x_max());
        let s = u.sin();
        (lo * lo + (hi * hi - lo * lo) * s * s).sqrt()
    }

    fn u_of_x(&self, x: f64) -> f64 {
        let (lo, hi) = (self.x_min(), self.x_max());
        let t = ((x * x - lo * lo) / (hi * hi - lo * lo)).clamp(0.0, 1.0);
        t.sqrt().asin()
    }

    // g(x(u)) · dx/du
    fn weight(&self, u: f64) -> f64 {
        let (lo, hi) = (self.x_min(), self.x_max());
        let (s, c) = u.sin_cos();
        let x2 = lo * lo + (hi * hi - lo * lo) * s * s;
        let s2 = self.sigma * self.sigma;
        if x2 == 0.0 {
            // q = 1, u = 0: sin²u / x² → 1 / x_max²
            return 16.0 * s2 * c * c / (PI * hi * hi);
        }
        16.0 * s2 * s * s * c * c / (PI * x2)
    }

    /// `∫ f(x) g(x) dx` over the support, by adaptive quadrature in `u`.
    pub fn expectation<F: Fn(f64) -> f64>(&self, f: F, abs_tol: f64) -> Result<f64> {
        self.expectation_between(f, 0.0, FRAC_PI_2, abs_tol)
    }

    fn expectation_between<F: Fn(f64) -> f64>(&self, f: F, u0: f64, u1: f64, abs_tol: f64) -> Result<f64> {
        let r = numerics::integrate(|u| f(self.x_of_u(u)) * self.weight(u), u0, u1, abs_tol, 0.0)?;
        Ok(r.value)
    }

    /// `P(X ≤ x)`.
    pub fn cdf(&self, x: f64) -> Result<f64> {
        if x <= self.x_min() {
            return Ok(0.0);
        }
        if x >= self.x_max() {
            return Ok(1.0);
        }
        let u = self.u_of_x(x);
        let v = self.expectation_between(|_| 1.0, 0.0, u, QUAD_ABS_TOL)?;
        Ok(v.clamp(0.0, 1.0))
    }

    /// `P(X ≥ x)`, integrated from the upper edge so small tails keep full
    /// relative precision.
    pub fn upper_tail(&self, x: f64) -> Result<f64> {
        if x <= self.x_min() {
            return Ok(1.0);
        }
        if x >= self.x_max() {
            return Ok(0.0);
        }
        let u = self.u_of_x(x);
        let v = self.expectation_between(|_| 1.0, u, FRAC_PI_2, QUAD_ABS_TOL)?;
        Ok(v.clamp(0.0, 1.0))
    }

    /// The point `x` with `∫_x^{x_max} g = mass`.
    pub fn upper_quantile(&self, mass: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&mass) {
            return Err(Error::InvalidArgument(format!("tail mass must lie in [0, 1], got {mass}")));
        }
        let (lo, hi) = (self.x_min(), self.x_max());
        if mass == 0.0 {
            return Ok(hi);
        }
        if mass == 1.0 {
            return Ok(lo);
        }
        let mut err = None;
        let root = numerics::find_root(
            |x| match self.upper_tail(x) {
                Ok(t) => t - mass,
                Err(e) => {
                    err.get_or_insert(e);
                    f64::NAN
                }
            },
            lo,
            hi,
            1e-13 * self.sigma,
        );
        if let Some(e) = err {
            return Err(e);
        }
        root
    }
}

/// Convenience wrapper: `g(x)` for `(σ, q)`.
pub fn mp_density(x: f64, p: &MpParams) -> f64 {
    p.density(x)
}

pub fn mp_cdf(x: f64, p: &MpParams) -> Result<f64> {
    p.cdf(x)
}

pub fn mp_upper_quantile(mass: f64, p: &MpParams) -> Result<f64> {
    p.upper_quantile(mass)
}

#[cfg(test)]
mod tests {
    use super::*;

    const QS: [f64; 5] = [0.1, 0.25, 0.5, 0.75, 1.0];

    // Plain x-space integration with the edges handled by the adaptive
    // bisection alone: an independent oracle for the substituted integral.
    fn naive_integral(p: &MpParams, a: f64, b: f64) -> f64 {
        numerics::integrate(|x| p.density(x), a, b, 1e-12, 0.0).unwrap().value
    }

    #[test]
    fn support_endpoints() {
        let p = MpParams::new(1.0, 1.0).unwrap();
        assert_eq!((p.x_min(), p.x_max()), (0.0, 2.0));
        assert_eq!(p.density(2.0), 0.0);
        assert_eq!(p.density(2.5), 0.0);
        assert_eq!(p.density(-0.1), 0.0);
        // continuous limit at the q = 1 origin
        assert!((p.density(0.0) - 2.0 / PI).abs() < 1e-15);
        assert!((p.density(1e-9) - p.density(0.0)).abs() < 1e-9);
        let p = MpParams::new(1.0, 0.5).unwrap();
        assert_eq!(p.density(p.x_min()), 0.0);
        assert_eq!(p.density(p.x_max()), 0.0);
    }

    #[test]
    fn density_value_against_quadrature_normalized_oracle() {
        // q = 0.5, σ = 1, x = 1: √((1 − x_min²)(x_max² − 1)) / (π/2)
        let p = MpParams::new(1.0, 0.5).unwrap();
        let (lo, hi) = (1.0 - 0.5f64.sqrt(), 1.0 + 0.5f64.sqrt());
        let direct = ((1.0 - lo * lo) * (hi * hi - 1.0)).sqrt() / (PI * 0.5);
        let total = naive_integral(&p, lo, hi);
        assert!((total - 1.0).abs() < 1e-9);
        assert!((p.density(1.0) - direct / total).abs() < 1e-9);
        assert!((p.density(1.0) - 0.842_168_798_695_584_7).abs() < 1e-12);
    }

    #[test]
    fn density_integrates_to_one() {
        for q in QS {
            for sigma in [0.05, 1.0, 3.0] {
                let p = MpParams::new(sigma, q).unwrap();
                let total = p.expectation(|_| 1.0, QUAD_ABS_TOL).unwrap();
                assert!((total - 1.0).abs() < 1e-8, "q={q} σ={sigma}: {total}");
                let naive = naive_integral(&p, p.x_min(), p.x_max());
                assert!((naive - 1.0).abs() < 1e-8, "naive q={q}: {naive}");
            }
        }
    }

    #[test]
    fn cdf_endpoints_and_monotonicity() {
        for q in QS {
            let p = MpParams::new(1.0, q).unwrap();
            assert_eq!(p.cdf(p.x_min()).unwrap(), 0.0);
            assert_eq!(p.cdf(p.x_max()).unwrap(), 1.0);
            let mut prev = 0.0;
            for i in 0..=1000 {
                let x = p.x_min() - 0.1 + (p.x_max() - p.x_min() + 0.2) * i as f64 / 1000.0;
                let c = p.cdf(x).unwrap();
                assert!(c >= prev, "q={q}, x={x}");
                prev = c;
            }
        }
        let p = MpParams::new(1.0, 1.0).unwrap();
        assert!((p.cdf(2.0).unwrap() - p.cdf(0.0).unwrap() - 1.0).abs() < 1e-8);
    }

    #[test]
    fn cdf_matches_naive_integral_and_tail() {
        for q in QS {
            let p = MpParams::new(1.0, q).unwrap();
            for f in [0.1, 0.37, 0.5, 0.81, 0.99] {
                let x = p.x_min() + f * (p.x_max() - p.x_min());
                let c = p.cdf(x).unwrap();
                assert!((c - naive_integral(&p, p.x_min(), x)).abs() < 1e-9);
                assert!((c + p.upper_tail(x).unwrap() - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn quantile_endpoints_and_roundtrip() {
        let p = MpParams::new(1.0, 0.5).unwrap();
        assert_eq!(p.upper_quantile(0.0).unwrap(), p.x_max());
        assert_eq!(p.upper_quantile(1.0).unwrap(), p.x_min());
        let median = p.upper_quantile(0.5).unwrap();
        assert!((p.cdf(median).unwrap() - 0.5).abs() < 1e-9);
        for q in QS {
            let p = MpParams::new(2.0, q).unwrap();
            for mass in [1e-6, 0.01, 0.2, 0.5, 0.8, 0.99, 1.0 - 1e-6] {
                let x = p.upper_quantile(mass).unwrap();
                assert!((p.upper_tail(x).unwrap() - mass).abs() < 1e-9, "q={q} mass={mass}");
            }
        }
    }

    #[test]
    fn invalid_inputs() {
        assert!(MpParams::new(0.0, 0.5).is_err());
        assert!(MpParams::new(-1.0, 0.5).is_err());
        assert!(MpParams::new(f64::NAN, 0.5).is_err());
        assert!(MpParams::new(1.0, 0.0).is_err());
        assert!(MpParams::new(1.0, 1.5).is_err());
        let p = MpParams::new(1.0, 0.5).unwrap();
        assert!(p.upper_quantile(-0.1).is_err());
        assert!(p.upper_quantile(1.1).is_err());
        assert!(p.upper_quantile(f64::NAN).is_err());
    }

    #[test]
    fn scale_equivariance() {
        for q in [0.25, 1.0] {
            let unit = MpParams::new(1.0, q).unwrap();
            for sigma in [0.05, 4.0] {
                let p = MpParams::new(sigma, q).unwrap();
                for i in 0..200 {
                    let x = sigma * (2.5 * i as f64 / 200.0);
                    let lhs = p.density(x);
                    let rhs = unit.density(x / sigma) / sigma;
                    assert!((lhs - rhs).abs() <= 1e-10 * (1.0 + rhs.abs()));
                }
                for mass in [0.1, 0.5, 0.9] {
                    let lhs = p.upper_quantile(mass).unwrap();
                    let rhs = sigma * unit.upper_quantile(mass).unwrap();
                    assert!((lhs - rhs).abs() <= 1e-10 * sigma);
                }
            }
        }
    }
}
