//! Tracy–Widom (order 1) quantiles from an embedded table.
//!
//! The table in `data/tw1_quantiles.csv` was produced by
//! `tools/gen_tw_table.py`, which evaluates `F₁(s) = det(I − K)` with
//! `K(x, y) = Ai((x + y)/2)/2` on `L²(s, ∞)` by Nyström discretization.
//! Between knots the quantile function is interpolated with a monotone
//! piecewise-cubic Hermite (Fritsch–Carlson) interpolant.

use std::path::Path;
use std::sync::OnceLock;

use crate::error::{Error, Result};

const EMBEDDED: &str = include_str!("../data/tw1_quantiles.csv");

/// Monotone table of `(probability level, quantile)` pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct TwTable {
    levels: Vec<f64>,
    values: Vec<f64>,
    slopes: Vec<f64>,
}

impl TwTable {
    pub fn new(levels: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if levels.len() != values.len() || levels.len() < 2 {
            return Err(Error::InvalidArgument("TW table needs at least two (level, value) pairs".into()));
        }
        if levels.iter().any(|&p| !(p > 0.0 && p < 1.0)) {
            return Err(Error::InvalidArgument("TW table levels must lie in (0, 1)".into()));
        }
        if !levels.windows(2).all(|w| w[0] < w[1]) || !values.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::InvalidArgument("TW table must be strictly increasing".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("TW table values must be finite".into()));
        }
        let slopes = pchip_slopes(&levels, &values);
        Ok(TwTable { levels, values, slopes })
    }

    /// Parses `level,value` lines.
    pub fn from_csv(text: &str) -> Result<Self> {
        let mut levels = Vec::new();
        let mut values = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let parse = |s: Option<&str>| -> Result<f64> {
                s.and_then(|s| s.trim().parse().ok()).ok_or_else(|| {
                    Error::InvalidArgument(format!("TW table line {}: expected `level,value`", i + 1))
                })
            };
            let mut fields = line.split(',');
            levels.push(parse(fields.next())?);
            values.push(parse(fields.next())?);
        }
        TwTable::new(levels, values)
    }

    pub fn from_csv_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        TwTable::from_csv(&text)
    }

    /// The embedded order-1 table.
    pub fn embedded() -> &'static TwTable {
        static TABLE: OnceLock<TwTable> = OnceLock::new();
        TABLE.get_or_init(|| TwTable::from_csv(EMBEDDED).expect("embedded TW table is valid"))
    }

    pub fn levels(&self) -> &[f64] {
        &self.levels
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Quantile at probability `level` (so `t_{1−β}` is `quantile(1 − β)`).
    /// Levels outside the tabulated range are refused, not extrapolated.
    pub fn quantile(&self, level: f64) -> Result<f64> {
        if !(level > 0.0 && level < 1.0) {
            return Err(Error::InvalidArgument(format!("TW level must lie in (0, 1), got {level}")));
        }
        let (first, last) = (self.levels[0], self.levels[self.levels.len() - 1]);
        if level < first || level > last {
            return Err(Error::InvalidArgument(format!(
                "TW level {level} is outside the table range [{first}, {last}]"
            )));
        }
        let k = match self.levels.partition_point(|&p| p <= level) {
            0 => 0,
            i => (i - 1).min(self.levels.len() - 2),
        };
        let (x0, x1) = (self.levels[k], self.levels[k + 1]);
        let (y0, y1) = (self.values[k], self.values[k + 1]);
        let h = x1 - x0;
        let t = (level - x0) / h;
        let (t2, t3) = (t * t, t * t * t);
        let h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
        let h10 = t3 - 2.0 * t2 + t;
        let h01 = -2.0 * t3 + 3.0 * t2;
        let h11 = t3 - t2;
        Ok(h00 * y0 + h10 * h * self.slopes[k] + h01 * y1 + h11 * h * self.slopes[k + 1])
    }
}

/// `t_{1−β}` from the embedded table.
pub fn tw_quantile(level: f64) -> Result<f64> {
    TwTable::embedded().quantile(level)
}

// Fritsch–Carlson derivative estimates, as in PCHIP.
fn pchip_slopes(x: &[f64], y: &[f64]) -> Vec<f64> {
    let n = x.len();
    let h: Vec<f64> = x.windows(2).map(|w| w[1] - w[0]).collect();
    let delta: Vec<f64> = (0..n - 1).map(|k| (y[k + 1] - y[k]) / h[k]).collect();
    if n == 2 {
        return vec![delta[0], delta[0]];
    }
    let mut d = vec![0.0; n];
    for k in 1..n - 1 {
        if delta[k - 1] * delta[k] <= 0.0 {
            d[k] = 0.0;
        } else {
            let w1 = 2.0 * h[k] + h[k - 1];
            let w2 = h[k] + 2.0 * h[k - 1];
            d[k] = (w1 + w2) / (w1 / delta[k - 1] + w2 / delta[k]);
        }
    }
    d[0] = end_slope(h[0], h[1], delta[0], delta[1]);
    d[n - 1] = end_slope(h[n - 2], h[n - 3], delta[n - 2], delta[n - 3]);
    d
}

fn end_slope(h0: f64, h1: f64, d0: f64, d1: f64) -> f64 {
    let d = ((2.0 * h0 + h1) * d0 - h0 * d1) / (h0 + h1);
    if d.signum() != d0.signum() {
        0.0
    } else if d0.signum() != d1.signum() && d.abs() > 3.0 * d0.abs() {
        3.0 * d0
    } else {
        d
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    // Published TW₁ percentiles (Tracy–Widom tabulations reproduced in the
    // random-matrix literature, four decimals).
    const PUBLISHED: [(f64, f64); 9] = [
        (0.01, -3.8954),
        (0.05, -3.1804),
        (0.10, -2.7824),
        (0.30, -1.9104),
        (0.50, -1.2686),
        (0.70, -0.5923),
        (0.90, 0.4501),
        (0.95, 0.9793),
        (0.99, 2.0234),
    ];

    #[test]
    fn matches_published_percentiles() {
        for (level, want) in PUBLISHED {
            let got = tw_quantile(level).unwrap();
            assert!((got - want).abs() <= 1e-3, "level {level}: {got} vs {want}");
        }
    }

    #[test]
    fn default_beta_quantile() {
        let t = tw_quantile(1.0 - 0.1).unwrap();
        assert!((t - 0.4501).abs() <= 1e-3);
        assert!(tw_quantile(0.95).unwrap() > tw_quantile(0.90).unwrap());
    }

    #[test]
    fn reproduces_knots_exactly() {
        let t = TwTable::embedded();
        for (&p, &v) in t.levels().iter().zip(t.values()) {
            assert!((t.quantile(p).unwrap() - v).abs() <= 1e-12);
        }
    }

    #[test]
    fn strictly_monotone_between_knots() {
        let t = TwTable::embedded();
        let (lo, hi) = (t.levels()[0], *t.levels().last().unwrap());
        let mut prev = f64::NEG_INFINITY;
        for i in 0..=20_000 {
            let p = lo + (hi - lo) * i as f64 / 20_000.0;
            let v = t.quantile(p.min(hi)).unwrap();
            assert!(v > prev, "not increasing at {p}");
            prev = v;
        }
    }

    #[test]
    fn rejects_out_of_range_levels() {
        for bad in [0.0, 1.0, -0.5, 1.5, f64::NAN, 0.0001, 0.9999] {
            assert!(tw_quantile(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn csv_override() {
        let t = TwTable::from_csv("# level,value\n0.5,-1.27\n0.9,0.45\n0.95,0.98\n").unwrap();
        assert!((t.quantile(0.9).unwrap() - 0.45).abs() < 1e-15);
        let mid = t.quantile(0.7).unwrap();
        assert!(mid > -1.27 && mid < 0.45);
        assert!(TwTable::from_csv("0.5,1\n0.4,2\n").is_err());
        assert!(TwTable::from_csv("0.5,1\n0.6,0.5\n").is_err());
        assert!(TwTable::from_csv("0.5\n").is_err());
        assert!(TwTable::from_csv("0.5,1\n").is_err());
    }
}
