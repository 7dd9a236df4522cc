//! Matrix ingestion types: orientation (n ≥ m) and conv-tensor flattening.

use std::fmt;
use std::str::FromStr;

use faer::Mat;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How a 4-D convolution kernel `(c_out, c_in, kh, kw)` is flattened into a
/// matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReshapeMode {
    /// `(c_out, c_in·kh·kw)`: row-major flattening of the last three axes.
    #[default]
    OutByRest,
    /// `(c_in, c_out·kh·kw)`: axes reordered to `(c_in, c_out, kh, kw)`
    /// before flattening.
    InByRest,
}

impl ReshapeMode {
    pub fn as_str(self) -> &'static str {
        match self {
            ReshapeMode::OutByRest => "out-by-rest",
            ReshapeMode::InByRest => "in-by-rest",
        }
    }
}

impl fmt::Display for ReshapeMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ReshapeMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "out-by-rest" => Ok(ReshapeMode::OutByRest),
            "in-by-rest" => Ok(ReshapeMode::InByRest),
            other => Err(Error::UnknownReshapeMode(other.to_string())),
        }
    }
}

/// A dense C-order array of any rank, as read from disk.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseArray {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl DenseArray {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(Error::InvalidShape(format!(
                "shape {shape:?} holds {expected} elements but {} were given",
                data.len()
            )));
        }
        Ok(DenseArray { shape, data })
    }
}

/// Flattens a `(c_out, c_in, kh, kw)` tensor stored in C order into a
/// row-major matrix. Returns `(rows, cols, data)`.
///
/// `OutByRest` is the identity on the underlying buffer. `InByRest` maps
/// element `[o, i, h, w]` to row `i`, column `o·kh·kw + h·kw + w`.
pub fn reshape_conv(
    shape: [usize; 4],
    data: &[f64],
    mode: ReshapeMode,
) -> Result<(usize, usize, Vec<f64>)> {
    let [c_out, c_in, kh, kw] = shape;
    if shape.contains(&0) {
        return Err(Error::InvalidShape(format!("conv tensor {shape:?} has an empty axis")));
    }
    if data.len() != c_out * c_in * kh * kw {
        return Err(Error::InvalidShape(format!(
            "conv tensor {shape:?} does not match buffer of {} elements",
            data.len()
        )));
    }
    let spatial = kh * kw;
    match mode {
        ReshapeMode::OutByRest => Ok((c_out, c_in * spatial, data.to_vec())),
        ReshapeMode::InByRest => {
            let cols = c_out * spatial;
            let mut out = vec![0.0; data.len()];
            for o in 0..c_out {
                for i in 0..c_in {
                    let src = (o * c_in + i) * spatial;
                    let dst = i * cols + o * spatial;
                    out[dst..dst + spatial].copy_from_slice(&data[src..src + spatial]);
                }
            }
            Ok((c_in, cols, out))
        }
    }
}

/// Inverse of [`reshape_conv`]: recovers the C-order tensor buffer.
pub fn unreshape_conv(shape: [usize; 4], matrix: &[f64], mode: ReshapeMode) -> Result<Vec<f64>> {
    let [c_out, c_in, kh, kw] = shape;
    if matrix.len() != c_out * c_in * kh * kw {
        return Err(Error::InvalidShape(format!(
            "matrix of {} elements cannot hold tensor {shape:?}",
            matrix.len()
        )));
    }
    let spatial = kh * kw;
    match mode {
        ReshapeMode::OutByRest => Ok(matrix.to_vec()),
        ReshapeMode::InByRest => {
            let cols = c_out * spatial;
            let mut out = vec![0.0; matrix.len()];
            for o in 0..c_out {
                for i in 0..c_in {
                    let dst = (o * c_in + i) * spatial;
                    let src = i * cols + o * spatial;
                    out[dst..dst + spatial].copy_from_slice(&matrix[src..src + spatial]);
                }
            }
            Ok(out)
        }
    }
}

/// Where a matrix came from and how it was massaged into shape.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub path: Option<String>,
    pub layer: Option<String>,
    /// Set only when the source was a 4-D conv tensor.
    pub reshape: Option<ReshapeMode>,
    pub original_shape: Vec<usize>,
    pub transposed: bool,
}

impl Provenance {
    pub fn describe(&self) -> String {
        match (&self.path, &self.layer) {
            (Some(p), Some(l)) => format!("{p}[{l}]"),
            (Some(p), None) => p.clone(),
            (None, Some(l)) => l.clone(),
            (None, None) => "<in-memory matrix>".to_string(),
        }
    }
}

/// A real `n × m` matrix with `n ≥ m ≥ 2` and finite entries.
#[derive(Debug, Clone)]
pub struct OrientedMatrix {
    data: Mat<f64>,
    source: Provenance,
}

impl OrientedMatrix {
    /// Builds from a row-major `rows × cols` buffer, transposing when
    /// `rows < cols`.
    pub fn from_row_major(
        rows: usize,
        cols: usize,
        data: &[f64],
        mut source: Provenance,
    ) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::InvalidShape(format!(
                "{rows}x{cols} matrix does not match buffer of {} elements",
                data.len()
            )));
        }
        check_finite(data)?;
        let transpose = rows < cols;
        let (n, m) = if transpose { (cols, rows) } else { (rows, cols) };
        if m < 2 {
            return Err(Error::TooSmall { n, m });
        }
        let mat = if transpose {
            Mat::from_fn(n, m, |i, j| data[j * cols + i])
        } else {
            Mat::from_fn(n, m, |i, j| data[i * cols + j])
        };
        if source.original_shape.is_empty() {
            source.original_shape = vec![rows, cols];
        }
        source.transposed = transpose;
        Ok(OrientedMatrix { data: mat, source })
    }

    /// Wraps an in-memory matrix, transposing it if it has fewer rows than
    /// columns.
    pub fn from_mat(mat: Mat<f64>, mut source: Provenance) -> Result<Self> {
        let transpose = mat.nrows() < mat.ncols();
        let mat = if transpose { mat.transpose().to_owned() } else { mat };
        let (n, m) = (mat.nrows(), mat.ncols());
        if m < 2 {
            return Err(Error::TooSmall { n, m });
        }
        let mut bad = 0usize;
        let mut first = usize::MAX;
        for j in 0..m {
            for i in 0..n {
                if !mat.read(i, j).is_finite() {
                    bad += 1;
                    first = first.min(i * m + j);
                }
            }
        }
        if bad > 0 {
            return Err(Error::NonFinite { count: bad, first });
        }
        if source.original_shape.is_empty() {
            source.original_shape =
                if transpose { vec![m, n] } else { vec![n, m] };
        }
        source.transposed = source.transposed != transpose;
        Ok(OrientedMatrix { data: mat, source })
    }

    /// Builds from any supported array: 2-D as is, 4-D through
    /// [`reshape_conv`].
    pub fn from_array(array: &DenseArray, mode: ReshapeMode, mut source: Provenance) -> Result<Self> {
        source.original_shape = array.shape.clone();
        match array.shape.as_slice() {
            &[rows, cols] => Self::from_row_major(rows, cols, &array.data, source),
            &[a, b, c, d] => {
                let (rows, cols, flat) = reshape_conv([a, b, c, d], &array.data, mode)?;
                source.reshape = Some(mode);
                Self::from_row_major(rows, cols, &flat, source)
            }
            other => Err(Error::InvalidShape(format!(
                "expected a 2-D or 4-D array, got shape {other:?}"
            ))),
        }
    }

    pub fn nrows(&self) -> usize {
        self.data.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.data.ncols()
    }

    /// Aspect ratio `q = m / n ∈ (0, 1]`.
    pub fn aspect_ratio(&self) -> f64 {
        self.ncols() as f64 / self.nrows() as f64
    }

    pub fn transposed(&self) -> bool {
        self.source.transposed
    }

    pub fn source(&self) -> &Provenance {
        &self.source
    }

    pub fn mat(&self) -> &Mat<f64> {
        &self.data
    }

    pub fn into_mat(self) -> Mat<f64> {
        self.data
    }

    /// Returns `c·W` with the same provenance.
    pub fn scaled(&self, c: f64) -> OrientedMatrix {
        OrientedMatrix { data: Mat::from_fn(self.nrows(), self.ncols(), |i, j| c * self.data.read(i, j)), source: self.source.clone() }
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.norm_l2()
    }
}

fn check_finite(data: &[f64]) -> Result<()> {
    let mut bad = data.iter().enumerate().filter(|(_, v)| !v.is_finite());
    if let Some((first, _)) = bad.next() {
        return Err(Error::NonFinite { count: 1 + bad.count(), first });
    }
    Ok(())
}
