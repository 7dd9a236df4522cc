use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("unsupported array format: {0}")]
    UnsupportedFormat(String),
    #[error("unsupported dtype {0:?} (expected little-endian float32 or float64)")]
    UnsupportedDtype(String),
    #[error("invalid shape: {0}")]
    InvalidShape(String),
    #[error("matrix has {count} non-finite entries (first at flat index {first})")]
    NonFinite { count: usize, first: usize },
    #[error("matrix is {n}x{m} after orientation; need at least 2 rows and 2 columns")]
    TooSmall { n: usize, m: usize },
    #[error("unknown reshape mode {0:?} (expected out-by-rest or in-by-rest)")]
    UnknownReshapeMode(String),
    #[error("manifest: {0}")]
    Manifest(String),
    #[error("SVD failed for {source_desc}: {reason}")]
    Svd { source_desc: String, reason: String },
    #[error("quadrature failed: {0}")]
    Quadrature(String),
    #[error("root bracketing failed: {0}")]
    Bracket(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("empty trim range: alpha = {alpha} leaves no index for m = {m}")]
    EmptyTrimRange { alpha: f64, m: usize },
    #[error("degenerate spectrum: {0}")]
    DegenerateSpectrum(String),
    #[error("singular value {gamma} is not above the bulk edge {edge}")]
    InsideBulk { gamma: f64, edge: f64 },
    #[error("cosine similarity {0} lies outside [0, 1]")]
    PhiOutOfRange(f64),
    #[error("D' cross-check failed: analytic {analytic:e}, finite difference {numeric:e}")]
    DerivativeMismatch { analytic: f64, numeric: f64 },
    #[error("no spikes above the threshold; the weighted similarity is undefined")]
    NoSpikes,
    #[error("rank {s} exceeds the number of singular values {m}")]
    RankTooLarge { s: usize, m: usize },
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    /// True for errors caused by the input files or arguments rather than a
    /// numerical failure.
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            Error::Io { .. }
                | Error::UnsupportedFormat(_)
                | Error::UnsupportedDtype(_)
                | Error::InvalidShape(_)
                | Error::NonFinite { .. }
                | Error::TooSmall { .. }
                | Error::UnknownReshapeMode(_)
                | Error::Manifest(_)
                | Error::InvalidArgument(_)
                | Error::RankTooLarge { .. }
                | Error::Json(_)
        )
    }
}
