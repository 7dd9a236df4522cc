//! Signal/noise separation in the singular spectrum of weight matrices.
//!
//! The bulk of a noisy matrix's singular values follows the Marchenko–Pastur
//! law; values above a Tracy–Widom-corrected edge are treated as signal. For
//! each such spike the crate estimates the underlying signal strength and the
//! limiting squared cosine similarity between observed and signal singular
//! vectors, and summarizes them into a single weighted score.
//!
//! Module map:
//! - [`matrix`], [`io`], [`svd`]: ingestion, orientation, conv reshaping, SVD.
//! - [`mp`]: Marchenko–Pastur singular-value density, CDF and quantiles.
//! - [`tw`]: Tracy–Widom (order 1) quantiles.
//! - [`fit`]: BEMA and Gaussian-broadening estimators of the MP scale.
//! - [`bgn`]: threshold, spike count, signal strength, cosine similarity and
//!   the full analysis pipeline.
//! - [`lowrank`]: rank truncation and parameter accounting.
//! - [`sim`]: spiked-model generator and Monte Carlo harness.

pub mod bgn;
pub mod error;
pub mod fit;
pub mod io;
pub mod lowrank;
pub mod matrix;
pub mod mp;
pub mod numerics;
pub mod sim;
pub mod svd;
pub mod tw;

pub use bgn::{analyze, analyze_values, AnalysisConfig, SimilarityReport, Spike, ThresholdResult};
pub use error::{Error, Result};
pub use fit::{FitMethod, MpFit};
pub use matrix::{OrientedMatrix, Provenance, ReshapeMode};
pub use mp::MpParams;
pub use svd::SingularSpectrum;
pub use tw::TwTable;
