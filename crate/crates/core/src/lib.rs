//! Rank-based change-point detection with quadratic discrepancies.
//!
//! Observations are mapped to empirical vector ranks on a Sobol point set,
//! windows of ranks are scored by a generalized quadratic discrepancy, and
//! the resulting diphoragram is tested against the limit law of the scaled
//! discrepancy.

pub mod detect;
pub mod discrepancy;
pub mod error;
pub mod harness;
pub mod kernels;
pub mod lds;
pub mod matrix;
pub mod nulldist;
pub mod transport;

pub use detect::{ChangePointReport, DetectionParams, Detector, Method};
pub use discrepancy::{Diphoragram, EmpiricalMeasure, GramMatrix, SampleKernel};
pub use error::{Error, Result};
pub use kernels::{KernelFamily, KernelSpec};
pub use matrix::{Matrix, ObservationMatrix};
pub use nulldist::{NullDecision, NullTestParams, Spectrum};
pub use transport::RankedSample;

/// Crate version, recorded in reports.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
