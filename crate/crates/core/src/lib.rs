//! Robust non-coherent downlink beamforming for multipath MIMO channels.
//!
//! A base station knows the spatial signature of every propagation path of a
//! user but only the statistics of the per-path phases. This crate builds the
//! channel model, the single-user designs (stationary and worst-case), the
//! multi-user designs (zero forcing and regularized ZF / SLNR), and a Monte
//! Carlo harness that compares them with coherent and uniform baselines.
//!
//! Module map:
//!
//! - [`array_channel`]: array geometry, steering vectors, path signatures,
//!   phase models and channel realizations.
//! - [`spectral`]: Hermitian eigen-solvers, null-space projectors and the
//!   generalized dominant eigenvector.
//! - [`su`]: single-user beamformers.
//! - [`mu`]: multi-user beamformers.
//! - [`eval`]: scenario synthesis, evaluation, frequency sweeps and CDFs.
//! - [`cli`]: the `noncobf` command-line front end.

pub mod array_channel;
pub mod cli;
pub mod error;
pub mod eval;
pub mod mu;
pub mod spectral;
pub mod su;

pub use error::{Error, Result};

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

/// Complex double precision scalar.
pub type C64 = Complex64;
/// Dense complex matrix.
pub type CMatrix = DMatrix<C64>;
/// Dense complex column vector.
pub type CVector = DVector<C64>;
