//! Numerical laboratory for degenerate jump-driven SDEs.
//!
//! The crate simulates flows of the form `dX = b(X)dt + ∫σ(X-,z)N(dt,dz)`
//! driven by a truncated α-stable-like Poisson random measure, together with
//! their Jacobians, and provides the objects needed to study hypoellipticity
//! of the associated nonlocal generator: bracket chains, Malliavin covariance
//! matrices, Bismut jump perturbations, time-reversed inverse flows,
//! principal-value operator quadrature and Monte-Carlo semigroup tools.
//!
//! Everything is generic over the state dimension `D` (the noise lives in the
//! same space). Monte-Carlo batches are reproducible: path `i` always draws
//! from the counter-based stream `(seed, i)` and reductions run in a fixed
//! order, so results do not depend on the number of worker threads.

// Negated comparisons are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::too_many_arguments, clippy::type_complexity)]

pub mod brackets;
pub mod coeffs;
pub mod error;
pub mod flow;
pub mod kernel;
pub mod levy;
pub mod linalg;
pub mod malliavin;
pub mod operator;
pub mod par;
pub mod quad;
pub mod reversal;
pub mod rng;
pub mod stats;

pub use error::{Error, Result};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Points of the state (and noise) space.
pub type Vector<const D: usize> = nalgebra::SVector<f64, D>;
/// Square matrices acting on [`Vector`].
pub type Matrix<const D: usize> = nalgebra::SMatrix<f64, D, D>;
