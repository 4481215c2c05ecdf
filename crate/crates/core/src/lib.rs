//! Exact numerics and Monte Carlo simulation for the serial harness: a
//! lattice interface in which every height is replaced, at each time step,
//! by a kernel-weighted average of nearby heights plus independent noise.
//!
//! Module map:
//! - [`kernel`]: the jump law, its symmetrization, powers, potential kernel.
//! - [`noise`]: counter-based i.i.d. noise.
//! - [`process`]: light-cone simulation of heights and increments, and the
//!   backward random-walk evaluator.
//! - [`invariant`]: stationary increment samplers and covariance routes.
//! - [`initialdata`]: initial increment laws with their analytic constants.
//! - [`limitcov`]: the Gaussian limit covariance.
//! - [`fluct`]: the scaled fluctuation field and its Monte Carlo estimates.

pub mod error;
pub mod fluct;
pub mod initialdata;
pub mod invariant;
pub mod kernel;
pub mod lattice;
pub mod limitcov;
pub mod noise;
pub mod par;
pub mod process;
pub mod quad;
pub mod stats;

pub use error::{HarnessError, RejectReason, Result};
pub use kernel::{validate_kernel, KernelAnalysis, KernelSpec, Walk};
pub use lattice::{Grid, LatticeBox};
pub use noise::{NoiseFamily, NoiseField, NoiseModel};
