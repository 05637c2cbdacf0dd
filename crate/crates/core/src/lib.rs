//! Energy and latency aware offloading for IRS-aided multi-cell mobile edge computing.
//!
//! The crate evaluates the weighted energy-plus-latency cost of an offloading
//! decision and minimizes it by block coordinate descent, alternating a spatial
//! branch-and-bound solver for the computation block with a fractional
//! programming / majorization-minimization solver for the IRS phases and user
//! beamformers. Benchmark algorithms and the sweep driver live alongside.

pub mod linalg;
pub mod links;
pub mod lp;
pub mod mec;
pub mod bcd;
pub mod benchmarks;
pub mod experiment;
pub mod irs;
pub mod metrics;
pub mod scenario;

pub use linalg::{CMat, LinalgError, Real};
pub use links::PerLink;

/// Double-precision complex matrix used by the solvers.
pub type CMat64 = CMat<f64>;
/// Single-precision complex matrix.
pub type CMat32 = CMat<f32>;
