//! Numerical toolkit for the overdamped Josephson junction model
//! `dφ/dt = −sin φ + B + A cos ωt`, viewed both as a flow on the torus and as a 2×2 linear
//! system on the Riemann sphere.

// NaN-rejecting validation is written as `!(x > 0.0)` throughout.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod error;
pub mod heun;
pub mod integrate;
pub mod isomono;
pub mod linalg;
pub mod monodromy;
pub mod params;
pub mod poincare;
pub mod portrait;
pub mod roots;
pub mod slowfast;

pub use error::{Error, Result};
pub use integrate::OdeSettings;
pub use params::{HeunParams, PhysParams, ReducedParams};

/// Crate version embedded in every emitted file.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
