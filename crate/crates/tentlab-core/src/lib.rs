//! tentlab-core: weighted tent spaces on finite metric measure spaces.
//!
//! The crate builds, on a finite discretization of a space of homogeneous
//! type, the full chain from geometry to decomposition:
//!
//! - [`space`]: metric measure spaces, balls, doubling diagnostics, maximal
//!   function, weighted Lebesgue norms, greedy nets;
//! - [`dyadic`]: systems of dyadic cubes and Whitney covers of open sets;
//! - [`weights`]: Muckenhoupt A_p and reverse-Holder machinery;
//! - [`tent`]: the discretized upper half-space, cones/tents, the area
//!   functional, weighted tent norms, q-atoms, density sets;
//! - [`decomp`]: the constructive q-atomic decomposition of weighted tent
//!   functions, reconstruction, and coefficient reports;
//! - [`hardy`]: spectral calculus for a nonnegative self-adjoint operator,
//!   square functions, the reproducing-formula pipeline, and Hardy atoms;
//! - [`io`]: document formats, experiment configs, and the batch driver.
//!
//! With the default `parallel` feature the data-parallel inner loops run on
//! rayon; disabling it yields a dependency-light sequential build with
//! byte-identical outputs.

pub mod decomp;
pub mod dyadic;
pub(crate) mod exec;
pub mod hardy;
pub mod hash;
pub mod io;
pub mod space;
pub mod tent;
#[cfg(test)]
pub(crate) mod testutil;
pub mod weights;

use thiserror::Error;

/// Library version embedded in reports.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Caps the global worker pool (no-op without the `parallel` feature).
/// Call once, before any parallel work.
#[cfg(feature = "parallel")]
pub fn configure_threads(n: usize) -> std::result::Result<(), String> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| e.to_string())
}

#[cfg(not(feature = "parallel"))]
pub fn configure_threads(_n: usize) -> std::result::Result<(), String> {
    Ok(())
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid space: {0}")]
    InvalidSpace(String),
    #[error("invalid weight: {0}")]
    InvalidWeight(String),
    #[error("invalid parameter: {0}")]
    InvalidParam(String),
    #[error("invalid document: {0}")]
    InvalidDocument(String),
    #[error("quadrature did not converge: {0}")]
    Quadrature(String),
    #[error("decomposition failed: {0}")]
    Decomposition(String),
    #[error("invariant violated: {0}")]
    InvariantViolated(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
