//! Sign percolation of stationary planar Gaussian fields.
//!
//! The crate provides the full experimental stack: covariance kernels,
//! exact and spectral Gaussian samplers, self-dual lattice discretizations,
//! sign colorings, crossing/circuit/arm events, the quantitative constant
//! calculus behind box-crossing lower bounds, sign-coupling comparisons,
//! nodal-set diagnostics, and a replication-grade experiment driver.

/// Library version, re-exported so downstream tools can log it.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub mod coloring;
pub mod constants;
pub mod coupling;
pub mod experiments;
pub mod kernels;
pub mod lattice;
pub mod nodal;
pub mod percolation;
pub mod sampler;

/// Unified error type for every fallible operation in the crate.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Malformed input: the message names the offending field or key.
    #[error("validation: {0}")]
    Validation(String),
    /// Arguments outside the mathematical domain of the operation.
    #[error("domain: {0}")]
    Domain(String),
    /// The operation is not defined for the given variant or size.
    #[error("unsupported: {0}")]
    Unsupported(String),
    /// A covariance matrix that must be positive definite is not,
    /// even after the permitted diagonal jitter.
    #[error("degenerate covariance: {0}")]
    Degenerate(String),
    /// Circulant embedding kept too much negative spectral mass even at
    /// the largest permitted padding factor.
    #[error(
        "circulant embedding failed: clipped spectral mass {clipped_mass:.3e} \
         exceeds 1e-3 at padding factor {padding}"
    )]
    Embedding { clipped_mass: f64, padding: usize },
    /// A discretization is too coarse for the requested statistic.
    #[error("resolution: {0}")]
    Resolution(String),
    /// The job would exceed the configured memory budget.
    #[error("resource limit: need {needed_bytes} bytes > cap {cap_bytes}; {suggestion}")]
    Resource {
        needed_bytes: u64,
        cap_bytes: u64,
        suggestion: String,
    },
}

pub type Result<T> = std::result::Result<T, Error>;
