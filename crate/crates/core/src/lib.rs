//! Semi-discrete sliced-Wasserstein dynamics.
//!
//! The optimized measure is a uniform point cloud `μ_X = (1/N) Σ δ_{X_i}` in `R^d`
//! and the target `ρ` is only ever accessed through its 1D projections `ρ_θ`.
//! Everything downstream reduces to per-direction 1D optimal transport:
//!
//! - [`directions`]: deterministic quadratures of the uniform measure on the sphere.
//! - [`targets`]: quantiles, Power-cell barycenters and moments of `ρ_θ`.
//! - [`ot1d`]: sorting permutations and exact 1D transport costs.
//! - [`swgrad`]: the energy `F(X) = ½ SW₂²(μ_X, ρ)`, its gradient and the criticality residual.
//! - [`descent`]: fixed-step gradient descent with per-iteration monitoring.
//! - [`landscape`]: critical-point constructors, perturbation curves and cell analysis
//!   of the fixed-direction estimator.

use thiserror::Error;

pub mod descent;
pub mod directions;
pub mod io;
pub mod landscape;
pub mod ot1d;
pub mod special;
pub mod swgrad;
pub mod targets;

mod sum;

pub use descent::{run_descent, DescentConfig, DescentTrace, StopReason};
pub use directions::DirectionSet;
pub use swgrad::{GradientReport, PointCloud, SlicedEnergy};
pub use targets::{CellTable, ProjectedTarget};

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),

    /// Two particles coincide; the energy is not differentiable there.
    #[error("point cloud lies on the generalized diagonal (particles {0} and {1} coincide)")]
    OnDiagonal(usize, usize),

    /// Two particles share a projection on a fixed direction, so the cell is not unique.
    #[error("tie between projected particles on direction {direction}")]
    TieInDirection { direction: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
