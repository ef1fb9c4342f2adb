//! Numerical machinery for weak-type (1,1) bounds of Bergman-type projections
//! on the unit ball 𝔹ⁿ with the normalized volume measure ν.
//!
//! - [`geometry`]: points of 𝔹ⁿ, Möbius maps, the quasi-metric `[x, y]` and Δ_h.
//! - [`quadrature`]: seeded samplers and integration against ν.
//! - [`dyadic`]: lazily realized dyadic cubes.
//! - [`functions`]: integrable test functions.
//! - [`czd`]: Calderón–Zygmund decomposition and its checks.
//! - [`kernels`]: model reproducing kernels and bound estimators.
//! - [`projector`]: `Pf`, distribution functions, weak-type scans and the full pipeline check.

// `!(x > 0.0)` rejects NaN on purpose
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod czd;
pub mod dyadic;
pub mod functions;
pub mod geometry;
pub mod kernels;
pub mod projector;
pub mod quadrature;

use thiserror::Error;

pub use czd::{decompose, CZDecomposition, CzdError, DecomposeOptions, GoodBadSplit};
pub use dyadic::{CubeId, DyadicConfig, DyadicError, DyadicSystem};
pub use functions::{FunctionError, FunctionSpec, IntegrableFunction, Support};
pub use geometry::{BallPoint, GeometryError};
pub use kernels::{BoundConfig, BoundReport, Kernel, KernelError, KernelSpec};
pub use num_complex::Complex64;
pub use projector::{
    cz_pipeline_check, project, weak_type_scan, Integrator, PipelineOptions, PipelineReport, ProjectorError,
    ScanConfig, WeakTypeReport,
};
pub use quadrature::{Estimate, QuadratureError, SamplerConfig, Scheme};

/// Any error raised by this crate.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Quadrature(#[from] QuadratureError),
    #[error(transparent)]
    Dyadic(#[from] DyadicError),
    #[error(transparent)]
    Function(#[from] FunctionError),
    #[error(transparent)]
    Czd(#[from] CzdError),
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error(transparent)]
    Projector(#[from] ProjectorError),
}

impl Error {
    /// Whether the error comes from a failed numerical estimate rather than bad input.
    pub fn is_numerical(&self) -> bool {
        match self {
            Self::Quadrature(_) => true,
            Self::Dyadic(e) => matches!(e, DyadicError::Estimation(..)),
            Self::Czd(e) => czd_numerical(e),
            Self::Kernel(e) => kernel_numerical(e),
            Self::Projector(e) => projector_numerical(e),
            Self::Geometry(_) | Self::Function(_) => false,
        }
    }
}

fn czd_numerical(e: &CzdError) -> bool {
    matches!(
        e,
        CzdError::Quadrature(_) | CzdError::Dyadic(DyadicError::Estimation(..))
    )
}

fn kernel_numerical(e: &KernelError) -> bool {
    matches!(
        e,
        KernelError::NonFinite { .. } | KernelError::Quadrature(_) | KernelError::Truncation { .. }
    )
}

fn projector_numerical(e: &ProjectorError) -> bool {
    match e {
        ProjectorError::Quadrature(_) => true,
        ProjectorError::Kernel(e) => kernel_numerical(e),
        ProjectorError::Czd(e) => czd_numerical(e),
        ProjectorError::Stage { source, .. } => projector_numerical(source),
        _ => false,
    }
}
