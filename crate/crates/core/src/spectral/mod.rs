//! Periodic-box spectral representation and the operators shared by every model.

mod cutoff;
mod field;
mod grid;
mod ops;

pub use cutoff::{GalerkinCutoff, Part};
pub use field::SpectralField;
pub use grid::Grid;
pub use ops::{
    advect, biot_savart, curl, fractional_laplacian, galerkin_project, gradient, l4_norm, leray_project,
    pointwise, sobolev_norm,
};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpectralError {
    #[error("{op}: field must have zero mean")]
    MeanZeroViolation { op: &'static str },
    #[error("fields live on different grids")]
    GridMismatch,
    #[error("expected a {expected}-component field, found {found}")]
    ComponentMismatch { expected: usize, found: usize },
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
}
