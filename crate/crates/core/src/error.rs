//! Error types shared by every module in the crate.

use thiserror::Error;

/// Errors produced by cloud construction, alignment measures, and the reducer.
#[derive(Debug, Error)]
pub enum NsaError {
    /// Input violated a precondition (shape bounds, parameter ranges, non-finite data).
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// Two clouds that must share a point count (or list lengths) do not.
    #[error("shape mismatch: {0}")]
    ShapeError(String),

    /// A normalizer collapsed below the configured floor (all points at the origin).
    #[error("degenerate cloud: {0}")]
    DegenerateCloud(String),

    /// A neighborhood's reference distance collapsed below the distance floor.
    #[error("degenerate neighborhood: {0}")]
    DegenerateNeighborhood(String),

    /// A computation produced a non-finite value.
    #[error("numerical error: {0}")]
    NumericalError(String),

    /// Pearson correlation is undefined because one distance set has zero variance.
    #[error("undefined correlation: {0}")]
    UndefinedCorrelation(String),

    /// The optimizer produced a non-finite loss.
    #[error("optimization diverged at epoch {epoch}")]
    Diverged { epoch: usize },
}

pub type Result<T> = std::result::Result<T, NsaError>;
