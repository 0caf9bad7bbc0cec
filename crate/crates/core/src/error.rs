use thiserror::Error;

use crate::pipeline::RunReport;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid dimension: {0}")]
    InvalidDimension(String),

    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("domain error: {0}")]
    DomainError(String),

    /// Cost or gradient became non-finite. The pipeline attaches the state
    /// reached before the failing training pass.
    #[error("numerical divergence at iteration {iteration}")]
    NumericalDivergence {
        iteration: usize,
        partial: Option<Box<RunReport>>,
    },

    #[error("least squares is overdetermined in the wrong direction: {m} unknowns for {n} samples")]
    Overdetermined { m: usize, n: usize },

    #[error("design matrix is ill-conditioned (condition estimate {condition:e})")]
    IllConditioned { condition: f64 },

    #[error("Fisher information matrix is singular")]
    SingularInformation,

    #[error("residual is exactly zero")]
    DegenerateResidual,

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
