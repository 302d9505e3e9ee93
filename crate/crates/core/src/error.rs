use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("domain error: {0}")]
    Domain(String),
    #[error("not on a collision course: {0}")]
    NotOnCollisionCourse(String),
    #[error("point lies outside the chart domain: {0}")]
    OutsideChart(String),
    #[error("no pericenter: {0}")]
    NoPericenter(String),
    #[error("integration failed: {0}")]
    StepFailure(String),
    #[error("unsupported: {0}")]
    Unsupported(String),
}

pub type Result<T> = std::result::Result<T, Error>;
