use thiserror::Error;

/// Crate-wide error type. Construction errors name the violated quantity so
/// callers can report which hypothesis or inequality failed.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("stencil too large for grid: {0}")]
    StencilTooLarge(String),
    #[error("restriction target exceeds parent rectangle: {0}")]
    RestrictOutOfBounds(String),
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("hypothesis check failed: {0}")]
    HypothesisViolated(String),
    #[error("degenerate Hessian: {0}")]
    DegenerateHessian(String),
    #[error("metric not positive definite: {0}")]
    MetricNotPositiveDefinite(String),
    #[error("epsilon too large: {0}")]
    EpsilonTooLarge(String),
    #[error("characteristic exited the domain: {0}")]
    CharacteristicExit(String),
    #[error("characteristic fold, xi_x <= 0: {0}")]
    CharacteristicFold(String),
    #[error("mixed coefficient residual above tolerance: {0}")]
    MixedResidual(String),
    #[error("strip construction: violated {0}")]
    StripConstruction(String),
    #[error("assembly requires theta > 0")]
    NonPositiveTheta,
    #[error("linear solve failed: {0}")]
    SolveFailed(String),
    #[error("smoothing requires gamma >= 1, got {0}")]
    GammaTooSmall(f64),
    #[error("probe violates support/boundary precondition: {0}")]
    BadProbe(String),
    #[error("config: {0}")]
    Config(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
