use std::io;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("argument {t} is outside the domain [0, {max}]")]
    DomainExceeded { t: f64, max: f64 },
    #[error("value {s} is outside the attainable range [0, {max}]")]
    OutOfRange { s: f64, max: f64 },
    #[error("derivative does not exist at t = {t}")]
    NotDifferentiable { t: f64 },
    #[error("misfit function fails the sampled convexity test near t = {at}")]
    NotConvex { at: f64 },
    #[error("rate function fails the sampled concavity test near t = {at}")]
    NotConcave { at: f64 },
    #[error("derivative vanishes or is negative at t = {at}")]
    DegenerateDerivative { at: f64 },
    #[error("not an index function: {0}")]
    NotIndexFunction(String),
    #[error("supplied subgradient differs from the penalty gradient by {mismatch:e}")]
    GradientMismatch { mismatch: f64 },
    #[error("level-set sampling failed: {0}")]
    SamplingFailed(String),
    #[error("non-finite functional value encountered")]
    NonFiniteValue,
    #[error("not supported: {0}")]
    NotSupported(String),
    #[error("parameter rule violates the convergence conditions: {0}")]
    RuleViolation(String),
    #[error("no source element reproduces xi (residual {residual:e})")]
    SourceConditionFails { residual: f64 },
    #[error("bracket expansion failed to straddle {target:e}")]
    BracketFailure { target: f64 },
    #[error("precondition violated: {0}")]
    PreconditionViolated(String),
    #[error("insufficient data: need {needed}, got {got}")]
    InsufficientData { needed: usize, got: usize },
    #[error("variational inequality certification failed with {violations} violations")]
    CertificationFailed { violations: usize },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("malformed report: {0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
