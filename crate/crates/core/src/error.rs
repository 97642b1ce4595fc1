use thiserror::Error;

/// Errors raised by the library. Terminations of a nest build (non-recurrence,
/// renormalizability, precision exhaustion) are recorded on the nest itself and
/// only surface here when an operation cannot proceed.
#[derive(Debug, Error)]
pub enum Error {
    #[error("parameter {0} is outside (3/2, 2]")]
    ParameterOutOfRange(String),
    #[error("cannot parse {0:?} as a decimal number")]
    Parse(String),
    #[error("precision must be at least 64 bits, got {0}")]
    InvalidPrecision(u32),
    #[error("interval endpoints are not ordered: {0}")]
    InvalidInterval(String),
    #[error("point {0} lies outside [-1, 1]")]
    Domain(String),
    #[error("derivative order {0} is not supported (0, 1 or 2)")]
    UnsupportedOrder(u8),
    #[error("value {0} is below the critical value and has no preimage")]
    NoPreimage(String),
    #[error("Schwarzian derivative is singular at the critical point")]
    SingularAtCritical,
    #[error("precision exhausted at {bits} bits")]
    PrecisionExhausted { bits: u32 },
    #[error("pullback escapes at step {step}: base point leaves the preimage")]
    PullbackEscapes { step: usize },
    #[error("boundary-grazing orbit: {0}")]
    Ambiguous(String),
    #[error("cap of {cap} iterates exceeded: {what}")]
    CapExceeded { cap: usize, what: String },
    #[error("central cascade at level {level} does not escape within {budget} iterates")]
    EscapeNotFound { level: usize, budget: usize },
    #[error("point is not in any landing interval")]
    NotInDomain,
    #[error("no fixed point of the central branch at level {level}")]
    NoFixedPoint { level: usize },
    #[error("level {0} is not available in this nest")]
    MissingLevel(usize),
    #[error("branch check failed: {0}")]
    BranchCheck(String),
    #[error("target not realized (deepest level matched: {deepest}): {reason}")]
    NotRealized { deepest: usize, reason: String },
    #[error("insufficient data: {got} points, at least {needed} needed")]
    InsufficientData { needed: usize, got: usize },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
