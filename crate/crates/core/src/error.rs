use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },

    #[error("invalid sample: {0}")]
    InvalidSample(String),

    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("need at least {needed} observations, got {got}")]
    TooFewObservations { needed: usize, got: usize },

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("statistic `{statistic}` cannot be paired with threshold policy `{policy}`: {reason}")]
    IncompatiblePolicy {
        statistic: String,
        policy: String,
        reason: String,
    },

    #[error("kernel family is empty")]
    EmptyKernelFamily,

    #[error("window [{a}, {b}] invalid for n = {n}; need 1 < a <= b < n")]
    WindowOutOfRange { n: usize, a: usize, b: usize },

    #[error("enumeration of {count} items exceeds cap {cap}")]
    EnumerationCap { count: u128, cap: u128 },

    #[error("oracle could not certify minimum: gap {gap:.3e} > tolerance {tolerance:.3e} after {iterations} iterations")]
    NotCertified {
        gap: f64,
        tolerance: f64,
        iterations: usize,
    },

    #[error("need at least 3 usable rows for an exponent fit, got {usable}")]
    InsufficientRows { usable: usize },

    #[error("invalid config: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;
