use alloc::string::String;

/// Errors raised by the numerical routines.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid measure: {0}")]
    InvalidMeasure(String),
    #[error("invalid covariance function: {0}")]
    InvalidCovariance(String),
    #[error("position {0} outside [0, 1]")]
    PositionOutOfRange(f64),
    #[error("measure is not in M_a^{{<1}} (needs an atom at q = 1 carrying the last mass)")]
    NotInMaLt1,
    #[error("measure is in M_a^{{<1}}; the singular evaluator needs x(q_k) = 1 with q_k < 1")]
    NotSingular,
    #[error("mass transport: {0}")]
    Transport(String),
    #[error("boundary function not supported here: {0}")]
    UnsupportedBoundary(&'static str),
    #[error("covariance function not supported here: {0}")]
    UnsupportedCovariance(&'static str),
    #[error("non-finite value during quadrature (grid misconfigured?) at level {level}")]
    QuadratureOverflow { level: usize },
    #[error("index {index} out of range (allowed {lo}..={hi})")]
    IndexOutOfRange { index: usize, lo: usize, hi: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("partition {0}")]
    Partition(String),
    #[error("tree of {leaves} leaves exceeds the configured cap {cap}")]
    TooManyLeaves { leaves: usize, cap: usize },
    #[error("covariance matrix is not positive semi-definite")]
    NotPositiveSemiDefinite,
    #[error("root bracket failure: {0}")]
    Bracket(String),
    #[error("{0} too large for exact enumeration (max {1})")]
    TooLarge(&'static str, usize),
}

pub type Result<T> = core::result::Result<T, Error>;
