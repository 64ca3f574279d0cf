use thiserror::Error;

/// Errors raised by measure evaluation, flows, laws, simulation and oracles.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum CbiError {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("integral diverges: {0}")]
    DivergentIntegral(String),

    #[error("measure has zero mass on the requested set")]
    ZeroMass,

    #[error("marked set has infinite total Levy mass ({0})")]
    InfiniteTotalMass(String),

    #[error("first moment condition on the immigration measure is violated")]
    MomentConditionViolated,

    #[error("parameters are not admissible: {0}")]
    NotAdmissible(String),

    #[error("too many marked sets: {got} exceeds the limit of {limit}")]
    TooManySets { got: usize, limit: usize },

    #[error("adaptive step size underflow at t = {t}")]
    StepSizeUnderflow { t: f64 },

    #[error("step budget exhausted at t = {t}")]
    StepBudgetExhausted { t: f64 },

    #[error("times must be nonnegative and nondecreasing")]
    UnsortedTimes,

    #[error("precondition violated: {0}")]
    PreconditionViolated(String),

    #[error("lattice truncation too small: bound {bound:e} exceeds tolerance {tolerance:e} at N = {levels}")]
    TruncationTooSmall {
        bound: f64,
        tolerance: f64,
        levels: usize,
    },

    #[error("closed-form catalog case does not match the inputs: {0}")]
    CaseMismatch(String),
}

pub type Result<T> = std::result::Result<T, CbiError>;
