use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter `{name}` = {value}: {reason}")]
    InvalidParameter {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },

    #[error("length mismatch: {what} has {got} entries, expected {expected}")]
    LengthMismatch {
        what: &'static str,
        got: usize,
        expected: usize,
    },

    #[error("sensor has zero observation or channel SNR and can never be active")]
    DegenerateSensor,

    #[error("no sensor contributes to the estimate (normalizing sum is zero)")]
    AllChannelsSilent,

    #[error(
        "target variance {d0} is not achievable: minimum achievable variance is \
         sigma_theta2 / sum(beta) = {min_variance}"
    )]
    InfeasibleTarget { d0: f64, min_variance: f64 },

    #[error("required sum(b) = {target_sum_b} is not below the active sum(beta) = {max_sum_b}")]
    Infeasible { target_sum_b: f64, max_sum_b: f64 },

    #[error("closed-form root failed validation: relative stationarity residual {residual:e}")]
    ClosedFormMismatch { residual: f64 },

    #[error("could not bracket lambda0 within {doublings} doublings")]
    BracketFailure { doublings: u32 },

    #[error("coupling equation is not monotone in lambda0 near {lambda0:e}")]
    NonMonotone { lambda0: f64 },

    #[error("no active set produced strictly positive b values")]
    NoActiveSet,

    #[error("b[{index}] = {b} is outside [0, beta = {beta})")]
    BOutOfRange { index: usize, b: f64, beta: f64 },

    #[error("codebook cell is empty")]
    EmptyCell,

    #[error("training set has {m} vectors, need at least {needed} for a {bits}-bit codebook")]
    TooFewTrainingVectors { m: usize, needed: usize, bits: u32 },

    #[error("dimension mismatch: {what} (got {got}, expected {expected})")]
    DimensionMismatch {
        what: &'static str,
        got: usize,
        expected: usize,
    },

    #[error("codebook was trained for a different sensor layout")]
    LayoutMismatch,

    #[error("malformed codebook file: {0}")]
    Format(String),
}
