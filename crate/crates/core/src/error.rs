use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("malformed parameters: {0}")]
    MalformedParameters(String),
    #[error("divergent weight: b = {b} is not below the dimension {dim}")]
    DivergentWeight { b: f64, dim: u32 },
    #[error("not applicable: {0}")]
    NotApplicable(String),
    #[error("quotient undefined for the zero field")]
    UndefinedQuotient,
    #[error("step size underflow at r = {r} (u = {u}, u_r = {u_r})")]
    StiffFailure { r: f64, u: f64, u_r: f64 },
    #[error("bracket does not straddle: a_lo = {a_lo} gives {lo}, a_hi = {a_hi} gives {hi}")]
    BadBracket {
        a_lo: f64,
        a_hi: f64,
        lo: String,
        hi: String,
    },
    #[error("no bracket found: {0}")]
    NoBracket(String),
    #[error("did not converge: {0}")]
    NonConvergence(String),
    #[error("no projection: the focusing integral vanishes")]
    NoProjection,
    #[error("fit window error: {0}")]
    WindowError(String),
    #[error("weight scale R = {radius} exceeds half the domain r_max = {r_max}")]
    WeightExceedsDomain { radius: f64, r_max: f64 },
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("grid mismatch between fields")]
    GridMismatch,
}
