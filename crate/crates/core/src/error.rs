use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("point is not on the boundary (signed distance {distance:e})")]
    NotOnBoundary { distance: f64 },

    #[error("characteristic integration failed: {0}")]
    IntegratorFailure(String),

    #[error("trajectory is grazing at the exit point (|n.v_b| = {0:e})")]
    GrazingDegenerate(f64),

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("profile does not live on the configured velocity lattice: expected {expected} values, got {got}")]
    LatticeMismatch { expected: usize, got: usize },

    #[error("Poisson solve did not converge (residual {0:e})")]
    SolverDivergence(f64),

    #[error("absolute distribution has a negative value {value:e} at index {index}")]
    NonPositiveInput { index: usize, value: f64 },

    #[error("weighted sup norm {norm:e} exceeded the smallness threshold {threshold:e} at t = {time}")]
    SmallnessViolated { time: f64, norm: f64, threshold: f64 },

    #[error("initial datum differs from boundary datum on the incoming set by {0:e}")]
    CompatibilityViolated(f64),

    #[error("series must be strictly positive with at least 5 points")]
    NonPositiveSeries,

    #[error("(p, beta) = ({p}, {beta}) violates (p-2)/p < beta < (2-w)/(3-w)")]
    InvalidPBeta { p: f64, beta: f64 },

    #[error("unsupported configuration: {0}")]
    Unsupported(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("admissibility violated: {0}")]
    Admissibility(String),

    #[error("malformed history: {0}")]
    MalformedHistory(String),

    #[error("invariant check failed: {0}")]
    InvariantFailure(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Parse(_) | Error::Admissibility(_) | Error::InvalidPBeta { .. } => 2,
            Error::InvariantFailure(_) => 3,
            _ => 4,
        }
    }
}
