use thiserror::Error;

/// Errors raised by the numerical routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("constant term must be positive for the log route")]
    ZeroConstantTerm,
    #[error("function is not normalized: value at 0 is {value}")]
    NotNormalized { value: f64 },
    #[error("degenerate input: {0}")]
    DegenerateInput(String),
    #[error("coefficient sum diverges at degree {degree}")]
    DivergentSum { degree: usize },
    #[error("quadrature did not converge: last change {change:e} with {nodes} nodes")]
    QuadratureNonconvergent { change: f64, nodes: usize },
    #[error("singular time: u*v = {uv} is not below 1")]
    SingularTime { uv: f64 },
    #[error("truncation failure at step {step}: relative tail {tail:e}")]
    TruncationFailure { step: usize, tail: f64 },
    #[error("exponential orbit is singular at step {step}")]
    SingularOrbit { step: usize },
    #[error("bracket endpoints classify identically ({verdict})")]
    NoBracket { verdict: String },
    #[error("undecided classification at beta = {beta} with bracket width {width:e}")]
    Undecided { beta: f64, width: f64 },
    #[error("normalization constant leaves the corridor at step {step}")]
    CorridorViolation { step: usize },
    #[error("grid density leaks mass {mass:e} into the boundary")]
    MassLeak { mass: f64 },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}
