use thiserror::Error;

/// Errors raised by the simulation and analysis toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("basis mismatch: {left} vs {right}")]
    BasisMismatch { left: String, right: String },

    #[error("coefficient array has length {found}, basis {basis} expects {expected}")]
    CoefficientLength {
        basis: String,
        expected: usize,
        found: usize,
    },

    #[error("empty point set")]
    EmptySet,

    #[error("time grids do not match: {0}")]
    GridMismatch(String),

    #[error("time interval [{a}, {b}] is not covered by the trajectory (domain [{start}, {end}])")]
    OutOfDomain { a: f64, b: f64, start: f64, end: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("solver diverged at t = {time}: |u| = {norm:.3e} exceeds guard {guard:.3e} (initial point #{point})")]
    Diverged {
        time: f64,
        norm: f64,
        guard: f64,
        point: usize,
    },

    #[error("nonlinearity evaluation produced a non-finite value at v = {v}, t = {t}")]
    NonlinearityEval { v: f64, t: f64 },

    #[error("unknown builtin `{0}`")]
    UnknownBuiltin(String),

    #[error("expression error at offset {offset}: {message}")]
    Expression { offset: usize, message: String },

    #[error("decode error: {0}")]
    Decode(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }
}
