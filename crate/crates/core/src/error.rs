use thiserror::Error;

/// Errors raised by the numerical routines and the experiment runner.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("non-finite value at position {0}")]
    NonFinite(usize),
    #[error("negative eigenvalue {value} at position {index} (tolerance {tol})")]
    NegativeEigenvalue { index: usize, value: f64, tol: f64 },
    #[error("index {index} out of range 1..={len}")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("spectral gap needs at least two eigenvalues")]
    SingletonSpectrum,
    #[error("empty spectrum")]
    EmptySpectrum,
    #[error("pole hit: evaluation point {z} coincides with eigenvalue {value} (index {index})")]
    PoleHit { index: usize, value: f64, z: f64 },
    #[error("size mismatch: expected {expected}, got {got}")]
    SizeMismatch { expected: usize, got: usize },
    #[error("interlacing violated at index {0}")]
    InterlacingViolation(usize),
    #[error("zero gap at index {0}")]
    ZeroGap(usize),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("matrix is not symmetric (max asymmetry {0:e})")]
    NotSymmetric(f64),
    #[error("no convergence: {0}")]
    NoConvergence(String),
    #[error("unknown statistic `{0}`")]
    UnknownStatistic(String),
    #[error("no sign change in bracket [{lo}, {hi}] for root {index}")]
    BracketFailure { index: usize, lo: f64, hi: f64 },
    #[error("exclusion window half-width {k} too wide for p = {p}")]
    WindowTooWide { k: usize, p: usize },
    #[error("quadrature failed to reach tolerance on [{lo}, {hi}]")]
    QuadratureFailure { lo: f64, hi: f64 },
    #[error("negative density {0:e}: fixed point landed on the wrong branch")]
    NegativeDensity(f64),
    #[error("config error: {0}")]
    ConfigParse(String),
    #[error("I/O error: {0}")]
    Io(String),
    #[error("empty series `{0}`")]
    EmptySeries(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl Error {
    /// Process exit code used by the CLI: 2 config, 3 numeric, 4 I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::ConfigParse(_) => 2,
            Error::Io(_) => 4,
            _ => 3,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
