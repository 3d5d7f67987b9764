use std::path::PathBuf;

/// Errors produced by the reduction pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("saturation {0} outside [0, 1]")]
    SaturationDomain(f64),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("singular pressure system: {0}")]
    SingularSystem(String),

    #[error("all face fluxes are zero, no finite CFL time step")]
    ZeroVelocity,

    #[error("CFL violation: saturation {value} in cell {cell}")]
    CflViolation { cell: usize, value: f64 },

    #[error("simulation failed at t = {time_s} s (step {step}): {source}")]
    Simulation {
        time_s: f64,
        step: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("density has zero total mass")]
    ZeroMass,

    #[error("need at least {needed} snapshots, got {got}")]
    TooFewSnapshots { needed: usize, got: usize },

    #[error("parameter coordinate {axis} = {value} outside training range [{lo}, {hi}]")]
    OutOfRange { axis: usize, value: f64, lo: f64, hi: f64 },

    #[error("training parameters do not form a full tensor grid; missing nodes: {0:?}")]
    NotTensorGrid(Vec<Vec<f64>>),

    #[error("point ({0}, {1}) lies outside the polygon")]
    OutsidePolygon(f64, f64),

    #[error("requested {requested} modes but only {available} are available")]
    ModeOutOfRange { requested: usize, available: usize },

    #[error("config error: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: malformed data: {msg}")]
    Format { path: PathBuf, msg: String },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, msg: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            msg: msg.into(),
        }
    }

    /// Coarse category used for CLI exit codes.
    pub fn category(&self) -> ErrorCategory {
        match self {
            Error::Config(_) | Error::InvalidInput(_) | Error::OutOfRange { .. } => ErrorCategory::Input,
            Error::Io { .. } | Error::Format { .. } | Error::Csv(_) | Error::Json(_) => ErrorCategory::Io,
            _ => ErrorCategory::Numerical,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorCategory {
    Input,
    Io,
    Numerical,
}

impl ErrorCategory {
    pub fn exit_code(self) -> i32 {
        match self {
            ErrorCategory::Input => 2,
            ErrorCategory::Io => 3,
            ErrorCategory::Numerical => 4,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
