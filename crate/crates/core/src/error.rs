use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("fields live on different grids")]
    GridMismatch,
    #[error("field has {got} values but the grid holds {expected}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("{what} did not converge after {iterations} iterations (residual {residual:e})")]
    NonConvergence {
        what: &'static str,
        iterations: usize,
        residual: f64,
    },
    #[error("profile collapsed to zero (norm {norm:e})")]
    CollapseToZero { norm: f64 },
    #[error("mass slope {slope:e} is not positive at mu = {mu}")]
    StabilityViolation { mu: f64, slope: f64 },
    #[error("hypothesis violated: {0}")]
    HypothesisViolation(String),
    #[error("phase-wrap guard tripped: dt * max V = {value} >= pi")]
    PhaseWrapGuard { value: f64 },
    #[error("mass {mass} outside the range [{low}, {high}] of the admissible interval")]
    MassOutOfRange { mass: f64, low: f64, high: f64 },
    #[error("frequency {mu} left the admissible interval [{low}, {high}]")]
    FrequencyOutOfRange { mu: f64, low: f64, high: f64 },
    #[error("field is outside the tube: {0}")]
    OutOfTube(String),
    #[error("newton iteration cap of {0} reached")]
    MaxIterations(usize),
    #[error("singular linear system (condition estimate {0:e})")]
    SingularSystem(f64),
    #[error("series has {0} samples, at least 5 are required")]
    SeriesTooShort(usize),
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Stable machine-readable tag used in failure reports.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidGrid(_) => "InvalidGrid",
            Error::GridMismatch => "GridMismatch",
            Error::LengthMismatch { .. } => "LengthMismatch",
            Error::NonFinite(_) => "NonFinite",
            Error::InvalidParameter(_) => "InvalidParameter",
            Error::NonConvergence { .. } => "NonConvergence",
            Error::CollapseToZero { .. } => "CollapseToZero",
            Error::StabilityViolation { .. } => "StabilityViolation",
            Error::HypothesisViolation(_) => "HypothesisViolation",
            Error::PhaseWrapGuard { .. } => "PhaseWrapGuard",
            Error::MassOutOfRange { .. } => "MassOutOfRange",
            Error::FrequencyOutOfRange { .. } => "FrequencyOutOfRange",
            Error::OutOfTube(_) => "OutOfTube",
            Error::MaxIterations(_) => "MaxIterations",
            Error::SingularSystem(_) => "SingularSystem",
            Error::SeriesTooShort(_) => "SeriesTooShort",
            Error::Config(_) => "Config",
            Error::Io(_) => "Io",
            Error::Csv(_) => "Csv",
            Error::Json(_) => "Json",
        }
    }
}
