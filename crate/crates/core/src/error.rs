use thiserror::Error;

/// Everything that can go wrong inside the planning engine.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("invalid probability {value} at index {index} (must be finite and in [0, 1])")]
    InvalidProbability { index: usize, value: f64 },

    #[error("invalid task set: {0}")]
    InvalidTaskSet(String),

    #[error("unknown task `{0}`")]
    UnknownTask(String),

    #[error("covariance is not symmetric positive definite: {0}")]
    NotPositiveDefinite(String),

    #[error("corrupt model: {0}")]
    CorruptModel(String),

    #[error("unsupported model schema version: expected {expected}, got {actual}")]
    SchemaVersion { expected: u32, actual: u32 },

    #[error("model has no classes with positive prior")]
    EmptyModel,

    #[error("no demonstrations")]
    NoDemonstrations,

    #[error("line {line}: {message}")]
    Dataset { line: usize, message: String },

    #[error("model `{model}` has no class for combination {combination}")]
    MissingCombination { model: String, combination: String },

    #[error("incompatible feature layouts between `{left}` (d={left_dim}) and `{right}` (d={right_dim}) and no alignment declared")]
    IncompatibleLayout {
        left: String,
        left_dim: usize,
        right: String,
        right_dim: usize,
    },

    #[error("task sets differ between `{left}` and `{right}`")]
    TaskSetMismatch { left: String, right: String },

    #[error("non-positive standard deviation {0}")]
    NonPositiveSigma(f64),

    #[error("arbitration weight must be strictly positive and finite, got {0}")]
    InvalidWeight(f64),

    #[error("infeasible bounds at feature {index}: lower {lower} > upper {upper}")]
    InfeasibleBounds { index: usize, lower: f64, upper: f64 },

    #[error("knitro mode needs a human model or explicit arbitration weights")]
    MissingWeights,

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("io error on {path}: {message}")]
    Io { path: String, message: String },

    #[error("json error: {0}")]
    Json(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    /// Short machine-readable kind, stable across releases.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::DimensionMismatch { .. } => "dimension_mismatch",
            Error::InvalidProbability { .. } => "invalid_probability",
            Error::InvalidTaskSet(_) => "invalid_task_set",
            Error::UnknownTask(_) => "unknown_task",
            Error::NotPositiveDefinite(_) => "not_positive_definite",
            Error::CorruptModel(_) => "corrupt_model",
            Error::SchemaVersion { .. } => "schema_version",
            Error::EmptyModel => "empty_model",
            Error::NoDemonstrations => "no_demonstrations",
            Error::Dataset { .. } => "dataset",
            Error::MissingCombination { .. } => "missing_combination",
            Error::IncompatibleLayout { .. } => "incompatible_layout",
            Error::TaskSetMismatch { .. } => "task_set_mismatch",
            Error::NonPositiveSigma(_) => "non_positive_sigma",
            Error::InvalidWeight(_) => "invalid_weight",
            Error::InfeasibleBounds { .. } => "infeasible_bounds",
            Error::MissingWeights => "missing_weights",
            Error::Config(_) => "config",
            Error::Io { .. } => "io",
            Error::Json(_) => "json",
        }
    }

    pub(crate) fn io(path: &std::path::Path, err: std::io::Error) -> Self {
        Error::Io {
            path: path.display().to_string(),
            message: err.to_string(),
        }
    }
}

impl From<serde_json::Error> for Error {
    fn from(err: serde_json::Error) -> Self {
        Error::Json(err.to_string())
    }
}
