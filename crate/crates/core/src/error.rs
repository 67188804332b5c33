use thiserror::Error;

/// Errors produced anywhere in the model-building and fitting pipeline.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum BhamError {
    #[error("variable `{variable}` has {found} distinct values but {required} are needed")]
    TooFewDistinctValues {
        variable: String,
        found: usize,
        required: usize,
    },

    #[error("variable `{variable}` has {found} observations but at least {required} are needed")]
    TooFewObservations {
        variable: String,
        found: usize,
        required: usize,
    },

    #[error("non-finite value in {0}")]
    NonFiniteInput(String),

    #[error("invalid smooth specification for `{variable}`: {reason}")]
    InvalidSmoothSpec { variable: String, reason: String },

    #[error("penalty matrix is not symmetric (max relative asymmetry {0:e})")]
    AsymmetricPenalty(f64),

    #[error("penalty eigenvalue {value:e} is negative beyond tolerance (max eigenvalue {max:e})")]
    NegativeEigenvalueBeyondTolerance { value: f64, max: f64 },

    #[error("row count mismatch: expected {expected}, found {found}")]
    RowCountMismatch { expected: usize, found: usize },

    #[error("model frame has no terms")]
    EmptyFrame,

    #[error("variable `{0}` is missing from the data")]
    MissingVariable(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid response: {0}")]
    InvalidResponse(String),

    #[error("invalid prior: {0}")]
    InvalidPrior(String),

    #[error("invalid settings: {0}")]
    InvalidSettings(String),

    #[error("linear system is singular beyond the ridge floor")]
    SingularSystem,

    #[error("cannot split {n} observations into {k} folds")]
    BadK { n: usize, k: usize },

    #[error("invalid tuning grid: {0}")]
    InvalidGrid(String),

    #[error("response has zero variance")]
    ZeroVariance,

    #[error("response contains a single class")]
    SingleClass,

    #[error("unsupported model file: {0}")]
    ModelFormat(String),
}

pub type Result<T> = std::result::Result<T, BhamError>;
