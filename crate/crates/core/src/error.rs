use thiserror::Error;

use crate::neural::Generator;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("feature `{0}` has zero variance")]
    ConstantFeature(String),

    #[error("non-finite value at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },

    #[error("invalid feature names: {0}")]
    BadFeatureNames(String),

    #[error("schema mismatch: {0}")]
    SchemaMismatch(String),

    #[error("groups have unequal sizes ({0} vs {1}); subsample the larger group first")]
    UnequalSizes(usize, usize),

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("brute-force oracle limited to n <= 9, got n = {0}")]
    TooLarge(usize),

    #[error("cannot draw {k} rows from {n}")]
    KTooLarge { k: usize, n: usize },

    #[error("loss became non-finite at step {step}")]
    NonFiniteLoss {
        step: usize,
        snapshot: Box<Generator>,
    },

    #[error("flipset side is empty; transparency report is undefined")]
    EmptyFlipset,

    #[error("true labels are required for this audit")]
    MissingLabels,

    #[error("label stratum {label} is empty in group {group}")]
    EmptyStratum { label: u8, group: char },

    #[error("sample is empty")]
    EmptySample,

    #[error("singular design predicting `{target}` from {predictors:?}")]
    SingularDesign {
        target: String,
        predictors: Vec<String>,
    },

    #[error("bad parameters: {0}")]
    BadParams(String),

    #[error("training diverged: {0}")]
    Diverged(String),

    #[error("no prediction available for {0}")]
    MissingPrediction(String),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for failures caused by the numbers themselves rather than by
    /// malformed input.
    pub fn is_numeric(&self) -> bool {
        matches!(
            self,
            Error::NonFiniteLoss { .. } | Error::Diverged(_) | Error::SingularDesign { .. }
        )
    }
}
