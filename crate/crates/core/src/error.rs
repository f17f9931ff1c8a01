use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Coarse classification used by the command-line front end to pick an exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    /// Malformed configuration or arguments.
    Usage,
    /// Input data violates a contract.
    Data,
    /// A statistic is undefined on the given data.
    Degenerate,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("missing column `{0}`")]
    MissingColumn(String),

    #[error("row {row}, column `{column}`: {reason}")]
    Parse {
        row: usize,
        column: String,
        reason: String,
    },

    #[error("row {row}: exposure is zero")]
    ZeroExposure { row: usize },

    #[error("row {row}, column `{column}`: invalid value ({reason})")]
    InvalidValue {
        row: usize,
        column: String,
        reason: String,
    },

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("invalid aggregation key: {0}")]
    InvalidKey(String),

    #[error("some records carry predictions and others do not")]
    MixedPredictionPresence,

    #[error("row {row}: exposure smaller than claim count times day fraction")]
    InsufficientExposure { row: usize },

    #[error("row {row}: no prediction")]
    MissingPrediction { row: usize },

    #[error("observation list is empty")]
    EmptyInput,

    #[error("total response is zero")]
    ZeroTotalResponse,

    #[error("all responses are equal; Gini denominator is zero")]
    DegenerateDenominator,

    #[error("row {row}: predicted count must be positive")]
    NonpositivePrediction { row: usize },

    #[error("replicate {replicate}: {attempts} resamples in a row had all-equal responses")]
    DegenerateResamples { replicate: usize, attempts: usize },

    #[error("null distribution has zero standard deviation")]
    ZeroSd,

    #[error("new data has {n_new} observations, fewer than the {n_old} of the holdout")]
    NewDataTooSmall { n_old: usize, n_new: usize },

    #[error("source group has {available} records with claims, {requested} needed")]
    InsufficientClaimsInSource { available: usize, requested: usize },

    #[error("target group has {available} records, {requested} needed")]
    InsufficientTargetRecords { available: usize, requested: usize },

    #[error("source and target groups share {0} records")]
    DisjointnessViolation(usize),

    #[error("group predicate on `{0}` selects no records")]
    EmptyGroup(String),

    #[error("design matrix is rank deficient; dependent columns: {0:?}")]
    RankDeficientDesign(Vec<String>),

    #[error("no convergence after {iterations} iterations (gradient norm {gradient_norm:e})")]
    NonConvergence {
        iterations: usize,
        gradient_norm: f64,
    },

    #[error("covariate `{covariate}`: level `{value}` not in design")]
    UnseenLevel { covariate: String, value: String },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    /// Wraps the error with the name of the pipeline stage that produced it.
    pub fn at(self, stage: &'static str) -> Self {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }

    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Stage { source, .. } => source.class(),
            Error::Config(_) | Error::InvalidKey(_) => ErrorClass::Usage,
            Error::ZeroTotalResponse
            | Error::DegenerateDenominator
            | Error::DegenerateResamples { .. }
            | Error::ZeroSd
            | Error::RankDeficientDesign(_)
            | Error::NonConvergence { .. } => ErrorClass::Degenerate,
            _ => ErrorClass::Data,
        }
    }
}
