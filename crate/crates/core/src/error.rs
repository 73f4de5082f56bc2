use thiserror::Error;

/// Errors produced anywhere in the diagnosis pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("unknown column {name:?}; available headers: {available:?}")]
    UnknownColumn { name: String, available: Vec<String> },

    #[error("non-numeric value {value:?} at row {row}, column {column}")]
    NonNumeric {
        row: usize,
        column: String,
        value: String,
    },

    #[error("non-finite value at row {row}, column {column}")]
    NonFinite { row: usize, column: String },

    #[error("invalid dataset: {0}")]
    InvalidDataset(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("channel {channel:?} has zero variance")]
    ConstantChannel { channel: String },

    #[error("rank-deficient regressors for sensor row {row} ({channel})")]
    RankDeficient { row: usize, channel: String },

    #[error("singular value decomposition failed: {0}")]
    Svd(String),

    #[error("empty series")]
    EmptySeries,

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid fault: {0}")]
    InvalidFault(String),

    #[error("fault-direction solver failed: {0}")]
    Solver(String),

    #[error("vacuous combination, H = 0")]
    TotalConflict,

    #[error("no faulty samples in the evaluation window")]
    NoFaultySamples,

    #[error("unknown series id {0:?}")]
    UnknownSeries(String),

    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Attach a pipeline stage label to an error.
pub(crate) trait StageExt<T> {
    fn stage(self, stage: &'static str) -> Result<T>;
}

impl<T> StageExt<T> for Result<T> {
    fn stage(self, stage: &'static str) -> Result<T> {
        self.map_err(|e| Error::Stage {
            stage,
            source: Box::new(e),
        })
    }
}
