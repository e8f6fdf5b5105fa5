use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, FarmError>;

#[derive(Debug, Error)]
pub enum FarmError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed CSV: {0}")]
    Csv(String),

    #[error("row {row} has {found} fields, expected {expected}")]
    RaggedRow { row: usize, found: usize, expected: usize },

    #[error("invalid cell at row {row}, column {col}: {value:?}")]
    BadCell { row: usize, col: usize, value: String },

    #[error("duplicate label {0:?}")]
    DuplicateLabel(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("design is rank deficient at column {column}")]
    RankDeficient { column: String },

    #[error("insufficient observations: need more than {needed}, got {got}")]
    InsufficientData { needed: usize, got: usize },

    #[error("eigen-decomposition failed: {0}")]
    Eigen(String),

    #[error("degenerate test: the long-run covariance has an all-zero diagonal")]
    DegenerateTest,

    #[error("series {series}: {source}")]
    Series {
        series: String,
        #[source]
        source: Box<FarmError>,
    },

    #[error("stage {stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<FarmError>,
    },

    #[error("backtest origin {origin}, series {series}: {source}")]
    Origin {
        origin: usize,
        series: String,
        #[source]
        source: Box<FarmError>,
    },

    #[error("forecast leak detected at origin {0}")]
    Leakage(usize),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl FarmError {
    pub(crate) fn in_series(self, series: impl Into<String>) -> Self {
        FarmError::Series {
            series: series.into(),
            source: Box::new(self),
        }
    }

    pub(crate) fn in_stage(self, stage: &'static str) -> Self {
        FarmError::Stage {
            stage,
            source: Box::new(self),
        }
    }
}
