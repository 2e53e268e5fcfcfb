use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },

    #[error("row {row}, column {col}: cannot parse field {field:?} as a number")]
    Parse {
        row: usize,
        col: usize,
        field: String,
    },

    #[error("row {row}: expected {expected} fields, found {found}")]
    RaggedRow {
        row: usize,
        expected: usize,
        found: usize,
    },

    #[error("column {0:?} is entirely missing")]
    FullyMissingColumn(String),

    #[error("column {name:?} keeps only {observed} observed entries, need at least {required}")]
    TooFewObserved {
        name: String,
        observed: usize,
        required: usize,
    },

    #[error("duplicate column name {0:?}")]
    DuplicateColumn(String),

    #[error("empty column name at position {0}")]
    EmptyColumnName(usize),

    #[error("invalid shape: {0}")]
    Shape(String),

    #[error("shape mismatch: {left_rows}x{left_cols} vs {right_rows}x{right_cols}")]
    ShapeMismatch {
        left_rows: usize,
        left_cols: usize,
        right_rows: usize,
        right_cols: usize,
    },

    #[error("entry ({row}, {col}) is missing")]
    MissingEntry { row: usize, col: usize },

    #[error("position ({row}, {col}) is outside a {n_rows}x{n_cols} matrix")]
    OutOfBounds {
        row: usize,
        col: usize,
        n_rows: usize,
        n_cols: usize,
    },

    #[error("non-finite value at ({row}, {col})")]
    NonFinite { row: usize, col: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("missingness injection failed: {0}")]
    Injection(String),

    #[error("no positions to evaluate")]
    EmptyPositions,

    #[error("true values at the evaluated positions have zero variance")]
    ZeroVariance,

    #[error("true column {0:?} has zero range")]
    ZeroRange(String),

    #[error("imputed matrix has zero sum of squares")]
    ZeroDenominator,

    #[error("matrix is expected to be complete but has {0} missing entries")]
    NotComplete(usize),

    #[error("column {column:?}: {source}")]
    Column {
        column: String,
        #[source]
        source: Box<Error>,
    },

    #[error("singular value thresholding diverged (residual {residual:.3e}); try a smaller step")]
    Diverged { residual: f64 },
}
