use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("domain error in {op}: {msg}")]
    Domain { op: &'static str, msg: String },

    #[error("size error: {0}")]
    Size(String),

    #[error("observation at row {row}, column {col} is zero; the log-derivative term needs a strictly positive value")]
    ZeroObservation { row: usize, col: usize },

    #[error("point outside the interior region: {0}")]
    OutOfValidity(String),

    #[error("integral `{integral}` diverges near {face}")]
    Divergent { integral: String, face: String },

    #[error("degenerate data: {0}")]
    Degenerate(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("negative value at row {row}, column {col}: {value}")]
    Negative { row: usize, col: usize, value: f64 },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain(op: &'static str, msg: impl Into<String>) -> Error {
    Error::Domain {
        op,
        msg: msg.into(),
    }
}
