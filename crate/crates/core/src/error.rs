//! Crate-wide error type.
//!
//! Every fallible operation in the library reports one of these variants;
//! the CLI maps them onto its stable exit codes.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("zero vector: norm {norm} below {min}")]
    ZeroVector { norm: f64, min: f64 },

    #[error("bad curvature {value}: {reason}")]
    BadCurvature { value: f64, reason: &'static str },

    #[error("curvature mismatch: {left} vs {right}")]
    CurvatureMismatch { left: f64, right: f64 },

    #[error("dimension mismatch: {left} vs {right}")]
    DimMismatch { left: usize, right: usize },

    #[error("singular denominator {value}")]
    Singularity { value: f64 },

    #[error("label {label} out of range for {classes} classes")]
    BadLabel { label: usize, classes: usize },

    #[error("non-finite gradient in tensor `{tensor}`")]
    NonFiniteGradient { tensor: String },

    #[error("non-finite loss at epoch {epoch}, batch {batch}: {value}")]
    NonFiniteLoss {
        epoch: usize,
        batch: usize,
        value: f64,
    },

    #[error("empty dataset: {context}")]
    EmptyDataset { context: &'static str },

    #[error("empty component list")]
    EmptyComponents,

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("score set contains only one class ({0} entries)")]
    OneClassOnly(usize),

    #[error("non-finite score for sample `{id}`")]
    NonFiniteScore { id: String },

    #[error("bad spec: {0}")]
    BadSpec(String),

    #[error("{path}:{line}: parse error: {message}")]
    ParseError {
        path: String,
        line: usize,
        message: String,
    },

    #[error("{path}:{line}: row has {found} features, file dimension is {expected}")]
    DimInconsistent {
        path: String,
        line: usize,
        expected: usize,
        found: usize,
    },

    #[error("{path}:{line}: unknown split tag `{tag}`")]
    UnknownSplitTag {
        path: String,
        line: usize,
        tag: String,
    },

    #[error("class {class} has {count} samples, need at least 2 to split")]
    ClassTooSmall { class: usize, count: usize },

    #[error("config error: {0}")]
    Config(String),

    #[error("model/data dimension mismatch: model expects {model}, data has {data}")]
    ModelDataDimMismatch { model: usize, data: usize },

    #[error("gradient check failed: max relative error {max_err} > {threshold}")]
    GradCheckFailed { max_err: f64, threshold: f64 },

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
