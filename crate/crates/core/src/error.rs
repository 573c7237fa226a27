use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape error in {op}: {detail}")]
    Shape { op: &'static str, detail: String },

    #[error("non-finite value produced by {0}")]
    NonFinite(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("image {width}x{height} is too small for {levels} pyramid levels")]
    ImageTooSmall { width: usize, height: usize, levels: usize },

    #[error("degenerate landmarks: {0}")]
    DegenerateLandmarks(String),

    #[error("invalid manifest {path}: {detail}")]
    Manifest { path: PathBuf, detail: String },

    #[error("sample {sample_id}: {detail}")]
    Sample { sample_id: String, detail: String },

    #[error("unknown label {label:?} for dataset {dataset}")]
    UnknownLabel { dataset: String, label: String },

    #[error("fold for subject {subject:?} is untrainable: {detail}")]
    UntrainableFold { subject: String, detail: String },

    #[error("invalid weight file: {0}")]
    WeightFormat(String),

    #[error("invalid flow file: {0}")]
    FlowFormat(String),

    #[error("config: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Image {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn shape(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Shape {
            op,
            detail: detail.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
