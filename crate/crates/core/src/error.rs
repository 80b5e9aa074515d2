use std::path::PathBuf;

use crate::data::DefectClass;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("shape error in {op}: {detail}")]
    Shape { op: &'static str, detail: String },

    #[error("numeric failure in {op}: {detail}")]
    Numeric { op: String, detail: String },

    #[error("cannot split: class {class} has {count} item(s), need at least 2")]
    Split { class: DefectClass, count: usize },

    #[error("augmentation error: {0}")]
    Augment(String),

    #[error("undefined metric: {0}")]
    UndefinedMetric(String),

    #[error("line {line}: parse error: {detail}")]
    Parse { line: usize, detail: String },

    #[error("line {line}: invalid field `{field}`: {detail}")]
    Validation {
        line: usize,
        field: &'static str,
        detail: String,
    },

    #[error("config error: {0}")]
    Config(String),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn shape(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Shape {
            op,
            detail: detail.into(),
        }
    }

    pub(crate) fn numeric(op: impl Into<String>, detail: impl Into<String>) -> Self {
        Error::Numeric {
            op: op.into(),
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
