use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("invalid spec: {0}")]
    Spec(String),
    #[error("invalid argument: {0}")]
    Argument(String),
    #[error("unsupported method: {0}")]
    UnsupportedMethod(String),
    #[error("model error: {0}")]
    Model(String),
    #[error("training failed: {0}")]
    Training(String),
    #[error("singular design matrix: {0}")]
    SingularDesign(String),
    #[error("undefined metric: {0}")]
    UndefinedMetric(String),
    #[error("aggregation error: {0}")]
    Aggregation(String),
    #[error("ingestion error: {0}")]
    Ingestion(String),
    #[error("parse error at {path}:{line}: {msg}")]
    Parse {
        path: String,
        line: usize,
        msg: String,
    },
    #[error("{path}: {source}")]
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
