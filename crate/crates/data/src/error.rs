use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum DataError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{source_name} line {line}: {reason}")]
    Line { source_name: String, line: usize, reason: String },
    #[error("invalid config: {0}")]
    Config(String),
    #[error("corpus: {0}")]
    Corpus(String),
    #[error("review: {0}")]
    Review(String),
    #[error("invalid record: {0}")]
    Record(String),
}

pub type Result<T, E = DataError> = std::result::Result<T, E>;

pub(crate) fn io_err(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> DataError {
    let path = path.into();
    move |source| DataError::Io { path, source }
}
