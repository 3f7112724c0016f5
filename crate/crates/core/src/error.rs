use crate::tensor::TensorError;
use crate::tokenizer::TokenizerError;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Tokenizer(#[from] TokenizerError),
    #[error("invalid model config: {0}")]
    Config(String),
    #[error("sequence of {len} tokens exceeds max_seq_len {max}")]
    SequenceTooLong { len: usize, max: usize },
    #[error("sequence needs at least {min} tokens, got {len}")]
    SequenceTooShort { len: usize, min: usize },
    #[error("token id {id} out of range for vocab of {vocab}")]
    TokenOutOfRange { id: usize, vocab: usize },
    #[error("masked batch selects no positions")]
    EmptyMask,
    #[error("{0} must not be empty")]
    Empty(&'static str),
    #[error("unknown parameter `{0}`")]
    UnknownParam(String),
    #[error("parameter `{path}`: {reason}")]
    BadTarget { path: String, reason: String },
    #[error("no gradient for trainable parameter `{0}`")]
    MissingGrad(String),
    #[error("invalid hyperparameter: {0}")]
    Hyper(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
