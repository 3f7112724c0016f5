#[derive(Debug, thiserror::Error, PartialEq)]
pub enum EvalError {
    #[error("gold has {gold} items but predictions have {pred}")]
    Length { gold: usize, pred: usize },
    #[error("item {index}: gold id `{gold}` does not match prediction id `{pred}`")]
    Misaligned { index: usize, gold: String, pred: String },
    #[error("label `{0}` is not in the declared label set")]
    UnknownLabel(String),
    #[error("option `{0}` is not one of A, B, C, D")]
    BadOption(String),
    #[error("duplicate task `{0}`")]
    DuplicateTask(String),
    #[error("item {0}: reference is empty")]
    EmptyReference(usize),
    #[error("query {index}: document `{doc}` ranked twice")]
    DuplicateRank { index: usize, doc: String },
    #[error("{0}")]
    Invalid(String),
}

pub type Result<T, E = EvalError> = std::result::Result<T, E>;

pub(crate) fn same_len(gold: usize, pred: usize) -> Result<()> {
    if gold == pred {
        Ok(())
    } else {
        Err(EvalError::Length { gold, pred })
    }
}
