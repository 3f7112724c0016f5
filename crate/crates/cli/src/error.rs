/// Failure classes, each with its own process exit status.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// The configuration is unreadable, invalid, or refers to missing inputs.
    #[error("config error: {0}")]
    Config(String),
    /// A stage failed while running.
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Runtime(_) => 3,
        }
    }

    pub(crate) fn in_stage(self, stage: &str) -> Self {
        match self {
            CliError::Runtime(m) => CliError::Runtime(format!("stage `{stage}` failed: {m}")),
            c => c,
        }
    }
}

pub type Result<T, E = CliError> = std::result::Result<T, E>;

impl From<clinlm_core::Error> for CliError {
    fn from(e: clinlm_core::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

impl From<clinlm_data::DataError> for CliError {
    fn from(e: clinlm_data::DataError) -> Self {
        match e {
            clinlm_data::DataError::Config(m) => CliError::Config(m),
            e => CliError::Runtime(e.to_string()),
        }
    }
}

impl From<clinlm_eval::EvalError> for CliError {
    fn from(e: clinlm_eval::EvalError) -> Self {
        CliError::Runtime(e.to_string())
    }
}

pub(crate) fn io(path: &std::path::Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |e| CliError::Runtime(format!("{}: {e}", path.display()))
}
