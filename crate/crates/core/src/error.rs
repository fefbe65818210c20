use thiserror::Error;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("{0}")]
    Io(String),
    #[error("entity {0} is already registered")]
    DuplicateEntity(String),
    #[error("entity {0} is not registered")]
    UnknownEntity(String),
    #[error("unknown protocol stack `{0}`")]
    UnknownStack(String),
    #[error("invalid scenario: {0}")]
    Config(String),
    #[error("parameter gate rejected configuration: {0}")]
    Gate(String),
    #[error("malformed JSON at line {line}, column {col}: {msg}")]
    Parse { line: usize, col: usize, msg: String },
    #[error("malformed trace line {line}: {msg}")]
    Trace { line: usize, msg: String },
}

impl SimError {
    /// True for errors caused by the caller's input rather than a run.
    pub fn is_config(&self) -> bool {
        !matches!(self, SimError::DuplicateEntity(_) | SimError::UnknownEntity(_))
    }
}
