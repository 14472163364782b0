use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error: {0}")]
    Parse(String),
    #[error("capacity exceeded: {0}")]
    Capacity(String),
    #[error("invalid algebra: {0}")]
    InvalidAlgebra(String),
    #[error("algebra mismatch: {0}")]
    AlgebraMismatch(String),
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("classification inconsistency: {0}")]
    Classification(String),
    #[error("concatenation error: {0}")]
    Concatenation(String),
    #[error("fixture mismatch: {0}")]
    FixtureMismatch(String),
    #[error("numeric blow-up: {0}")]
    BlowUp(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Process exit code for the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::FixtureMismatch(_) => 3,
            Error::BlowUp(_) => 4,
            _ => 2,
        }
    }
}
