use thiserror::Error;

use crate::pgm::PgmError;

/// Exit status 1 for [`CliError::User`], 2 for [`CliError::Internal`].
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    User(String),
    #[error("{0}")]
    Internal(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            Self::User(_) => 1,
            Self::Internal(_) => 2,
        }
    }
}

impl From<normeq::Error> for CliError {
    fn from(e: normeq::Error) -> Self {
        use normeq::Error as E;
        match e {
            E::Divergence { .. } | E::NotShapePreserving(_) | E::KernelNotAffine(_) => Self::Internal(e.to_string()),
            _ => Self::User(e.to_string()),
        }
    }
}

impl From<PgmError> for CliError {
    fn from(e: PgmError) -> Self {
        Self::User(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Self::User(e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        Self::User(e.to_string())
    }
}
