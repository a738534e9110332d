use std::path::PathBuf;

use thiserror::Error;

use crate::case::CaseError;
use crate::dispatch::DispatchError;
use crate::harness::HarnessError;
use crate::scenario1::Scenario1Error;
use crate::scenario2::MfpiError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Top-level error; every variant names the module it came from.
#[derive(Debug, Error)]
pub enum Error {
    #[error("case_model: {0}")]
    Case(#[from] CaseError),
    #[error("dispatch: {0}")]
    Dispatch(#[from] DispatchError),
    #[error("scenario1: {0}")]
    Scenario1(#[from] Scenario1Error),
    #[error("scenario2: {0}")]
    Scenario2(#[from] MfpiError),
    #[error("harness: {0}")]
    Harness(#[from] HarnessError),
    #[error("i/o on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
