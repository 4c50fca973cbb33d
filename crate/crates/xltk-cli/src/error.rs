//! One error type for the whole binary, mapped onto the three exit codes:
//! 0 success, 1 failed check, 2 usage or I/O trouble.

use thiserror::Error;
use xltk_core::data::DataError;
use xltk_core::embed::EmbedError;
use xltk_core::model::ModelError;
use xltk_core::train::TrainError;

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad flags, bad config keys, bad values — the caller's fault.
    #[error("{0}")]
    Usage(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    /// A verification the command exists to perform came out negative.
    #[error("{0}")]
    Check(String),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Embed(#[from] EmbedError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Train(#[from] TrainError),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Check(_) => 1,
            // A diverged run is a failed numeric check, not a usage problem.
            CliError::Train(TrainError::Diverged { .. }) => 1,
            _ => 2,
        }
    }

    /// Wrap an I/O result so the message names the file involved.
    pub fn io_at<T>(path: &std::path::Path, r: std::io::Result<T>) -> Result<T, CliError> {
        r.map_err(|source| CliError::Io {
            path: path.display().to_string(),
            source,
        })
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Data(DataError::Csv(e))
    }
}
