use thiserror::Error;

use crate::engine::TrajectoryRecord;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Invalid parameters, mismatched dimensions or an inconsistent run setup.
    #[error("configuration error: {0}")]
    Config(String),

    /// The iterate left the finite range. `last` is the last record that was finite.
    #[error("run diverged at iteration {iteration}")]
    Diverged {
        iteration: usize,
        last: Box<TrajectoryRecord>,
    },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
}

pub(crate) fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(Error::Config(msg()))
    }
}
