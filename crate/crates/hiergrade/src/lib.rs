//! File formats, a thread-pool executor and experiment drivers on top of
//! `hiergrade-core`.

pub mod checkpoint;
pub mod config;
pub mod dataset;
pub mod exec;
pub mod formats;
pub mod report;

use std::path::PathBuf;

pub use hiergrade_core as core;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{source_name}:{line}: {reason}")]
    Parse { source_name: String, line: usize, reason: String },
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] hiergrade_core::Error),
    #[error(transparent)]
    Tensor(#[from] hiergrade_core::TensorError),
    #[error(transparent)]
    Corpus(#[from] hiergrade_core::corpus::CorpusError),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn io_err(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> Error {
    let path = path.into();
    move |source| Error::Io { path, source }
}
