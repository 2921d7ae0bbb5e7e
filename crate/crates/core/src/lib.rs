//! Hierarchical graph grading for conversation tests.
//!
//! The crate is `no_std` + `alloc`. It carries everything that is pure
//! computation: transcript types and tokenization, the synthetic corpus
//! generator, a reverse-mode autodiff tape, the sequence encoder, the three
//! conversation graphs and their attention encoders, the pairwise regressor,
//! the training loop and the evaluation metrics. File formats, the CLI and
//! thread pools live in the `hiergrade` companion crate.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod corpus;
pub mod encoder;
pub mod gnn;
pub mod graph;
pub(crate) mod math;
pub mod model;
pub mod nn;
pub mod pipeline;
pub mod scorer;
pub mod tensor;

use alloc::string::String;

pub use tensor::{ParamId, ParamStore, Tape, Tensor, TensorError, Var};

/// Errors raised above the tensor layer.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Corpus(#[from] corpus::CorpusError),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("numeric error: {0}")]
    Numeric(String),
}

impl From<Error> for TensorError {
    fn from(e: Error) -> Self {
        match e {
            Error::Tensor(t) => t,
            other => TensorError::Contract(alloc::format!("{}", other)),
        }
    }
}

pub type Result<T, E = Error> = core::result::Result<T, E>;
