//! Simulation harness, evaluation metrics, file formats and CLI around
//! [`flair_core`].
//!
//! The core crate carries the estimation machinery; this crate adds the
//! layers that need an operating system: generative simulation with
//! replication ([`simeval`]), the end-to-end fit pipeline with wall-clock
//! timings ([`pipeline`]), CSV/binary matrix formats ([`io`]), key=value
//! configuration files ([`config`]) and the `flair` command-line tool
//! ([`cli`]).

// Validation guards use `!(x > 0)` on purpose: the negated form also
// rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod config;
pub mod io;
pub mod pipeline;
pub mod simeval;

pub use flair_core::{Error as CoreError, Result as CoreResult};

/// JSON report schema version stamped into every emitted document.
pub const SCHEMA_VERSION: u32 = 1;

/// Library version stamped into reports for provenance.
pub fn version() -> &'static str {
    env!("CARGO_PKG_VERSION")
}

/// Errors surfaced by the command layer, split by exit code.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Usage or validation problem; exit code 2.
    #[error("{0}")]
    Validation(String),
    /// Runtime or numerical failure; exit code 1.
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }
}

impl From<flair_core::Error> for CliError {
    fn from(e: flair_core::Error) -> Self {
        match e {
            flair_core::Error::InvalidArgument(_)
            | flair_core::Error::Domain(_)
            | flair_core::Error::ShapeMismatch(_) => CliError::Validation(e.to_string()),
            _ => CliError::Runtime(e.to_string()),
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
