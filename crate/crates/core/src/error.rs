//! Crate-wide error type.

use thiserror::Error;

use crate::model::ValidationReport;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Shape(String),
    #[error("matrix is not square ({rows}x{cols})")]
    NonSquare { rows: usize, cols: usize },
    #[error("matrix is not Hermitian (relative deviation {deviation:.3e})")]
    NotHermitian { deviation: f64 },
    #[error("invalid model:\n{0}")]
    InvalidModel(ValidationReport),
    #[error("unknown sector {0}")]
    UnknownSector(usize),
    #[error("no jump channel from sector {from} to sector {to}{}", match .label { Some(l) => format!(" with label {l:?}"), None => String::new() })]
    NoChannel {
        from: usize,
        to: usize,
        label: Option<String>,
    },
    #[error("ambiguous jump channel from sector {from} to sector {to}; a label is required")]
    AmbiguousChannel { from: usize, to: usize },
    #[error("zero-norm state")]
    ZeroState,
    #[error("zero total jump weight at t = {t}")]
    ZeroJumpWeight { t: f64 },
    #[error("jump operator annihilates the state (norm {norm:.3e} at t = {t})")]
    AnnihilatedState { t: f64, norm: f64 },
    #[error("numerical degeneracy: {0}")]
    NumericalDegeneracy(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("invalid event history: {0}")]
    InvalidHistory(String),
    #[error("master-equation integration failed: {0}")]
    IntegrationFailure(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("malformed event log: {0}")]
    MalformedLog(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
