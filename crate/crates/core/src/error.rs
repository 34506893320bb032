use std::io;

use thiserror::Error;

use crate::model::SolverTrace;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),

    #[error("bad magic: expected \"LRJS\", found {0:?}")]
    BadMagic([u8; 4]),

    #[error("unsupported LRJS version {0}")]
    UnsupportedVersion(u16),

    #[error("unknown LRJS dtype code {0}")]
    UnknownDtype(u8),

    #[error("truncated payload: expected {expected} bytes, found {found}")]
    Truncated { expected: u64, found: u64 },

    #[error("matrix contains a non-finite entry at ({row}, {col})")]
    NonFinite { row: usize, col: usize },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("support mismatch between coefficients and operator")]
    SupportMismatch,

    #[error("infeasible generator request: {0}")]
    Infeasible(String),

    #[error("SVD did not converge")]
    SvdFailed,

    #[error("solver diverged at iteration {iteration}")]
    Diverged {
        iteration: usize,
        trace: Box<SolverTrace>,
    },

    #[error("CNR undefined: {0}")]
    DegenerateCnr(String),

    #[error("relative error undefined: reference frame is zero")]
    ZeroReference,

    #[error("all-zero envelope cannot be log-compressed")]
    ZeroEnvelope,

    #[error("config error: {0}")]
    Config(String),
}

pub(crate) fn dim_err(msg: impl Into<String>) -> Error {
    Error::Dimension(msg.into())
}

pub(crate) fn arg_err(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
