use std::fmt;

use crate::lp::LpStatus;

/// Errors produced anywhere in the estimation / synthesis / evaluation pipeline.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),
    #[error("invalid instance: {0}")]
    InvalidInstance(String),
    #[error("parameter out of range: {0}")]
    Parameter(String),
    #[error("sample budget too small: {0}")]
    Budget(String),
    #[error("size guard exceeded: {what} = {size} > {limit}")]
    SizeGuard {
        what: &'static str,
        size: usize,
        limit: usize,
    },
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("solver returned {0}")]
    Solver(LpStatus),
    #[error("solver solution inconsistent: {0}")]
    SolverInconsistency(String),
    #[error("policy does not cover {0}")]
    PolicyCoverage(String),
    #[error("policy/instance mismatch: {0}")]
    Mismatch(String),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("invalid classification: {0}")]
    InvalidClassification(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn parse_err(line: usize, msg: impl fmt::Display) -> Error {
    Error::Parse {
        line,
        msg: msg.to_string(),
    }
}
