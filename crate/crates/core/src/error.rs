use thiserror::Error;

use crate::interval::Interval;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("domain error: {op} undefined at {value}")]
    Domain { op: &'static str, value: f64 },

    #[error("empty domain: {op} over {interval}")]
    EmptyDomain { op: &'static str, interval: Interval },

    #[error("unbounded box: variable `{0}` needs finite bounds")]
    UnboundedBox(String),

    #[error("invalid integer assignment: {0}")]
    Assignment(String),

    #[error("variable `{0}` is not binary")]
    NonBinary(String),

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("iteration limit reached in {0}")]
    IterationLimit(&'static str),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
