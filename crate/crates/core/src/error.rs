use alloc::string::String;

use crate::expr::{EvalError, ParseError};

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("parse error in {context}: {source}")]
    Parse { context: String, source: ParseError },
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("coordinate x{index} = {value} outside chart interval ({lo}, {hi})")]
    OutsideDomain { index: usize, value: f64, lo: f64, hi: f64 },
    #[error("metric is not positive definite")]
    NotPositiveDefinite,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("degenerate plane (Gram determinant {0:e})")]
    DegeneratePlane(f64),
    #[error("distribution is rank deficient (condition number {0:e})")]
    RankDeficient(f64),
    #[error("vector is not in {which}: projection residual {residual:e}")]
    WrongDistribution { which: &'static str, residual: f64 },
    #[error("vectors are not orthonormal (residual {0:e})")]
    NotOrthonormal(f64),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("hypothesis violated: {0}")]
    Hypothesis(String),
    #[error("trajectory left the chart at t = {t}")]
    ChartExit { t: f64 },
    #[error("speed drift {drift:e} at t = {t}")]
    SpeedDrift { t: f64, drift: f64 },
    #[error("chart is not closed: coordinate x{0} is not periodic")]
    NotClosed(usize),
    #[error("unknown gallery item `{0}`")]
    UnknownItem(String),
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
}

impl Error {
    pub fn parse(context: impl Into<String>, source: ParseError) -> Self {
        Error::Parse { context: context.into(), source }
    }

    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }
}
