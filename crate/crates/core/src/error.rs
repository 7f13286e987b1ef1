use thiserror::Error;

use crate::local::LocalDensity;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected length {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("the form has no nonzero coefficient")]
    ZeroForm,

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("integer overflow while evaluating {0}")]
    Overflow(&'static str),

    #[error("degenerate fiber: every B_k(x, y) vanishes")]
    DegenerateFiber,

    #[error("zero vector has no hyperplane")]
    ZeroVector,

    #[error("gcd({a}, {q}) != 1")]
    NotCoprime { a: i64, q: u64 },

    #[error("point {0:?} lies outside the admissible set A_(i,lambda)")]
    Inadmissible(Vec<i64>),

    #[error("no generic form found after {attempts} attempts")]
    Generation { attempts: usize },

    #[error("quadrature produced a non-finite value: {0}")]
    Quadrature(String),

    #[error("degenerate least-squares fit: {0}")]
    DegenerateFit(String),

    #[error("work budget exceeded: {needed} > {budget} ({what})")]
    Budget {
        what: String,
        needed: u128,
        budget: u128,
        partial: Option<Box<LocalDensity>>,
    },

    #[error("malformed form file: {0}")]
    FormFile(String),
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }

    pub fn is_budget(&self) -> bool {
        matches!(self, Error::Budget { .. })
    }
}
