use thiserror::Error;

/// Errors raised by the toolkit.
///
/// Variants split into two families: input validation (malformed
/// distributions, shape mismatches) and numeric-domain failures (degenerate
/// systems, parameters outside their admissible range, blown budgets). The
/// CLI maps the first family to exit code 1 and the second to exit code 2.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch in {what}: expected {expected}, got {got}")]
    Dimension {
        what: String,
        expected: usize,
        got: usize,
    },

    #[error("{what}: entry {index} is negative or not finite ({value})")]
    InvalidEntry {
        what: String,
        index: usize,
        value: f64,
    },

    #[error("{what}: entries sum to {sum}, not 1")]
    NotNormalized { what: String, sum: f64 },

    #[error("distortion entry d({x},{xhat}) = {value} is negative or not finite")]
    NegativeDistortion { x: usize, xhat: usize, value: f64 },

    #[error("{what} is empty")]
    Empty { what: String },

    #[error("parameter {name} = {value} is outside its domain ({domain})")]
    Domain {
        name: String,
        value: f64,
        domain: String,
    },

    #[error("degenerate system: {0}")]
    Degenerate(String),

    #[error("state space too large: {states} distinct values exceed the limit {limit}; use the Berry-Esseen approximation instead")]
    TooLarge { states: usize, limit: usize },

    #[error("enumeration budget exceeded: {terms} terms needed, limit {limit}")]
    Budget { terms: f64, limit: f64 },

    #[error("support violation: {0}")]
    Support(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("io error: {0}")]
    Io(String),
}

impl Error {
    /// True for errors caused by malformed input rather than numeric domain.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::Dimension { .. }
                | Error::InvalidEntry { .. }
                | Error::NotNormalized { .. }
                | Error::NegativeDistortion { .. }
                | Error::Empty { .. }
                | Error::Parse(_)
                | Error::Io(_)
        )
    }

    pub(crate) fn domain(name: &str, value: f64, domain: &str) -> Self {
        Error::Domain {
            name: name.to_string(),
            value,
            domain: domain.to_string(),
        }
    }

    pub(crate) fn dim(what: &str, expected: usize, got: usize) -> Self {
        Error::Dimension {
            what: what.to_string(),
            expected,
            got,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
