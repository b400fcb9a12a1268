//! Error types shared across the crate.

use std::fmt;

use thiserror::Error;

use crate::domain::{SourceKind, Unit};

pub type Result<T> = std::result::Result<T, Error>;

/// A single invariant violation found while validating a record.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub field: &'static str,
    pub message: String,
}

impl Violation {
    pub fn new(field: &'static str, message: impl Into<String>) -> Self {
        Self {
            field,
            message: message.into(),
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

/// A parse or validation problem attached to a location in an input file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IngestError {
    pub origin: String,
    pub line: u64,
    pub column: Option<String>,
    pub message: String,
}

impl fmt::Display for IngestError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.origin, self.line)?;
        if let Some(col) = &self.column {
            write!(f, " [{col}]")?;
        }
        write!(f, ": {}", self.message)
    }
}

fn join<T: fmt::Display>(items: &[T]) -> String {
    items
        .iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join("; ")
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("unit mismatch: expected {expected}, found {found}")]
    UnitMismatch { expected: Unit, found: Unit },

    #[error("unsupported source '{0}' for this operation")]
    UnsupportedSource(SourceKind),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid record: {}", join(.0))]
    Invalid(Vec<Violation>),

    #[error("{}", join(.0))]
    Ingest(Vec<IngestError>),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("missing {factor} for {fuel} in scenario '{scenario}'")]
    MissingFactor {
        scenario: String,
        factor: &'static str,
        fuel: SourceKind,
    },

    #[error("unknown scenario '{0}'")]
    UnknownScenario(String),

    #[error("incomplete monthly prefix for {fuel} {year}: missing month(s) {missing:?}")]
    IncompletePrefix {
        year: i32,
        fuel: SourceKind,
        missing: Vec<u8>,
    },

    #[error("missing data: {}", .0.join(", "))]
    MissingData(Vec<String>),

    #[error("growth base is not strictly positive ({0})")]
    NonPositiveBase(f64),

    #[error("insufficient data: need at least {needed} values, got {got}")]
    InsufficientData { needed: usize, got: usize },

    #[error("regression predictor has zero variance")]
    DegenerateRegression,

    #[error("confidence level {0} is outside (0, 1)")]
    InvalidLevel(f64),

    #[error("band refused: {draws} draws requested, at least {minimum} required")]
    BandRefused { draws: usize, minimum: usize },

    #[error("total variance is zero; contributions are undefined")]
    ZeroVariance,
}
