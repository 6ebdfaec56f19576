use thiserror::Error;

use crate::ingestion::FormatError;

/// Errors raised by the scoring, elicitation and adaptation operations.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("forecast has {forecast} responses but the outcome has {outcome}")]
    LengthMismatch { forecast: usize, outcome: usize },

    #[error("invalid probability vector: {0}")]
    InvalidProbability(String),

    #[error("invalid outcome vector: {0}")]
    InvalidOutcome(String),

    #[error("invalid interval {lo}-{hi}: {reason}")]
    InvalidInterval { lo: f64, hi: f64, reason: &'static str },

    #[error("log-score floor must be nonnegative, got {0}")]
    NegativeFloor(f64),

    #[error("unknown disease '{0}'")]
    UnknownDisease(String),

    #[error("unknown question '{0}'")]
    UnknownQuestion(String),

    #[error("response '{response}' is not defined for question '{question}'")]
    UnknownResponse { question: String, response: String },

    #[error("cannot aggregate records from different rules ({first} and {other})")]
    MixedRules { first: &'static str, other: &'static str },

    #[error("nothing to aggregate")]
    EmptyInput,

    #[error("all interval midpoints are zero{}", location_suffix(.disease, .question))]
    AllZeroMidpoints {
        disease: Option<String>,
        question: Option<String>,
    },

    #[error("cell has zero total count")]
    ZeroTotal,

    #[error("negative observation count {count} for response '{response}'")]
    NegativeCount { response: String, count: f64 },

    #[error("invalid policy: {0}")]
    InvalidPolicy(String),

    #[error("invalid bin scheme: {0}")]
    InvalidBinScheme(String),

    #[error("probability {0} is outside [0, 1]")]
    ProbabilityOutOfRange(f64),

    #[error("table failed validation: {0}")]
    InvalidTable(String),

    #[error("{count} case(s) failed validation; first: {first}")]
    InvalidCases { count: usize, first: String },

    #[error(transparent)]
    Format(#[from] FormatError),
}

fn location_suffix(disease: &Option<String>, question: &Option<String>) -> String {
    match (disease, question) {
        (Some(d), Some(q)) => format!(" for ({d}, {q})"),
        _ => String::new(),
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
