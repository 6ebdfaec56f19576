//! Criticism and improvement of imprecise subjective probability assessments.
//!
//! Experts give a percentage range for each response of each question under
//! each disease. This crate
//!
//! * scores the midpoint forecasts against observed cases ([`scoring`]),
//! * splits the Brier score into lack of discrimination and lack of
//!   reliability and bins forecasts for reliability diagrams ([`calibration`]),
//! * reads each range as a one-standard-error interval to obtain an implicit
//!   Dirichlet sample ([`elicitation`]), and
//! * updates those samples with cases, either in one batch or one case at a
//!   time with prequential scoring ([`adaptation`]).
//!
//! Batch operations take an [`Execution`]; with the default `parallel`
//! feature they run on the rayon thread pool.

#![allow(clippy::neg_cmp_op_on_partial_ord)] // `!(x >= 0.0)` also rejects NaN

pub mod adaptation;
pub mod calibration;
pub mod elicitation;
pub mod error;
pub mod exec;
pub mod ingestion;
pub mod model;
pub mod scoring;

pub use adaptation::{
    batch_adapt, flag_unreliable, posterior_mean, posterior_update, prequential_replay, AdaptSummary, CaseMode,
    CellSet, ConvertedCell, Direction, PrequentialTrace, TraceEntry, UnreliableCell,
};
pub use calibration::{
    decomposition_report, expected_brier_under_reliability, reliability_bins, reliability_stat, response_pairs,
    BinScheme, DecompositionRecord, ReliabilityBinTable,
};
pub use elicitation::{
    convert_table, implicit_sample_size, midpoints, point_forecasts, rescale, to_dirichlet, widen_zeros,
    ElicitationPolicy, ImplicitSample, SampleRounding,
};
pub use error::{Error, Result};
pub use exec::Execution;
pub use ingestion::{
    parse_assessments, parse_cases, read_state, write_assessments, write_cases, write_state, FormatError,
};
pub use model::{
    validate_table, AssessmentTable, CaseRecord, DirichletCell, IntervalAssessment, OutcomeVector, ProbabilityVector,
    QuestionSchema, Schema, Violation,
};
pub use scoring::{
    abs_dev_score, aggregate, brier, forecast_outcomes_all, log_score, score_case, score_cases, ForecastOutcome,
    ForecastTable, GroupKey, GroupSummary, ScoreRecord, ScoringRule,
};
