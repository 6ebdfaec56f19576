//! Domain types shared by every other module.
//!
//! Percentages stay on the 0-100 scale they were elicited on; conversion to
//! probabilities happens in [`IntervalAssessment::midpoint`] and
//! [`IntervalAssessment::half_range`]. All values are immutable once built
//! and can be shared read-only across worker threads.

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Fewest responses a question may have.
pub const MIN_RESPONSES: usize = 2;
/// Most responses a question may have.
pub const MAX_RESPONSES: usize = 5;

/// Tolerance on the sum of a probability vector.
pub const SUM_TOLERANCE: f64 = 1e-9;

/// An expert's lo-hi percentage range for one response.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntervalAssessment {
    pub lo: f64,
    pub hi: f64,
}

impl IntervalAssessment {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        let interval = Self { lo, hi };
        match interval.problem() {
            Some(reason) => Err(Error::InvalidInterval { lo, hi, reason }),
            None => Ok(interval),
        }
    }

    /// A zero-width judgement such as `0-0%` or `100-100%`.
    pub fn point(pct: f64) -> Result<Self> {
        Self::new(pct, pct)
    }

    /// The probability at the centre of the interval, in [0, 1].
    pub fn midpoint(&self) -> f64 {
        (self.lo + self.hi) / 200.0
    }

    /// Half the interval width as a probability, in [0, 0.5].
    pub fn half_range(&self) -> f64 {
        (self.hi - self.lo) / 200.0
    }

    pub fn is_zero_width(&self) -> bool {
        self.lo == self.hi
    }

    pub fn is_valid(&self) -> bool {
        self.problem().is_none()
    }

    fn problem(&self) -> Option<&'static str> {
        if !self.lo.is_finite() || !self.hi.is_finite() {
            Some("bounds must be finite")
        } else if !(0.0..=100.0).contains(&self.lo) || !(0.0..=100.0).contains(&self.hi) {
            Some("bounds must lie in [0, 100]")
        } else if self.lo > self.hi {
            Some("lower bound exceeds upper bound")
        } else {
            None
        }
    }
}

impl fmt::Display for IntervalAssessment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-{}%", self.lo, self.hi)
    }
}

/// A question and its ordered response labels.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuestionSchema {
    pub id: String,
    pub responses: Vec<String>,
}

impl QuestionSchema {
    pub fn new(id: impl Into<String>, responses: impl IntoIterator<Item = impl Into<String>>) -> Self {
        Self {
            id: id.into(),
            responses: responses.into_iter().map(Into::into).collect(),
        }
    }

    pub fn arity(&self) -> usize {
        self.responses.len()
    }

    pub fn response_index(&self, label: &str) -> Option<usize> {
        self.responses.iter().position(|r| r == label)
    }
}

/// Disease and question labels in presentation order, with lookup indices.
///
/// Cells of a table are addressed densely as `disease * questions + question`.
#[derive(Debug, Clone, Default)]
pub struct Schema {
    diseases: Vec<String>,
    questions: Vec<QuestionSchema>,
    disease_lookup: HashMap<String, usize>,
    question_lookup: HashMap<String, usize>,
}

impl PartialEq for Schema {
    fn eq(&self, other: &Self) -> bool {
        self.diseases == other.diseases && self.questions == other.questions
    }
}

impl Schema {
    /// Builds the schema without validating it; see [`validate_table`].
    /// Duplicate labels resolve to their first occurrence.
    pub fn new(diseases: Vec<String>, questions: Vec<QuestionSchema>) -> Self {
        let mut disease_lookup = HashMap::with_capacity(diseases.len());
        for (i, d) in diseases.iter().enumerate() {
            disease_lookup.entry(d.clone()).or_insert(i);
        }
        let mut question_lookup = HashMap::with_capacity(questions.len());
        for (i, q) in questions.iter().enumerate() {
            question_lookup.entry(q.id.clone()).or_insert(i);
        }
        Self {
            diseases,
            questions,
            disease_lookup,
            question_lookup,
        }
    }

    pub fn diseases(&self) -> &[String] {
        &self.diseases
    }

    pub fn questions(&self) -> &[QuestionSchema] {
        &self.questions
    }

    pub fn disease_index(&self, label: &str) -> Option<usize> {
        self.disease_lookup.get(label).copied()
    }

    pub fn question_index(&self, id: &str) -> Option<usize> {
        self.question_lookup.get(id).copied()
    }

    pub fn question(&self, id: &str) -> Option<&QuestionSchema> {
        self.question_index(id).map(|i| &self.questions[i])
    }

    pub fn cell_count(&self) -> usize {
        self.diseases.len() * self.questions.len()
    }

    pub fn slot(&self, disease: usize, question: usize) -> usize {
        disease * self.questions.len() + question
    }

    /// Inverse of [`Schema::slot`].
    pub fn coordinates(&self, slot: usize) -> (usize, usize) {
        let nq = self.questions.len();
        (slot / nq, slot % nq)
    }

    pub fn cell_label(&self, slot: usize) -> (&str, &str) {
        let (d, q) = self.coordinates(slot);
        (&self.diseases[d], &self.questions[q].id)
    }
}

/// The disease × question grid of interval judgements.
#[derive(Debug, Clone, PartialEq)]
pub struct AssessmentTable {
    schema: Schema,
    cells: Vec<Option<Vec<IntervalAssessment>>>,
}

impl AssessmentTable {
    pub fn new(schema: Schema) -> Self {
        let cells = vec![None; schema.cell_count()];
        Self { schema, cells }
    }

    pub fn schema(&self) -> &Schema {
        &self.schema
    }

    /// Stores a cell, returning the previous one if it was already set.
    pub fn set_cell(
        &mut self,
        disease: &str,
        question: &str,
        intervals: Vec<IntervalAssessment>,
    ) -> Result<Option<Vec<IntervalAssessment>>> {
        let d = self
            .schema
            .disease_index(disease)
            .ok_or_else(|| Error::UnknownDisease(disease.to_owned()))?;
        let q = self
            .schema
            .question_index(question)
            .ok_or_else(|| Error::UnknownQuestion(question.to_owned()))?;
        let slot = self.schema.slot(d, q);
        Ok(self.cells[slot].replace(intervals))
    }

    pub fn cell(&self, disease: &str, question: &str) -> Option<&[IntervalAssessment]> {
        let d = self.schema.disease_index(disease)?;
        let q = self.schema.question_index(question)?;
        self.cell_at(self.schema.slot(d, q))
    }

    pub fn cell_at(&self, slot: usize) -> Option<&[IntervalAssessment]> {
        self.cells.get(slot)?.as_deref()
    }

    /// Present cells in disease-major order with their slot index.
    pub fn iter_cells(&self) -> impl Iterator<Item = (usize, &[IntervalAssessment])> {
        self.cells
            .iter()
            .enumerate()
            .filter_map(|(slot, c)| c.as_deref().map(|c| (slot, c)))
    }

    pub fn is_empty(&self) -> bool {
        self.schema.cell_count() == 0
    }
}

/// One problem found by [`validate_table`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub disease: Option<String>,
    pub question: Option<String>,
    pub response: Option<String>,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<&str> = [&self.disease, &self.question, &self.response]
            .into_iter()
            .filter_map(|p| p.as_deref())
            .collect();
        if parts.is_empty() {
            write!(f, "{}", self.message)
        } else {
            write!(f, "({}): {}", parts.join(", "), self.message)
        }
    }
}

/// Lists every structural or range problem in the table. Empty means valid.
pub fn validate_table(table: &AssessmentTable) -> Vec<Violation> {
    let schema = table.schema();
    let mut out = Vec::new();
    let violation = |d: Option<&str>, q: Option<&str>, r: Option<&str>, msg: String| Violation {
        disease: d.map(str::to_owned),
        question: q.map(str::to_owned),
        response: r.map(str::to_owned),
        message: msg,
    };

    for (i, d) in schema.diseases().iter().enumerate() {
        if schema.diseases()[..i].contains(d) {
            out.push(violation(Some(d), None, None, "duplicate disease label".into()));
        }
    }
    for (i, q) in schema.questions().iter().enumerate() {
        if schema.questions()[..i].iter().any(|p| p.id == q.id) {
            out.push(violation(None, Some(&q.id), None, "duplicate question id".into()));
        }
        if !(MIN_RESPONSES..=MAX_RESPONSES).contains(&q.arity()) {
            out.push(violation(
                None,
                Some(&q.id),
                None,
                format!(
                    "question has {} responses; expected {MIN_RESPONSES} to {MAX_RESPONSES}",
                    q.arity()
                ),
            ));
        }
        for (j, r) in q.responses.iter().enumerate() {
            if q.responses[..j].contains(r) {
                out.push(violation(None, Some(&q.id), Some(r), "duplicate response label".into()));
            }
        }
    }

    for slot in 0..schema.cell_count() {
        let (d, q) = schema.coordinates(slot);
        let disease = &schema.diseases()[d];
        let question = &schema.questions()[q];
        let Some(cell) = table.cell_at(slot) else {
            out.push(violation(
                Some(disease),
                Some(&question.id),
                None,
                "missing assessment".into(),
            ));
            continue;
        };
        if cell.len() != question.arity() {
            out.push(violation(
                Some(disease),
                Some(&question.id),
                None,
                format!(
                    "cell has {} intervals but the question has {} responses",
                    cell.len(),
                    question.arity()
                ),
            ));
        }
        for (j, interval) in cell.iter().enumerate() {
            if let Some(reason) = interval.problem() {
                let response = question.responses.get(j).map(String::as_str);
                out.push(violation(
                    Some(disease),
                    Some(&question.id),
                    response,
                    format!("interval {interval}: {reason}"),
                ));
            }
        }
    }
    out
}

/// A point forecast over a question's responses.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProbabilityVector(Vec<f64>);

impl ProbabilityVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidProbability("empty vector".into()));
        }
        if let Some(v) = values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::InvalidProbability(format!("entry {v} outside [0, 1]")));
        }
        let sum: f64 = values.iter().sum();
        if (sum - 1.0).abs() > SUM_TOLERANCE {
            return Err(Error::InvalidProbability(format!("entries sum to {sum}")));
        }
        Ok(Self(values))
    }

    /// All mass on response `index`.
    pub fn point_mass(len: usize, index: usize) -> Result<Self> {
        if index >= len {
            return Err(Error::InvalidProbability(format!("index {index} out of {len}")));
        }
        let mut values = vec![0.0; len];
        values[index] = 1.0;
        Ok(Self(values))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn get(&self, index: usize) -> f64 {
        self.0[index]
    }

    pub fn sum_of_squares(&self) -> f64 {
        self.0.iter().map(|p| p * p).sum()
    }
}

/// The observed indicator vector: exactly one response occurred.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OutcomeVector {
    len: usize,
    observed: usize,
}

impl OutcomeVector {
    pub fn new(len: usize, observed: usize) -> Result<Self> {
        if observed >= len {
            return Err(Error::InvalidOutcome(format!(
                "observed index {observed} out of range for {len} responses"
            )));
        }
        Ok(Self { len, observed })
    }

    pub fn from_indicators(indicators: &[u8]) -> Result<Self> {
        let ones: Vec<usize> = indicators
            .iter()
            .enumerate()
            .filter(|(_, &v)| v != 0)
            .map(|(i, _)| i)
            .collect();
        if indicators.iter().any(|&v| v > 1) || ones.len() != 1 {
            return Err(Error::InvalidOutcome(
                "exactly one entry must be 1 and the rest 0".into(),
            ));
        }
        Self::new(indicators.len(), ones[0])
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn observed(&self) -> usize {
        self.observed
    }

    pub fn indicator(&self, index: usize) -> f64 {
        if index == self.observed {
            1.0
        } else {
            0.0
        }
    }
}

/// One patient: the confirmed disease and whichever questions were answered.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CaseRecord {
    pub id: String,
    pub disease: String,
    /// question id → response label
    pub answers: BTreeMap<String, String>,
}

impl CaseRecord {
    pub fn new(id: impl Into<String>, disease: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            disease: disease.into(),
            answers: BTreeMap::new(),
        }
    }

    pub fn with_answer(mut self, question: impl Into<String>, response: impl Into<String>) -> Self {
        self.answers.insert(question.into(), response.into());
        self
    }

    /// Checks labels against the schema, reporting the first unknown one.
    pub fn validate(&self, schema: &Schema) -> Result<()> {
        if schema.disease_index(&self.disease).is_none() {
            return Err(Error::UnknownDisease(self.disease.clone()));
        }
        for (question, response) in &self.answers {
            let q = schema
                .question(question)
                .ok_or_else(|| Error::UnknownQuestion(question.clone()))?;
            if q.response_index(response).is_none() {
                return Err(Error::UnknownResponse {
                    question: question.clone(),
                    response: response.clone(),
                });
            }
        }
        Ok(())
    }

    /// Answered questions in schema order as `(slot, response index)`.
    /// Assumes [`CaseRecord::validate`] passed.
    pub fn observations(&self, schema: &Schema) -> Result<Vec<(usize, usize)>> {
        let d = schema
            .disease_index(&self.disease)
            .ok_or_else(|| Error::UnknownDisease(self.disease.clone()))?;
        let mut out = Vec::with_capacity(self.answers.len());
        for (qi, question) in schema.questions().iter().enumerate() {
            if let Some(response) = self.answers.get(&question.id) {
                let r = question
                    .response_index(response)
                    .ok_or_else(|| Error::UnknownResponse {
                        question: question.id.clone(),
                        response: response.clone(),
                    })?;
                out.push((schema.slot(d, qi), r));
            }
        }
        if out.len() != self.answers.len() {
            let unknown = self
                .answers
                .keys()
                .find(|q| schema.question_index(q).is_none())
                .cloned()
                .unwrap_or_default();
            return Err(Error::UnknownQuestion(unknown));
        }
        Ok(out)
    }
}

/// Splits cases into those that validate and `(case id, error)` pairs for the rest.
pub fn partition_cases<'a>(schema: &Schema, cases: &'a [CaseRecord]) -> (Vec<&'a CaseRecord>, Vec<(String, Error)>) {
    let mut valid = Vec::with_capacity(cases.len());
    let mut rejected = Vec::new();
    for case in cases {
        match case.validate(schema) {
            Ok(()) => valid.push(case),
            Err(e) => rejected.push((case.id.clone(), e)),
        }
    }
    (valid, rejected)
}

/// Implicit-sample form of one (disease, question) distribution.
///
/// Pseudo-counts from the elicited prior and counts of real observations are
/// kept apart so that integer observations accumulate exactly regardless of
/// the order in which they arrive; [`DirichletCell::counts`] is their sum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DirichletCell {
    pub responses: Vec<String>,
    pub prior: Vec<f64>,
    pub observed: Vec<f64>,
    /// Every interval was categorical, so the implicit sample is nominally infinite.
    pub degenerate: bool,
}

impl DirichletCell {
    pub fn new(responses: Vec<String>, prior: Vec<f64>, degenerate: bool) -> Result<Self> {
        if responses.len() != prior.len() {
            return Err(Error::LengthMismatch {
                forecast: prior.len(),
                outcome: responses.len(),
            });
        }
        if let Some((r, &c)) = responses
            .iter()
            .zip(&prior)
            .find(|(_, c)| !(c.is_finite() && **c >= 0.0))
        {
            return Err(Error::NegativeCount {
                response: r.clone(),
                count: c,
            });
        }
        let observed = vec![0.0; prior.len()];
        Ok(Self {
            responses,
            prior,
            observed,
            degenerate,
        })
    }

    pub fn len(&self) -> usize {
        self.responses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.responses.is_empty()
    }

    pub fn counts(&self) -> Vec<f64> {
        self.prior.iter().zip(&self.observed).map(|(a, b)| a + b).collect()
    }

    pub fn prior_total(&self) -> f64 {
        self.prior.iter().sum()
    }

    pub fn observed_total(&self) -> f64 {
        self.observed.iter().sum()
    }

    pub fn total(&self) -> f64 {
        self.prior_total() + self.observed_total()
    }

    pub fn count(&self, label: &str) -> Option<f64> {
        let i = self.responses.iter().position(|r| r == label)?;
        Some(self.prior[i] + self.observed[i])
    }
}
