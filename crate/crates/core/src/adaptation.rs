//! Conjugate updating of implicit samples with observed cases.
//!
//! Each (disease, question) cell is a Dirichlet distribution stored as
//! pseudo-counts. A case that answered a question adds one count to the
//! observed response in the cell of its true disease. Degenerate cells, whose
//! judgements were all categorical, never learn; their skipped observations
//! are counted instead.

use std::collections::BTreeMap;

use crate::calibration::reliability_stat;
use crate::elicitation::{ElicitationPolicy, ImplicitSample};
use crate::error::{Error, Result};
use crate::exec::{self, Execution};
use crate::model::{partition_cases, CaseRecord, DirichletCell, OutcomeVector, ProbabilityVector, Schema};
use crate::scoring::{ForecastTable, ScoringRule};

/// A cell together with the implicit sample it was built from.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvertedCell {
    pub cell: DirichletCell,
    pub sample: ImplicitSample,
}

/// Dirichlet cells for every (disease, question) of a schema.
#[derive(Debug, Clone, PartialEq)]
pub struct CellSet {
    schema: Schema,
    policy: ElicitationPolicy,
    cells: Vec<ConvertedCell>,
}

impl CellSet {
    /// `cells` is indexed by [`Schema::slot`].
    pub fn new(schema: Schema, policy: ElicitationPolicy, cells: Vec<ConvertedCell>) -> Result<Self> {
        if cells.len() != schema.cell_count() {
            return Err(Error::InvalidTable(format!(
                "{} cells for a {}x{} grid",
                cells.len(),
                schema.diseases().len(),
                schema.questions().len()
            )));
        }
        for (slot, c) in cells.iter().enumerate() {
            let (_, q) = schema.coordinates(slot);
            let question = &schema.questions()[q];
            if c.cell.responses != question.responses
                || c.cell.prior.len() != question.arity()
                || c.cell.observed.len() != question.arity()
            {
                let (d, q) = schema.cell_label(slot);
                return Err(Error::InvalidTable(format!(
                    "cell ({d}, {q}) does not match its question's responses"
                )));
            }
        }
        Ok(Self { schema, policy, cells })
    }

    pub fn schema(&self) -> &Schema {
        &self.schema
    }

    pub fn policy(&self) -> &ElicitationPolicy {
        &self.policy
    }

    pub fn cells(&self) -> &[ConvertedCell] {
        &self.cells
    }

    pub fn cell(&self, slot: usize) -> &ConvertedCell {
        &self.cells[slot]
    }

    pub fn cell_for(&self, disease: &str, question: &str) -> Option<&ConvertedCell> {
        let d = self.schema.disease_index(disease)?;
        let q = self.schema.question_index(question)?;
        Some(&self.cells[self.schema.slot(d, q)])
    }

    /// `(disease, question)` of every degenerate cell, in grid order.
    pub fn degenerate_cells(&self) -> Vec<(&str, &str)> {
        self.cells
            .iter()
            .enumerate()
            .filter(|(_, c)| c.cell.degenerate)
            .map(|(slot, _)| self.schema.cell_label(slot))
            .collect()
    }

    /// Current posterior means as forecasts.
    pub fn posterior_forecasts(&self) -> Result<ForecastTable> {
        let forecasts = self
            .cells
            .iter()
            .map(|c| posterior_mean(&c.cell))
            .collect::<Result<Vec<_>>>()?;
        ForecastTable::new(self.schema.clone(), forecasts)
    }
}

/// Result of [`posterior_update`].
#[derive(Debug, Clone, PartialEq)]
pub struct UpdateOutcome {
    pub cell: DirichletCell,
    /// True when the cell is degenerate and the observations were discarded.
    pub skipped: bool,
}

/// Adds observed counts, by response label, to a cell.
pub fn posterior_update(cell: &DirichletCell, observed: &[(&str, f64)]) -> Result<UpdateOutcome> {
    let mut counts = vec![0.0; cell.len()];
    for &(label, count) in observed {
        let i = cell
            .responses
            .iter()
            .position(|r| r == label)
            .ok_or_else(|| Error::UnknownResponse {
                question: String::new(),
                response: label.to_owned(),
            })?;
        if !(count >= 0.0 && count.is_finite()) {
            return Err(Error::NegativeCount {
                response: label.to_owned(),
                count,
            });
        }
        counts[i] += count;
    }
    let mut cell = cell.clone();
    let skipped = !add_counts(&mut cell, &counts) && counts.iter().any(|&c| c > 0.0);
    Ok(UpdateOutcome { cell, skipped })
}

/// Adds `counts` unless the cell is degenerate. Returns whether it was applied.
fn add_counts(cell: &mut DirichletCell, counts: &[f64]) -> bool {
    if cell.degenerate {
        return false;
    }
    for (o, c) in cell.observed.iter_mut().zip(counts) {
        *o += c;
    }
    true
}

/// `counts / total`.
pub fn posterior_mean(cell: &DirichletCell) -> Result<ProbabilityVector> {
    let counts = cell.counts();
    let total: f64 = counts.iter().sum();
    if !(total > 0.0) {
        return Err(Error::ZeroTotal);
    }
    let values = counts.iter().map(|c| (c / total).clamp(0.0, 1.0)).collect();
    ProbabilityVector::new(values)
}

/// Whether invalid cases abort a run or are reported and skipped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CaseMode {
    #[default]
    Lenient,
    Strict,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct AdaptSummary {
    /// Observations added to cells.
    pub applied: u64,
    /// Observations discarded because their cell is degenerate.
    pub skipped: u64,
    /// Cases that failed validation, with the reason.
    pub rejected: Vec<(String, Error)>,
}

type Screened<'a> = (Vec<&'a CaseRecord>, Vec<(String, Error)>);

fn screen<'a>(schema: &Schema, cases: &'a [CaseRecord], mode: CaseMode) -> Result<Screened<'a>> {
    let (valid, rejected) = partition_cases(schema, cases);
    if mode == CaseMode::Strict {
        if let Some((id, err)) = rejected.first() {
            return Err(Error::InvalidCases {
                count: rejected.len(),
                first: format!("case {id}: {err}"),
            });
        }
    }
    Ok((valid, rejected))
}

/// Adds every answered question of every valid case to its cell.
pub fn batch_adapt(
    state: &CellSet,
    cases: &[CaseRecord],
    mode: CaseMode,
    exec: Execution,
) -> Result<(CellSet, AdaptSummary)> {
    let schema = state.schema();
    let (valid, rejected) = screen(schema, cases, mode)?;
    let per_case = exec::try_map(exec, &valid, |c| c.observations(schema))?;

    let mut counts: Vec<Vec<f64>> = state.cells.iter().map(|c| vec![0.0; c.cell.len()]).collect();
    for (slot, r) in per_case.into_iter().flatten() {
        counts[slot][r] += 1.0;
    }

    let mut next = state.clone();
    let mut summary = AdaptSummary {
        rejected,
        ..Default::default()
    };
    for (cell, add) in next.cells.iter_mut().zip(&counts) {
        let n = add.iter().sum::<f64>() as u64;
        if add_counts(&mut cell.cell, add) {
            summary.applied += n;
        } else {
            summary.skipped += n;
        }
    }
    Ok((next, summary))
}

/// One answered question during a prequential replay.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceEntry {
    /// Position of the case in the replay, counting only valid cases.
    pub case_index: usize,
    pub case_id: String,
    pub disease: String,
    pub question: String,
    pub response: String,
    /// Probability the current posterior mean gave the observed response.
    pub prob_observed: f64,
    /// One score per rule of the trace, against the current posterior mean.
    pub scores: Vec<f64>,
    /// Reliability statistic against the cell's means at the start of the replay.
    pub reliability: f64,
    /// Cell total after this case was absorbed.
    pub total_after: f64,
    pub skipped: bool,
    /// Running totals per rule, up to and including this entry.
    pub cumulative: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PrequentialTrace {
    pub rules: Vec<ScoringRule>,
    pub entries: Vec<TraceEntry>,
    /// Final cumulative score per rule.
    pub cumulative: Vec<f64>,
    /// Observations discarded because their cell is degenerate.
    pub skipped_updates: u64,
    pub rejected: Vec<(String, Error)>,
}

struct CellStep {
    entry: usize,
    prob_observed: f64,
    scores: Vec<f64>,
    reliability: f64,
    total_after: f64,
    skipped: bool,
}

/// Scores each case against the current posterior means, then absorbs it.
///
/// Cells are independent, so each cell's history is replayed on its own
/// (in parallel when enabled) and the entries are merged back in case order.
pub fn prequential_replay(
    state: &CellSet,
    cases: &[CaseRecord],
    rules: &[ScoringRule],
    floor: Option<f64>,
    mode: CaseMode,
    exec: Execution,
) -> Result<(PrequentialTrace, CellSet)> {
    if let Some(eps) = floor {
        if !(eps >= 0.0) {
            return Err(Error::NegativeFloor(eps));
        }
    }
    let schema = state.schema();
    let (valid, rejected) = screen(schema, cases, mode)?;
    let per_case = exec::try_map(exec, &valid, |c| c.observations(schema))?;

    // entry index → (case index, slot, response)
    let mut events = Vec::new();
    let mut by_cell: Vec<Vec<(usize, usize)>> = vec![Vec::new(); schema.cell_count()];
    for (ci, obs) in per_case.iter().enumerate() {
        for &(slot, r) in obs {
            by_cell[slot].push((events.len(), r));
            events.push((ci, slot, r));
        }
    }

    let replayed = exec::map_range(
        exec,
        schema.cell_count(),
        |slot| -> Result<(Vec<CellStep>, DirichletCell)> {
            let mut cell = state.cells[slot].cell.clone();
            let start = posterior_mean(&cell)?;
            let mut steps = Vec::with_capacity(by_cell[slot].len());
            for &(entry, r) in &by_cell[slot] {
                let current = posterior_mean(&cell)?;
                let e = OutcomeVector::new(cell.len(), r)?;
                let scores = rules
                    .iter()
                    .map(|rule| rule.score(&current, &e, floor))
                    .collect::<Result<Vec<_>>>()?;
                let mut add = vec![0.0; cell.len()];
                add[r] = 1.0;
                let applied = add_counts(&mut cell, &add);
                steps.push(CellStep {
                    entry,
                    prob_observed: current.get(r),
                    scores,
                    reliability: reliability_stat(&start, &e)?,
                    total_after: cell.total(),
                    skipped: !applied,
                });
            }
            Ok((steps, cell))
        },
    );

    let mut next = state.clone();
    let mut slots: Vec<Option<CellStep>> = std::iter::repeat_with(|| None).take(events.len()).collect();
    let mut skipped_updates = 0;
    for (slot, result) in replayed.into_iter().enumerate() {
        let (steps, cell) = result?;
        next.cells[slot].cell = cell;
        for step in steps {
            skipped_updates += u64::from(step.skipped);
            let i = step.entry;
            slots[i] = Some(step);
        }
    }

    let mut cumulative = vec![0.0; rules.len()];
    let mut entries = Vec::with_capacity(events.len());
    for ((ci, slot, r), step) in events.into_iter().zip(slots) {
        let step = step.expect("every event is replayed by its cell");
        for (acc, s) in cumulative.iter_mut().zip(&step.scores) {
            *acc += s;
        }
        let (disease, question) = schema.cell_label(slot);
        let (_, q) = schema.coordinates(slot);
        entries.push(TraceEntry {
            case_index: ci,
            case_id: valid[ci].id.clone(),
            disease: disease.to_owned(),
            question: question.to_owned(),
            response: schema.questions()[q].responses[r].clone(),
            prob_observed: step.prob_observed,
            scores: step.scores,
            reliability: step.reliability,
            total_after: step.total_after,
            skipped: step.skipped,
            cumulative: cumulative.clone(),
        });
    }

    let trace = PrequentialTrace {
        rules: rules.to_vec(),
        entries,
        cumulative,
        skipped_updates,
        rejected,
    };
    Ok((trace, next))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    /// Mean reliability statistic above zero: judgements too extreme.
    OverConfident,
    /// Mean reliability statistic below zero: judgements not extreme enough.
    Diffident,
}

impl Direction {
    pub fn name(self) -> &'static str {
        match self {
            Direction::OverConfident => "over-confident",
            Direction::Diffident => "diffident",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct UnreliableCell {
    pub disease: String,
    pub question: String,
    pub cases: usize,
    pub mean_reliability: f64,
    pub direction: Direction,
}

/// Heuristic monitor: cells whose mean reliability statistic, measured
/// against the means at the start of the replay, exceeds `threshold` in
/// magnitude after at least `min_cases` observations.
pub fn flag_unreliable(trace: &PrequentialTrace, min_cases: usize, threshold: f64) -> Vec<UnreliableCell> {
    let mut cells: BTreeMap<(&str, &str), (usize, f64)> = BTreeMap::new();
    for e in &trace.entries {
        let c = cells.entry((&e.disease, &e.question)).or_default();
        c.0 += 1;
        c.1 += e.reliability;
    }
    cells
        .into_iter()
        .filter_map(|((disease, question), (n, sum))| {
            let mean = sum / n as f64;
            (n >= min_cases.max(1) && mean.abs() > threshold).then(|| UnreliableCell {
                disease: disease.to_owned(),
                question: question.to_owned(),
                cases: n,
                mean_reliability: mean,
                direction: if mean > 0.0 {
                    Direction::OverConfident
                } else {
                    Direction::Diffident
                },
            })
        })
        .collect()
}
