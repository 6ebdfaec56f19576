//! Readers and writers for the three external formats.
//!
//! * Assessments: CSV with header `disease,question,response,lo_pct,hi_pct`,
//!   one row per response.
//! * Cases: long CSV with header `case_id,disease,question,response`, one row
//!   per answered question. Unanswered questions are simply absent.
//! * State: versioned JSON holding the Dirichlet cells and the policy they
//!   were built under.
//!
//! CSV follows RFC 4180 (LF or CRLF, quoted fields). Response order is taken
//! from the assessment file and is authoritative everywhere else.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::io::Read;

use serde::{Deserialize, Serialize};

use crate::adaptation::{CellSet, ConvertedCell};
use crate::elicitation::{ElicitationPolicy, ImplicitSample};
use crate::model::{
    validate_table, AssessmentTable, CaseRecord, DirichletCell, IntervalAssessment, QuestionSchema, Schema,
};

pub const ASSESSMENT_HEADER: [&str; 5] = ["disease", "question", "response", "lo_pct", "hi_pct"];
pub const CASE_HEADER: [&str; 4] = ["case_id", "disease", "question", "response"];
pub const STATE_FORMAT: &str = "subjprob-state";
pub const STATE_VERSION: u32 = 1;

/// Most decimal places accepted in a percentage.
pub const MAX_PCT_DECIMALS: usize = 4;

/// A parse failure with its location.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub struct FormatError {
    pub file: Option<String>,
    pub line: u64,
    pub column: Option<String>,
    pub message: String,
}

impl FormatError {
    pub fn new(line: u64, column: Option<&str>, message: impl Into<String>) -> Self {
        Self {
            file: None,
            line,
            column: column.map(str::to_owned),
            message: message.into(),
        }
    }

    pub fn with_file(mut self, file: impl Into<String>) -> Self {
        self.file = Some(file.into());
        self
    }
}

impl fmt::Display for FormatError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if let Some(file) = &self.file {
            write!(f, "{file}:")?;
        }
        write!(f, "line {}", self.line)?;
        if let Some(col) = &self.column {
            write!(f, ", column {col}")?;
        }
        write!(f, ": {}", self.message)
    }
}

type Parsed<T> = Result<T, FormatError>;

fn csv_error(err: &csv::Error) -> FormatError {
    let line = err.position().map_or(1, |p| p.line().max(1));
    let message = match err.kind() {
        csv::ErrorKind::Utf8 { .. } => "invalid UTF-8".to_owned(),
        csv::ErrorKind::UnequalLengths { expected_len, len, .. } => {
            format!("expected {expected_len} fields, found {len}")
        }
        _ => err.to_string(),
    };
    FormatError::new(line, None, message)
}

/// Reads a header row followed by records, yielding `(line, record)`.
fn read_table<R: Read>(reader: R, header: &[&str]) -> Parsed<Vec<(u64, csv::StringRecord)>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(false).from_reader(reader);
    let mut rows = rdr.records();
    let first = match rows.next() {
        None => {
            return Err(FormatError::new(
                1,
                None,
                format!("missing header; expected `{}`", header.join(",")),
            ))
        }
        Some(r) => r.map_err(|e| csv_error(&e))?,
    };
    if first.iter().ne(header.iter().copied()) {
        let line = first.position().map_or(1, |p| p.line());
        return Err(FormatError::new(
            line,
            None,
            format!(
                "bad header `{}`; expected `{}`",
                first.iter().collect::<Vec<_>>().join(","),
                header.join(",")
            ),
        ));
    }
    let mut out = Vec::new();
    for row in rows {
        let row = row.map_err(|e| csv_error(&e))?;
        let line = row.position().map_or(0, |p| p.line());
        out.push((line, row));
    }
    Ok(out)
}

fn field<'a>(row: &'a csv::StringRecord, i: usize, line: u64, header: &[&str]) -> Parsed<&'a str> {
    match row.get(i) {
        Some(v) if !v.is_empty() => Ok(v),
        _ => Err(FormatError::new(line, Some(header[i]), "empty field")),
    }
}

fn parse_pct(text: &str, line: u64, column: &str) -> Parsed<f64> {
    let (whole, frac) = text.split_once('.').unwrap_or((text, ""));
    let digits = |s: &str| s.bytes().all(|b| b.is_ascii_digit());
    let well_formed = !whole.is_empty()
        && digits(whole)
        && digits(frac)
        && frac.len() <= MAX_PCT_DECIMALS
        && (frac.is_empty() == !text.contains('.'));
    if !well_formed {
        return Err(FormatError::new(
            line,
            Some(column),
            format!("'{text}' is not a percentage (digits with at most {MAX_PCT_DECIMALS} decimals)"),
        ));
    }
    let value: f64 = text
        .parse()
        .map_err(|_| FormatError::new(line, Some(column), format!("'{text}' is not a number")))?;
    if value > 100.0 {
        return Err(FormatError::new(line, Some(column), format!("{text} exceeds 100")));
    }
    Ok(value)
}

struct AssessmentRow {
    line: u64,
    disease: usize,
    question: usize,
    response: String,
    interval: IntervalAssessment,
}

/// Parses and validates an assessment table.
pub fn parse_assessments<R: Read>(reader: R) -> Parsed<AssessmentTable> {
    let rows = read_table(reader, &ASSESSMENT_HEADER)?;

    let mut diseases: Vec<String> = Vec::new();
    let mut disease_ix: HashMap<String, usize> = HashMap::new();
    let mut questions: Vec<QuestionSchema> = Vec::new();
    let mut question_ix: HashMap<String, usize> = HashMap::new();
    let mut question_line: Vec<u64> = Vec::new();
    let mut seen: HashMap<(usize, usize, String), u64> = HashMap::new();
    let mut parsed = Vec::with_capacity(rows.len());

    for (line, row) in &rows {
        let line = *line;
        let disease = field(row, 0, line, &ASSESSMENT_HEADER)?;
        let question = field(row, 1, line, &ASSESSMENT_HEADER)?;
        let response = field(row, 2, line, &ASSESSMENT_HEADER)?;
        let lo = parse_pct(field(row, 3, line, &ASSESSMENT_HEADER)?, line, "lo_pct")?;
        let hi = parse_pct(field(row, 4, line, &ASSESSMENT_HEADER)?, line, "hi_pct")?;
        if lo > hi {
            return Err(FormatError::new(
                line,
                Some("hi_pct"),
                format!("lower bound {lo} exceeds upper bound {hi}"),
            ));
        }

        let d = *disease_ix.entry(disease.to_owned()).or_insert_with(|| {
            diseases.push(disease.to_owned());
            diseases.len() - 1
        });
        let q = *question_ix.entry(question.to_owned()).or_insert_with(|| {
            questions.push(QuestionSchema::new(question, Vec::<String>::new()));
            question_line.push(line);
            questions.len() - 1
        });
        if questions[q].response_index(response).is_none() {
            questions[q].responses.push(response.to_owned());
        }
        if let Some(first) = seen.insert((d, q, response.to_owned()), line) {
            return Err(FormatError::new(
                line,
                None,
                format!("duplicate row for ({disease}, {question}, {response}); first given on line {first}"),
            ));
        }
        parsed.push(AssessmentRow {
            line,
            disease: d,
            question: q,
            response: response.to_owned(),
            interval: IntervalAssessment { lo, hi },
        });
    }

    let schema = Schema::new(diseases, questions);
    let mut grid: Vec<Vec<Option<IntervalAssessment>>> = (0..schema.cell_count())
        .map(|slot| vec![None; schema.questions()[schema.coordinates(slot).1].arity()])
        .collect();
    let mut block_line: Vec<u64> = vec![0; schema.cell_count()];
    for row in &parsed {
        let slot = schema.slot(row.disease, row.question);
        let r = schema.questions()[row.question]
            .response_index(&row.response)
            .expect("response registered while reading");
        grid[slot][r] = Some(row.interval);
        if block_line[slot] == 0 {
            block_line[slot] = row.line;
        }
    }

    let eof_line = rows.last().map_or(1, |(l, _)| *l);
    let mut table = AssessmentTable::new(schema.clone());
    for (slot, cell) in grid.into_iter().enumerate() {
        if block_line[slot] == 0 {
            continue;
        }
        let (d, q) = schema.cell_label(slot);
        let question = &schema.questions()[schema.coordinates(slot).1];
        if cell.iter().any(Option::is_none) {
            let given = cell.iter().filter(|c| c.is_some()).count();
            return Err(FormatError::new(
                block_line[slot],
                Some("response"),
                format!(
                    "arity mismatch: ({d}, {q}) gives {given} of the {} responses used for this question",
                    question.arity()
                ),
            ));
        }
        let intervals = cell.into_iter().flatten().collect();
        table
            .set_cell(d, q, intervals)
            .map_err(|e| FormatError::new(block_line[slot], None, e.to_string()))?;
    }

    if let Some(v) = validate_table(&table).first() {
        let line = v
            .question
            .as_deref()
            .and_then(|q| schema.question_index(q))
            .filter(|_| v.disease.is_none())
            .map_or(eof_line, |q| question_line[q]);
        return Err(FormatError::new(line, None, v.to_string()));
    }
    Ok(table)
}

fn write_csv(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> String {
    let mut w = csv::WriterBuilder::new().from_writer(Vec::new());
    w.write_record(header).expect("write to memory");
    for row in rows {
        w.write_record(&row).expect("write to memory");
    }
    String::from_utf8(w.into_inner().expect("flush to memory")).expect("fields are UTF-8")
}

/// Serializes a table in the assessment CSV format.
pub fn write_assessments(table: &AssessmentTable) -> String {
    let schema = table.schema();
    let rows = table.iter_cells().flat_map(|(slot, cell)| {
        let (d, q) = schema.cell_label(slot);
        let question = &schema.questions()[schema.coordinates(slot).1];
        cell.iter().zip(&question.responses).map(move |(a, r)| {
            vec![
                d.to_owned(),
                q.to_owned(),
                r.clone(),
                a.lo.to_string(),
                a.hi.to_string(),
            ]
        })
    });
    write_csv(&ASSESSMENT_HEADER, rows)
}

/// Parses case records, grouped by case id in order of first appearance.
/// Labels are checked later, against a table.
pub fn parse_cases<R: Read>(reader: R) -> Parsed<Vec<CaseRecord>> {
    let rows = read_table(reader, &CASE_HEADER)?;
    let mut cases: Vec<CaseRecord> = Vec::new();
    let mut index: HashMap<String, (usize, u64)> = HashMap::new();
    let mut answered: HashMap<(usize, String), u64> = HashMap::new();

    for (line, row) in &rows {
        let line = *line;
        let id = field(row, 0, line, &CASE_HEADER)?;
        let disease = field(row, 1, line, &CASE_HEADER)?;
        let question = field(row, 2, line, &CASE_HEADER)?;
        let response = field(row, 3, line, &CASE_HEADER)?;

        let (ci, first_line) = *index.entry(id.to_owned()).or_insert_with(|| {
            cases.push(CaseRecord::new(id, disease));
            (cases.len() - 1, line)
        });
        let case = &mut cases[ci];
        if case.disease != disease {
            return Err(FormatError::new(
                line,
                Some("disease"),
                format!(
                    "case {id} has disease '{disease}' but line {first_line} gave '{}'",
                    case.disease
                ),
            ));
        }
        match case.answers.get(question) {
            Some(prev) if prev != response => {
                let prev_line = answered[&(ci, question.to_owned())];
                return Err(FormatError::new(
                    line,
                    Some("response"),
                    format!("case {id} answers '{question}' with '{response}' here and '{prev}' on line {prev_line}"),
                ));
            }
            Some(_) => {}
            None => {
                case.answers.insert(question.to_owned(), response.to_owned());
                answered.insert((ci, question.to_owned()), line);
            }
        }
    }
    Ok(cases)
}

/// Serializes cases in the long CSV format.
pub fn write_cases(cases: &[CaseRecord]) -> String {
    let rows = cases.iter().flat_map(|c| {
        c.answers
            .iter()
            .map(move |(q, r)| vec![c.id.clone(), c.disease.clone(), q.clone(), r.clone()])
    });
    write_csv(&CASE_HEADER, rows)
}

#[derive(Debug, Serialize, Deserialize)]
struct StateFile {
    format: String,
    version: u32,
    policy: ElicitationPolicy,
    cells: Vec<StateCell>,
}

#[derive(Debug, Serialize, Deserialize)]
struct StateCell {
    disease: String,
    question: String,
    responses: Vec<String>,
    implicit_n: f64,
    /// Absent for degenerate cells, whose unrounded size is infinite.
    implicit_n_unrounded: Option<f64>,
    degenerate: bool,
    prior_counts: Vec<f64>,
    observed_counts: Vec<f64>,
    total: f64,
}

/// Deterministic JSON for a cell set, in grid order.
pub fn write_state(state: &CellSet) -> String {
    let schema = state.schema();
    let cells = state
        .cells()
        .iter()
        .enumerate()
        .map(|(slot, c)| {
            let (d, q) = schema.cell_label(slot);
            StateCell {
                disease: d.to_owned(),
                question: q.to_owned(),
                responses: c.cell.responses.clone(),
                implicit_n: c.sample.n,
                implicit_n_unrounded: c.sample.n_unrounded.is_finite().then_some(c.sample.n_unrounded),
                degenerate: c.cell.degenerate,
                prior_counts: c.cell.prior.clone(),
                observed_counts: c.cell.observed.clone(),
                total: c.cell.total(),
            }
        })
        .collect();
    let file = StateFile {
        format: STATE_FORMAT.to_owned(),
        version: STATE_VERSION,
        policy: *state.policy(),
        cells,
    };
    let mut out = serde_json::to_string_pretty(&file).expect("state serializes");
    out.push('\n');
    out
}

/// Line on which the `index`-th cell object starts, for error reporting.
fn cell_line(text: &str, index: usize) -> u64 {
    text.match_indices("\"disease\"")
        .nth(index)
        .map_or(1, |(pos, _)| text[..pos].lines().count() as u64)
        .max(1)
}

pub fn read_state<R: Read>(mut reader: R) -> Parsed<CellSet> {
    let mut bytes = Vec::new();
    reader
        .read_to_end(&mut bytes)
        .map_err(|e| FormatError::new(1, None, format!("read failed: {e}")))?;
    let text = std::str::from_utf8(&bytes).map_err(|e| {
        let line = bytes[..e.valid_up_to()].iter().filter(|&&b| b == b'\n').count() as u64 + 1;
        FormatError::new(line, None, "invalid UTF-8")
    })?;
    let file: StateFile =
        serde_json::from_str(text).map_err(|e| FormatError::new(e.line().max(1) as u64, None, e.to_string()))?;
    if file.format != STATE_FORMAT {
        return Err(FormatError::new(
            1,
            Some("format"),
            format!("not a state file (format '{}')", file.format),
        ));
    }
    if file.version != STATE_VERSION {
        return Err(FormatError::new(
            1,
            Some("version"),
            format!(
                "state version {} is not supported (expected {STATE_VERSION})",
                file.version
            ),
        ));
    }
    file.policy
        .validate()
        .map_err(|e| FormatError::new(1, Some("policy"), e.to_string()))?;

    let mut diseases: Vec<String> = Vec::new();
    let mut questions: Vec<QuestionSchema> = Vec::new();
    for (i, c) in file.cells.iter().enumerate() {
        if !diseases.contains(&c.disease) {
            diseases.push(c.disease.clone());
        }
        match questions.iter().find(|q| q.id == c.question) {
            None => questions.push(QuestionSchema::new(c.question.clone(), c.responses.clone())),
            Some(q) if q.responses != c.responses => {
                return Err(FormatError::new(
                    cell_line(text, i),
                    Some("responses"),
                    format!("responses for '{}' differ from an earlier cell", c.question),
                ));
            }
            Some(_) => {}
        }
    }
    let schema = Schema::new(diseases, questions);
    let mut slots: Vec<Option<ConvertedCell>> = vec![None; schema.cell_count()];
    let mut seen = HashSet::new();
    for (i, c) in file.cells.into_iter().enumerate() {
        let line = cell_line(text, i);
        let err = |col: &str, msg: String| FormatError::new(line, Some(col), msg);
        if !seen.insert((c.disease.clone(), c.question.clone())) {
            return Err(err(
                "question",
                format!("duplicate cell ({}, {})", c.disease, c.question),
            ));
        }
        if c.prior_counts.len() != c.responses.len() || c.observed_counts.len() != c.responses.len() {
            return Err(err("prior_counts", "count vectors must match the responses".into()));
        }
        if c.observed_counts.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(err("observed_counts", "counts must be finite and nonnegative".into()));
        }
        let mut cell = DirichletCell::new(c.responses, c.prior_counts, c.degenerate)
            .map_err(|e| err("prior_counts", e.to_string()))?;
        cell.observed = c.observed_counts;
        let total = cell.total();
        if !((total - c.total).abs() <= 1e-9 * c.total.abs().max(1.0)) {
            return Err(err(
                "total",
                format!("declared total {} but counts sum to {total}", c.total),
            ));
        }
        let sample = ImplicitSample {
            n: c.implicit_n,
            n_unrounded: c.implicit_n_unrounded.unwrap_or(f64::INFINITY),
            degenerate: c.degenerate,
        };
        let d = schema.disease_index(&c.disease).expect("collected above");
        let q = schema.question_index(&c.question).expect("collected above");
        slots[schema.slot(d, q)] = Some(ConvertedCell { cell, sample });
    }
    if let Some(missing) = slots.iter().position(Option::is_none) {
        let (d, q) = schema.cell_label(missing);
        return Err(FormatError::new(
            1,
            Some("cells"),
            format!("state has no cell for ({d}, {q})"),
        ));
    }
    CellSet::new(schema, file.policy, slots.into_iter().flatten().collect())
        .map_err(|e| FormatError::new(1, Some("cells"), e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::elicitation::convert_table;
    use crate::exec::Execution;
    use proptest::prelude::*;

    const ASSESSMENTS: &str = include_str!("../tests/data/cardiac_assessments.csv");
    const CASES: &str = include_str!("../tests/data/cardiac_cases.csv");

    fn assessments() -> AssessmentTable {
        parse_assessments(ASSESSMENTS.as_bytes()).unwrap()
    }

    #[test]
    fn parses_cardiac_grid() {
        let t = assessments();
        assert_eq!(t.schema().diseases().len(), 3);
        assert_eq!(t.schema().questions()[0].responses.len(), 5);
        let hlh = t.cell("Hypoplastic left heart", "Grunting?").unwrap();
        assert_eq!(hlh[0], IntervalAssessment { lo: 30.0, hi: 40.0 });
    }

    #[test]
    fn header_only_is_an_empty_valid_table() {
        let t = parse_assessments("disease,question,response,lo_pct,hi_pct\n".as_bytes()).unwrap();
        assert!(t.is_empty());
        assert!(parse_cases("case_id,disease,question,response\r\n".as_bytes())
            .unwrap()
            .is_empty());
    }

    #[test]
    fn missing_or_wrong_header() {
        let e = parse_assessments("".as_bytes()).unwrap_err();
        assert!(e.message.contains("missing header"));
        let e = parse_assessments("a,b,c,d,e\nx,y,z,1,2\n".as_bytes()).unwrap_err();
        assert_eq!(e.line, 1);
    }

    #[test]
    fn duplicate_row_names_triple_and_line() {
        let text = format!("{ASSESSMENTS}Hypoplastic left heart,Grunting?,Yes,30,40\n");
        let e = parse_assessments(text.as_bytes()).unwrap_err();
        assert_eq!(e.line, 23);
        assert!(e.message.contains("(Hypoplastic left heart, Grunting?, Yes)"), "{e}");
        assert!(e.message.contains("line 21"), "{e}");
    }

    #[test]
    fn rejects_bad_percentages() {
        let head = "disease,question,response,lo_pct,hi_pct\n";
        for (row, col) in [
            ("D,Q,Y,40,30\nD,Q,N,60,70\n", "hi_pct"),
            ("D,Q,Y,abc,30\nD,Q,N,60,70\n", "lo_pct"),
            ("D,Q,Y,1e1,30\nD,Q,N,60,70\n", "lo_pct"),
            ("D,Q,Y,-1,30\nD,Q,N,60,70\n", "lo_pct"),
            ("D,Q,Y,1.23456,30\nD,Q,N,60,70\n", "lo_pct"),
            ("D,Q,Y,1,101\nD,Q,N,60,70\n", "hi_pct"),
            ("D,Q,Y,1.,3\nD,Q,N,60,70\n", "lo_pct"),
        ] {
            let e = parse_assessments(format!("{head}{row}").as_bytes()).unwrap_err();
            assert_eq!(e.line, 2, "{row}");
            assert_eq!(e.column.as_deref(), Some(col), "{row}: {e}");
        }
        let ok = parse_assessments(format!("{head}D,Q,Y,2.5,7.1234\nD,Q,N,92.5,97\n").as_bytes()).unwrap();
        assert_eq!(ok.cell("D", "Q").unwrap()[1].lo, 92.5);
    }

    #[test]
    fn arity_mismatch_across_diseases() {
        let text = "disease,question,response,lo_pct,hi_pct\nA,Q,Y,1,2\nA,Q,N,3,4\nB,Q,Y,1,2\n";
        let e = parse_assessments(text.as_bytes()).unwrap_err();
        assert!(e.message.contains("arity mismatch"), "{e}");
        assert_eq!(e.line, 4);
    }

    #[test]
    fn missing_cell_and_single_response_question() {
        let text = "disease,question,response,lo_pct,hi_pct\nA,Q,Y,1,2\nA,Q,N,3,4\nB,R,Y,1,2\nB,R,N,1,2\n";
        let e = parse_assessments(text.as_bytes()).unwrap_err();
        assert!(e.message.contains("missing assessment"), "{e}");
        let text = "disease,question,response,lo_pct,hi_pct\nA,Q,Y,1,2\n";
        let e = parse_assessments(text.as_bytes()).unwrap_err();
        assert!(e.message.contains("expected 2 to 5"), "{e}");
        assert_eq!(e.line, 2);
    }

    #[test]
    fn quoted_fields_and_crlf() {
        let text = "disease,question,response,lo_pct,hi_pct\r\n\"Stenosis, aortic\",\"Main \"\"problem\"\"?\",Yes,10,20\r\n\"Stenosis, aortic\",\"Main \"\"problem\"\"?\",No,80,90\r\n";
        let t = parse_assessments(text.as_bytes()).unwrap();
        assert!(t.cell("Stenosis, aortic", "Main \"problem\"?").is_some());
        assert_eq!(parse_assessments(write_assessments(&t).as_bytes()).unwrap(), t);
    }

    #[test]
    fn ragged_row_is_a_format_error() {
        let e = parse_assessments("disease,question,response,lo_pct,hi_pct\nA,Q,Y,1\n".as_bytes()).unwrap_err();
        assert_eq!(e.line, 2);
    }

    #[test]
    fn cases_group_by_id() {
        let cases = parse_cases(CASES.as_bytes()).unwrap();
        assert_eq!(cases.len(), 21 + 4 + 20);
        assert_eq!(cases[0].id, "NUHD-01");
        let text = "case_id,disease,question,response\nC7,D,Q1,a\nC7,D,Q2,b\nC8,D,Q1,a\nC7,D,Q3,c\nC7,D,Q4,d\n";
        let cases = parse_cases(text.as_bytes()).unwrap();
        assert_eq!(cases.len(), 2);
        assert_eq!(cases[0].answers.len(), 4);
        assert_eq!(parse_cases(write_cases(&cases).as_bytes()).unwrap().len(), 2);
    }

    #[test]
    fn conflicting_answers_cite_both_lines() {
        let text = "case_id,disease,question,response\nC1,D,Q,a\nC2,D,Q,a\nC1,D,Q,b\n";
        let e = parse_cases(text.as_bytes()).unwrap_err();
        assert_eq!(e.line, 4);
        assert!(e.message.contains("line 2"), "{e}");
        let same = "case_id,disease,question,response\nC1,D,Q,a\nC1,D,Q,a\n";
        assert_eq!(parse_cases(same.as_bytes()).unwrap()[0].answers.len(), 1);
        let other = "case_id,disease,question,response\nC1,D,Q,a\nC1,E,R,a\n";
        assert_eq!(
            parse_cases(other.as_bytes()).unwrap_err().column.as_deref(),
            Some("disease")
        );
    }

    fn converted_state() -> CellSet {
        convert_table(&assessments(), &ElicitationPolicy::default(), Execution::Sequential).unwrap()
    }

    #[test]
    fn state_round_trips() {
        let state = converted_state();
        let text = write_state(&state);
        let back = read_state(text.as_bytes()).unwrap();
        assert_eq!(back, state);
        assert_eq!(write_state(&back), text);
        let main = back.cell_for("Aortic stenosis", "Main problem?").unwrap();
        assert_eq!(main.sample.n, 69.0);
        assert!(back
            .cell_for("Non-urgent heart disease", "Main problem?")
            .unwrap()
            .sample
            .n_unrounded
            .is_infinite());
    }

    #[test]
    fn empty_state_round_trips() {
        let empty = CellSet::new(Schema::default(), ElicitationPolicy::default(), vec![]).unwrap();
        let back = read_state(write_state(&empty).as_bytes()).unwrap();
        assert_eq!(back, empty);
    }

    #[test]
    fn tampered_state_is_rejected() {
        let text = write_state(&converted_state());
        let tampered = text.replacen("\"total\": 69.0", "\"total\": 70.0", 1);
        assert_ne!(tampered, text);
        let e = read_state(tampered.as_bytes()).unwrap_err();
        assert_eq!(e.column.as_deref(), Some("total"));
        assert!(e.line > 1);

        let e = read_state(text.replacen("\"version\": 1", "\"version\": 2", 1).as_bytes()).unwrap_err();
        assert!(e.message.contains("version 2"));
        let e = read_state("{ not json".as_bytes()).unwrap_err();
        assert_eq!(e.line, 1);
    }

    proptest! {
        #[test]
        fn parsers_never_panic(bytes in prop::collection::vec(any::<u8>(), 0..400)) {
            let _ = parse_assessments(bytes.as_slice());
            let _ = parse_cases(bytes.as_slice());
            let _ = read_state(bytes.as_slice());
            let mut with_header = b"disease,question,response,lo_pct,hi_pct\n".to_vec();
            with_header.extend(&bytes);
            if let Err(e) = parse_assessments(with_header.as_slice()) {
                prop_assert!(e.line >= 1);
            }
            let mut with_header = b"case_id,disease,question,response\n".to_vec();
            with_header.extend(&bytes);
            if let Err(e) = parse_cases(with_header.as_slice()) {
                prop_assert!(e.line >= 1);
            }
        }

        #[test]
        fn valid_tables_round_trip(
            ranges in prop::collection::vec(prop::collection::vec((0u32..=1_000_000, 0u32..=1_000_000), 2..=5), 1..4),
            diseases in 1usize..4,
        ) {
            let questions: Vec<QuestionSchema> = ranges
                .iter()
                .enumerate()
                .map(|(i, r)| QuestionSchema::new(format!("Q{i},\"x\""), (0..r.len()).map(|j| format!("resp {j}"))))
                .collect();
            let names: Vec<String> = (0..diseases).map(|d| format!("D{d}")).collect();
            let mut table = AssessmentTable::new(Schema::new(names.clone(), questions.clone()));
            for d in &names {
                for (q, r) in questions.iter().zip(&ranges) {
                    let cell = r.iter().map(|&(a, b)| {
                        IntervalAssessment::new(a.min(b) as f64 / 1e4, a.max(b) as f64 / 1e4).unwrap()
                    }).collect();
                    table.set_cell(d, &q.id, cell).unwrap();
                }
            }
            prop_assert!(validate_table(&table).is_empty());
            let back = parse_assessments(write_assessments(&table).as_bytes()).unwrap();
            prop_assert_eq!(back, table);
        }
    }
}
