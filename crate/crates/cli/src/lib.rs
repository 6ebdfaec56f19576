//! Command implementations behind the `subjprob` binary.
//!
//! Exit codes: 0 success, 1 I/O or format error, 2 case validation failure
//! under `--strict`, 64 usage error.

pub mod args;
mod report;

use std::fs;
use std::io::{self, Write};
use std::path::Path;

use anyhow::Context;
use subjprob_core::{
    aggregate, batch_adapt, convert_table, decomposition_report, flag_unreliable, forecast_outcomes_all,
    parse_assessments, parse_cases, point_forecasts, prequential_replay, read_state, reliability_bins, response_pairs,
    score_cases, write_state, AssessmentTable, BinScheme, CaseMode, CaseRecord, CellSet, ElicitationPolicy, Error,
    Execution, ForecastTable, GroupKey, ScoringRule,
};

use crate::args::{Command, Options};

pub const EXIT_OK: u8 = 0;
pub const EXIT_FAILURE: u8 = 1;
pub const EXIT_VALIDATION: u8 = 2;
pub const EXIT_USAGE: u8 = 64;

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Validation(String),
    Failure(anyhow::Error),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Validation(_) => EXIT_VALIDATION,
            CliError::Failure(_) => EXIT_FAILURE,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Validation(m) => write!(f, "validation failed: {m}"),
            CliError::Failure(e) => write!(f, "error: {e:#}"),
        }
    }
}

impl From<anyhow::Error> for CliError {
    fn from(e: anyhow::Error) -> Self {
        CliError::Failure(e)
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidCases { .. } => CliError::Validation(e.to_string()),
            other => CliError::Failure(other.into()),
        }
    }
}

type CliResult<T> = Result<T, CliError>;

struct Run<'a> {
    opts: &'a Options,
    policy: ElicitationPolicy,
    exec: Execution,
    mode: CaseMode,
}

/// Runs one subcommand; diagnostics go to `diag`.
pub fn run(command: Command, opts: &Options, diag: &mut dyn Write) -> CliResult<()> {
    let run = Run::new(opts)?;
    match command {
        Command::Score => run.score(diag),
        Command::Decompose => run.decompose(diag),
        Command::Bins => run.bins(diag),
        Command::Convert => run.convert(diag),
        Command::Adapt => run.adapt(diag),
        Command::Prequential => run.prequential(diag),
    }
}

fn read_file(path: &Path) -> anyhow::Result<Vec<u8>> {
    fs::read(path).with_context(|| format!("cannot read {}", path.display()))
}

fn load_assessments(path: &Path) -> anyhow::Result<AssessmentTable> {
    let bytes = read_file(path)?;
    parse_assessments(bytes.as_slice()).map_err(|e| e.with_file(path.display().to_string()).into())
}

fn load_cases(path: &Path) -> anyhow::Result<Vec<CaseRecord>> {
    let bytes = read_file(path)?;
    parse_cases(bytes.as_slice()).map_err(|e| e.with_file(path.display().to_string()).into())
}

fn load_state(path: &Path) -> anyhow::Result<CellSet> {
    let bytes = read_file(path)?;
    read_state(bytes.as_slice()).map_err(|e| e.with_file(path.display().to_string()).into())
}

fn emit(path: Option<&Path>, text: &str) -> anyhow::Result<()> {
    match path {
        Some(p) => fs::write(p, text).with_context(|| format!("cannot write {}", p.display())),
        None => {
            let mut out = io::stdout().lock();
            out.write_all(text.as_bytes())?;
            out.flush()?;
            Ok(())
        }
    }
}

impl<'a> Run<'a> {
    fn new(opts: &'a Options) -> CliResult<Self> {
        let policy = ElicitationPolicy {
            zero_widen_pct: opts.zero_widen_pct,
            max_n: opts.max_n,
            rounding: opts.n_rounding,
            ..Default::default()
        };
        policy.validate().map_err(|e| CliError::Usage(e.to_string()))?;
        if let Some(eps) = opts.log_floor {
            if !(eps >= 0.0 && eps.is_finite()) {
                return Err(CliError::Usage(format!(
                    "--log-floor must be a nonnegative number, got {eps}"
                )));
            }
        }
        if opts.flag_min_cases < 1 {
            return Err(CliError::Usage("--flag-min-cases must be at least 1".into()));
        }
        if !(opts.flag_threshold >= 0.0 && opts.flag_threshold.is_finite()) {
            return Err(CliError::Usage(format!(
                "--flag-threshold must be nonnegative, got {}",
                opts.flag_threshold
            )));
        }
        if opts.rule.is_empty() {
            return Err(CliError::Usage("--rule needs at least one rule".into()));
        }
        Ok(Self {
            opts,
            policy,
            exec: if opts.sequential {
                Execution::Sequential
            } else {
                Execution::Parallel
            },
            mode: if opts.strict {
                CaseMode::Strict
            } else {
                CaseMode::Lenient
            },
        })
    }

    fn single_rule(&self) -> CliResult<ScoringRule> {
        match self.opts.rule.as_slice() {
            [rule] => Ok(*rule),
            _ => Err(CliError::Usage("this command takes exactly one --rule".into())),
        }
    }

    fn require<'p>(&self, path: &'p Option<std::path::PathBuf>, flag: &str) -> CliResult<&'p Path> {
        path.as_deref()
            .ok_or_else(|| CliError::Usage(format!("--{flag} is required for this command")))
    }

    /// Prior cells from `--state`, or converted from `--assessments`.
    fn prior_state(&self) -> CliResult<CellSet> {
        if let Some(path) = &self.opts.state {
            return Ok(load_state(path)?);
        }
        let path = self.require(&self.opts.assessments, "assessments or --state")?;
        let table = load_assessments(path)?;
        Ok(convert_table(&table, &self.policy, self.exec)?)
    }

    /// Posterior means from `--state`, or rescaled midpoints from `--assessments`.
    fn forecasts(&self) -> CliResult<ForecastTable> {
        if let Some(path) = &self.opts.state {
            return Ok(load_state(path)?.posterior_forecasts()?);
        }
        let path = self.require(&self.opts.assessments, "assessments or --state")?;
        let table = load_assessments(path)?;
        Ok(point_forecasts(&table, &self.policy, self.exec)?)
    }

    /// Cases that validate against the schema. Strict mode fails on the first
    /// bad case; lenient mode reports and drops them.
    fn cases(&self, forecasts: &ForecastTable, diag: &mut dyn Write) -> CliResult<Vec<CaseRecord>> {
        let path = self.require(&self.opts.cases, "cases")?;
        let cases = load_cases(path)?;
        let (valid, rejected) = subjprob_core::model::partition_cases(forecasts.schema(), &cases);
        if let Some((id, err)) = rejected.first() {
            if self.mode == CaseMode::Strict {
                return Err(Error::InvalidCases {
                    count: rejected.len(),
                    first: format!("case {id}: {err}"),
                }
                .into());
            }
        }
        report_rejected(&rejected, diag);
        Ok(valid.into_iter().cloned().collect())
    }

    fn score(&self, diag: &mut dyn Write) -> CliResult<()> {
        let rule = self.single_rule()?;
        let key = self.opts.group_by.unwrap_or(GroupKey::Overall);
        let forecasts = self.forecasts()?;
        let cases = self.cases(&forecasts, diag)?;
        let records = score_cases(&forecasts, &cases, rule, self.opts.log_floor, self.exec)?;
        let mut groups = aggregate(&records, key)?;
        if key != GroupKey::Overall {
            groups.extend(aggregate(&records, GroupKey::Overall)?);
        }
        for g in &groups {
            for (case, question) in &g.infinite_at {
                let _ = writeln!(diag, "infinite {rule} score at ({case}, {question})");
            }
        }
        let text = report::score_report(rule, key, &records, &groups)?;
        emit(self.opts.out.as_deref(), &text)?;
        Ok(())
    }

    fn decompose(&self, diag: &mut dyn Write) -> CliResult<()> {
        let key = self.opts.group_by.unwrap_or(GroupKey::Disease);
        let forecasts = self.forecasts()?;
        let cases = self.cases(&forecasts, diag)?;
        let outcomes = forecast_outcomes_all(&forecasts, &cases, self.exec)?;
        let rows = decomposition_report(&outcomes, key, self.exec)?;
        emit(self.opts.out.as_deref(), &report::decomposition_report(key, &rows)?)?;
        Ok(())
    }

    fn bins(&self, diag: &mut dyn Write) -> CliResult<()> {
        let scheme: BinScheme = self
            .opts
            .bins
            .parse()
            .map_err(|e: Error| CliError::Usage(e.to_string()))?;
        let forecasts = self.forecasts()?;
        let cases = self.cases(&forecasts, diag)?;
        let outcomes = forecast_outcomes_all(&forecasts, &cases, self.exec)?;
        let table = reliability_bins(&response_pairs(&outcomes), &scheme, self.exec)?;
        emit(self.opts.out.as_deref(), &report::bins_report(&self.opts.bins, &table)?)?;
        Ok(())
    }

    fn convert(&self, diag: &mut dyn Write) -> CliResult<()> {
        let path = self.require(&self.opts.assessments, "assessments")?;
        let table = load_assessments(path)?;
        let state = convert_table(&table, &self.policy, self.exec)?;
        report_degenerate(&state, diag);
        emit(self.opts.out.as_deref(), &write_state(&state))?;
        Ok(())
    }

    fn adapt(&self, diag: &mut dyn Write) -> CliResult<()> {
        let prior = self.prior_state()?;
        let path = self.require(&self.opts.cases, "cases")?;
        let cases = load_cases(path)?;
        let (state, summary) = batch_adapt(&prior, &cases, self.mode, self.exec)?;
        report_rejected(&summary.rejected, diag);
        report_degenerate(&state, diag);
        let _ = writeln!(
            diag,
            "applied {} observation(s); skipped {} in degenerate cells",
            summary.applied, summary.skipped
        );
        emit(self.opts.out.as_deref(), &write_state(&state))?;
        Ok(())
    }

    fn prequential(&self, diag: &mut dyn Write) -> CliResult<()> {
        let prior = self.prior_state()?;
        let path = self.require(&self.opts.cases, "cases")?;
        let cases = load_cases(path)?;
        let (trace, state) = prequential_replay(
            &prior,
            &cases,
            &self.opts.rule,
            self.opts.log_floor,
            self.mode,
            self.exec,
        )?;
        report_rejected(&trace.rejected, diag);
        report_degenerate(&state, diag);
        let _ = writeln!(diag, "skipped {} update(s) in degenerate cells", trace.skipped_updates);
        for (rule, total) in trace.rules.iter().zip(&trace.cumulative) {
            let _ = writeln!(diag, "cumulative {rule} score: {}", report::fixed(*total));
        }
        let flags = flag_unreliable(&trace, self.opts.flag_min_cases, self.opts.flag_threshold);
        let _ = writeln!(
            diag,
            "{} cell(s) flagged (mean reliability statistic vs starting means, |R| > {} after >= {} cases)",
            flags.len(),
            self.opts.flag_threshold,
            self.opts.flag_min_cases
        );
        for f in &flags {
            let _ = writeln!(
                diag,
                "  flagged ({}, {}): {} cases, mean R {}, {}",
                f.disease,
                f.question,
                f.cases,
                report::fixed(f.mean_reliability),
                f.direction.name()
            );
        }
        emit(self.opts.out.as_deref(), &report::trace_report(&trace)?)?;
        if let Some(p) = &self.opts.state_out {
            emit(Some(p), &write_state(&state))?;
        }
        Ok(())
    }
}

fn report_rejected(rejected: &[(String, Error)], diag: &mut dyn Write) {
    for (id, err) in rejected {
        let _ = writeln!(diag, "skipping case {id}: {err}");
    }
}

fn report_degenerate(state: &CellSet, diag: &mut dyn Write) {
    let cells = state.degenerate_cells();
    if cells.is_empty() {
        return;
    }
    let _ = writeln!(
        diag,
        "{} degenerate cell(s) use n = {} and will not learn:",
        cells.len(),
        state.policy().max_n
    );
    for (d, q) in cells {
        let _ = writeln!(diag, "  ({d}, {q})");
    }
}
