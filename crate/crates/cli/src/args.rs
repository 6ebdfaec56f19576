use std::path::PathBuf;

use clap::{Parser, Subcommand};
use subjprob_core::{GroupKey, SampleRounding, ScoringRule};

#[derive(Debug, Parser)]
#[command(
    name = "subjprob",
    version,
    about = "Score, calibrate and adapt interval probability assessments"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,

    #[command(flatten)]
    pub opts: Options,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Score each answered question of each case, with group means.
    Score,
    /// Mean discrimination and reliability per disease or question.
    Decompose,
    /// Reliability-diagram table of stated probability against observed frequency.
    Bins,
    /// Convert interval assessments into implicit Dirichlet samples.
    Convert,
    /// Add case data to implicit samples in one batch.
    Adapt,
    /// Replay cases one at a time, scoring each against the current means.
    Prequential,
}

#[derive(Debug, Clone, clap::Args)]
pub struct Options {
    /// Assessment CSV (disease,question,response,lo_pct,hi_pct).
    #[arg(long, global = true, value_name = "PATH")]
    pub assessments: Option<PathBuf>,

    /// Case CSV (case_id,disease,question,response).
    #[arg(long, global = true, value_name = "PATH")]
    pub cases: Option<PathBuf>,

    /// Dirichlet state JSON; used instead of --assessments when given.
    #[arg(long, global = true, value_name = "PATH")]
    pub state: Option<PathBuf>,

    /// Scoring rule(s): brier, log or absdev. Prequential accepts a comma list.
    #[arg(
        long,
        global = true,
        value_name = "R",
        value_delimiter = ',',
        default_value = "brier"
    )]
    pub rule: Vec<ScoringRule>,

    /// Grouping for score and decompose: disease, question or overall.
    #[arg(long = "group-by", global = true, value_name = "G")]
    pub group_by: Option<GroupKey>,

    /// Treat 0-0% as 0-W% and 100-100% as (100-W)-100%.
    #[arg(long = "zero-widen-pct", global = true, value_name = "W", default_value_t = 0.0)]
    pub zero_widen_pct: f64,

    /// Largest implicit sample size; also used for all-categorical cells.
    #[arg(long = "max-n", global = true, value_name = "N", default_value_t = 1000.0)]
    pub max_n: f64,

    /// Rounding of implicit sample sizes: integer, decimal or exact.
    #[arg(long = "n-rounding", global = true, value_name = "MODE", default_value = "integer")]
    pub n_rounding: SampleRounding,

    /// Clamp probabilities to at least E before taking logs.
    #[arg(long = "log-floor", global = true, value_name = "E")]
    pub log_floor: Option<f64>,

    /// Bin scheme: default (twelve groups), uniform:N or edges:e0,...,en.
    #[arg(long, global = true, value_name = "SCHEME", default_value = "default")]
    pub bins: String,

    /// Abort with exit code 2 if any case fails validation.
    #[arg(long, global = true)]
    pub strict: bool,

    /// Minimum observations before a cell may be flagged.
    #[arg(long = "flag-min-cases", global = true, value_name = "M", default_value_t = 10)]
    pub flag_min_cases: usize,

    /// Flag cells whose mean reliability statistic exceeds T in magnitude.
    #[arg(long = "flag-threshold", global = true, value_name = "T", default_value_t = 0.1)]
    pub flag_threshold: f64,

    /// Output path; standard output when omitted.
    #[arg(long, global = true, value_name = "PATH")]
    pub out: Option<PathBuf>,

    /// Where prequential writes the final state.
    #[arg(long = "state-out", global = true, value_name = "PATH")]
    pub state_out: Option<PathBuf>,

    /// Disable multi-threaded evaluation.
    #[arg(long, global = true)]
    pub sequential: bool,
}
