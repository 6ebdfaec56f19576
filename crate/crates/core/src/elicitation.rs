//! Converting interval judgements into point forecasts and implicit samples.
//!
//! An interval is read as a one-standard-error binomial interval around its
//! midpoint `m` with half-width `h`, giving an implicit sample size
//! `m(1 − m)/h²`. Across the responses of a question the smallest such size
//! is adopted, i.e. the least precise judgement governs. Counts are then that
//! size times the rescaled midpoints.

use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::adaptation::{CellSet, ConvertedCell};
use crate::error::{Error, Result};
use crate::exec::{self, Execution};
use crate::model::{validate_table, AssessmentTable, DirichletCell, IntervalAssessment, ProbabilityVector};
use crate::scoring::ForecastTable;

/// How the implicit sample size is rounded before counts are formed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SampleRounding {
    /// Nearest whole case. Reproduces the published totals 91, 69.0 and 36.0.
    #[default]
    Integer,
    /// Nearest tenth of a case.
    Decimal,
    /// No rounding.
    Exact,
}

impl SampleRounding {
    pub fn apply(self, n: f64) -> f64 {
        match self {
            SampleRounding::Integer => n.round(),
            SampleRounding::Decimal => (n * 10.0).round() / 10.0,
            SampleRounding::Exact => n,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            SampleRounding::Integer => "integer",
            SampleRounding::Decimal => "decimal",
            SampleRounding::Exact => "exact",
        }
    }
}

impl FromStr for SampleRounding {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "integer" => Ok(SampleRounding::Integer),
            "decimal" => Ok(SampleRounding::Decimal),
            "exact" | "none" => Ok(SampleRounding::Exact),
            other => Err(format!(
                "unknown rounding '{other}' (expected integer, decimal or exact)"
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ElicitationPolicy {
    /// `0-0%` becomes `0-w%` and `100-100%` becomes `(100−w)-100%`.
    pub zero_widen_pct: f64,
    /// Upper limit on the implicit sample size, also used for all-categorical cells.
    pub max_n: f64,
    pub rounding: SampleRounding,
    /// Intervals are read as one binomial standard error. The only supported reading.
    pub one_standard_error: bool,
}

impl Default for ElicitationPolicy {
    fn default() -> Self {
        Self {
            zero_widen_pct: 0.0,
            max_n: 1000.0,
            rounding: SampleRounding::Integer,
            one_standard_error: true,
        }
    }
}

impl ElicitationPolicy {
    /// The 0-4% treatment of zero judgements.
    pub const RECOMMENDED_ZERO_WIDEN_PCT: f64 = 4.0;

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=50.0).contains(&self.zero_widen_pct) {
            return Err(Error::InvalidPolicy(format!(
                "zero widening {} is outside [0, 50]",
                self.zero_widen_pct
            )));
        }
        if !(self.max_n.is_finite() && self.max_n > 0.0) {
            return Err(Error::InvalidPolicy(format!(
                "max n {} must be positive and finite",
                self.max_n
            )));
        }
        if !self.one_standard_error {
            return Err(Error::InvalidPolicy(
                "only the one-standard-error reading is supported".into(),
            ));
        }
        Ok(())
    }
}

/// Interval midpoints as probabilities, unnormalised.
pub fn midpoints(cell: &[IntervalAssessment]) -> Vec<f64> {
    cell.iter().map(IntervalAssessment::midpoint).collect()
}

/// Divides each midpoint by their sum.
pub fn rescale(midpoints: &[f64]) -> Result<ProbabilityVector> {
    let sum: f64 = midpoints.iter().sum();
    if !(sum > 0.0) {
        return Err(Error::AllZeroMidpoints {
            disease: None,
            question: None,
        });
    }
    let mut values: Vec<f64> = midpoints.iter().map(|m| m / sum).collect();
    // Clamp the last ulp so the vector always validates.
    for v in &mut values {
        *v = v.clamp(0.0, 1.0);
    }
    ProbabilityVector::new(values)
}

pub fn widen_zeros(cell: &[IntervalAssessment], policy: &ElicitationPolicy) -> Vec<IntervalAssessment> {
    let w = policy.zero_widen_pct;
    cell.iter()
        .map(|a| {
            if w <= 0.0 || !a.is_zero_width() {
                *a
            } else if a.lo == 0.0 {
                IntervalAssessment { lo: 0.0, hi: w }
            } else if a.hi == 100.0 {
                IntervalAssessment {
                    lo: 100.0 - w,
                    hi: 100.0,
                }
            } else {
                *a
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImplicitSample {
    /// Sample size used for counts, after rounding and capping.
    pub n: f64,
    pub n_unrounded: f64,
    pub degenerate: bool,
}

/// Smallest per-response `m(1−m)/h²` over responses with `h > 0` and
/// `0 < m < 1`, using unrescaled midpoints. Cells with no such response are
/// degenerate and get the policy cap.
pub fn implicit_sample_size(cell: &[IntervalAssessment], policy: &ElicitationPolicy) -> ImplicitSample {
    let smallest = cell
        .iter()
        .filter_map(|a| {
            let (m, h) = (a.midpoint(), a.half_range());
            (h > 0.0 && m > 0.0 && m < 1.0).then(|| m * (1.0 - m) / (h * h))
        })
        .min_by(f64::total_cmp);
    match smallest {
        Some(n) => ImplicitSample {
            n: policy.rounding.apply(n).min(policy.max_n),
            n_unrounded: n,
            degenerate: false,
        },
        None => ImplicitSample {
            n: policy.max_n,
            n_unrounded: f64::INFINITY,
            degenerate: true,
        },
    }
}

/// Point forecast for one cell: rescaled midpoints after zero widening.
pub fn point_forecast(cell: &[IntervalAssessment], policy: &ElicitationPolicy) -> Result<ProbabilityVector> {
    rescale(&midpoints(&widen_zeros(cell, policy)))
}

/// Implicit Dirichlet sample for one cell.
pub fn to_dirichlet(
    cell: &[IntervalAssessment],
    responses: &[String],
    policy: &ElicitationPolicy,
) -> Result<ConvertedCell> {
    let widened = widen_zeros(cell, policy);
    let p = rescale(&midpoints(&widened))?;
    let sample = implicit_sample_size(&widened, policy);
    let counts = p.values().iter().map(|pi| sample.n * pi).collect();
    Ok(ConvertedCell {
        cell: DirichletCell::new(responses.to_vec(), counts, sample.degenerate)?,
        sample,
    })
}

fn check_table(table: &AssessmentTable) -> Result<()> {
    let violations = validate_table(table);
    match violations.first() {
        None => Ok(()),
        Some(first) => Err(Error::InvalidTable(format!(
            "{first} ({} violation(s) in total)",
            violations.len()
        ))),
    }
}

fn locate(table: &AssessmentTable, slot: usize, err: Error) -> Error {
    match err {
        Error::AllZeroMidpoints { .. } => {
            let (d, q) = table.schema().cell_label(slot);
            Error::AllZeroMidpoints {
                disease: Some(d.to_owned()),
                question: Some(q.to_owned()),
            }
        }
        other => other,
    }
}

/// Point forecasts for every cell of a validated table.
pub fn point_forecasts(table: &AssessmentTable, policy: &ElicitationPolicy, exec: Execution) -> Result<ForecastTable> {
    policy.validate()?;
    check_table(table)?;
    let schema = table.schema();
    let forecasts = exec::map_range(exec, schema.cell_count(), |slot| {
        let cell = table.cell_at(slot).unwrap_or_default();
        point_forecast(cell, policy).map_err(|e| locate(table, slot, e))
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    ForecastTable::new(schema.clone(), forecasts)
}

/// Implicit samples for every cell of a validated table.
pub fn convert_table(table: &AssessmentTable, policy: &ElicitationPolicy, exec: Execution) -> Result<CellSet> {
    policy.validate()?;
    check_table(table)?;
    let schema = table.schema();
    let cells = exec::map_range(exec, schema.cell_count(), |slot| {
        let (_, q) = schema.coordinates(slot);
        let cell = table.cell_at(slot).unwrap_or_default();
        to_dirichlet(cell, &schema.questions()[q].responses, policy).map_err(|e| locate(table, slot, e))
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    CellSet::new(schema.clone(), *policy, cells)
}
