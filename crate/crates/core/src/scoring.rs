//! Scoring rules for point forecasts over a question's responses.
//!
//! Brier and logarithmic scores are strictly proper. The absolute-deviation
//! score is not, and records it produces are tagged as improper in reports.
//! The logarithmic score uses the natural log.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::{self, Execution};
use crate::model::{CaseRecord, OutcomeVector, ProbabilityVector, Schema};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScoringRule {
    Brier,
    Log,
    AbsDev,
}

impl ScoringRule {
    pub const ALL: [ScoringRule; 3] = [ScoringRule::Brier, ScoringRule::Log, ScoringRule::AbsDev];

    pub fn name(self) -> &'static str {
        match self {
            ScoringRule::Brier => "brier",
            ScoringRule::Log => "log",
            ScoringRule::AbsDev => "absdev",
        }
    }

    pub fn is_proper(self) -> bool {
        !matches!(self, ScoringRule::AbsDev)
    }

    /// `floor` only affects the logarithmic rule.
    pub fn score(self, p: &ProbabilityVector, e: &OutcomeVector, floor: Option<f64>) -> Result<f64> {
        match self {
            ScoringRule::Brier => brier(p, e),
            ScoringRule::Log => log_score(p, e, floor),
            ScoringRule::AbsDev => abs_dev_score(p, e),
        }
    }
}

impl fmt::Display for ScoringRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ScoringRule {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "brier" => Ok(ScoringRule::Brier),
            "log" | "logarithmic" => Ok(ScoringRule::Log),
            "absdev" | "abs-dev" | "absolute" => Ok(ScoringRule::AbsDev),
            other => Err(format!(
                "unknown scoring rule '{other}' (expected brier, log or absdev)"
            )),
        }
    }
}

fn check_lengths(p: &ProbabilityVector, e: &OutcomeVector) -> Result<()> {
    if p.len() != e.len() {
        return Err(Error::LengthMismatch {
            forecast: p.len(),
            outcome: e.len(),
        });
    }
    Ok(())
}

/// Half the squared distance between forecast and outcome; lies in [0, 1].
pub fn brier(p: &ProbabilityVector, e: &OutcomeVector) -> Result<f64> {
    check_lengths(p, e)?;
    let sum: f64 = p
        .values()
        .iter()
        .enumerate()
        .map(|(i, &pi)| {
            let d = e.indicator(i) - pi;
            d * d
        })
        .sum();
    Ok(0.5 * sum)
}

/// `-ln(p_r)` for the observed response `r`.
///
/// Without a floor, a zero probability on the observed response yields
/// `f64::INFINITY`. With a floor `eps`, the probability is clamped to at
/// least `eps` first.
pub fn log_score(p: &ProbabilityVector, e: &OutcomeVector, floor: Option<f64>) -> Result<f64> {
    check_lengths(p, e)?;
    let mut pr = p.get(e.observed());
    if let Some(eps) = floor {
        if !(eps >= 0.0) {
            return Err(Error::NegativeFloor(eps));
        }
        pr = pr.max(eps);
    }
    if pr <= 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(-pr.ln())
}

/// Sum of absolute deviations; lies in [0, 2]. Not a proper rule.
pub fn abs_dev_score(p: &ProbabilityVector, e: &OutcomeVector) -> Result<f64> {
    check_lengths(p, e)?;
    Ok(p.values()
        .iter()
        .enumerate()
        .map(|(i, &pi)| (e.indicator(i) - pi).abs())
        .sum())
}

/// One point forecast per (disease, question) cell, aligned with the schema.
#[derive(Debug, Clone, PartialEq)]
pub struct ForecastTable {
    schema: Schema,
    forecasts: Vec<ProbabilityVector>,
}

impl ForecastTable {
    /// `forecasts` is indexed by [`Schema::slot`].
    pub fn new(schema: Schema, forecasts: Vec<ProbabilityVector>) -> Result<Self> {
        if forecasts.len() != schema.cell_count() {
            return Err(Error::InvalidTable(format!(
                "{} forecasts for {} cells",
                forecasts.len(),
                schema.cell_count()
            )));
        }
        for (slot, p) in forecasts.iter().enumerate() {
            let (_, q) = schema.coordinates(slot);
            let k = schema.questions()[q].arity();
            if p.len() != k {
                return Err(Error::LengthMismatch {
                    forecast: p.len(),
                    outcome: k,
                });
            }
        }
        Ok(Self { schema, forecasts })
    }

    pub fn schema(&self) -> &Schema {
        &self.schema
    }

    pub fn forecast(&self, slot: usize) -> &ProbabilityVector {
        &self.forecasts[slot]
    }

    pub fn forecast_for(&self, disease: &str, question: &str) -> Option<&ProbabilityVector> {
        let d = self.schema.disease_index(disease)?;
        let q = self.schema.question_index(question)?;
        Some(&self.forecasts[self.schema.slot(d, q)])
    }
}

/// A forecast paired with what happened, for one answered question of one case.
#[derive(Debug, Clone, PartialEq)]
pub struct ForecastOutcome {
    pub case_id: String,
    pub disease: String,
    pub question: String,
    pub response: String,
    pub forecast: ProbabilityVector,
    pub outcome: OutcomeVector,
}

/// Pairs each answered question of `case` with the forecast for its true disease.
pub fn forecast_outcomes(forecasts: &ForecastTable, case: &CaseRecord) -> Result<Vec<ForecastOutcome>> {
    let schema = forecasts.schema();
    case.validate(schema)?;
    case.observations(schema)?
        .into_iter()
        .map(|(slot, r)| {
            let (disease, question) = schema.cell_label(slot);
            let forecast = forecasts.forecast(slot).clone();
            Ok(ForecastOutcome {
                case_id: case.id.clone(),
                disease: disease.to_owned(),
                question: question.to_owned(),
                response: schema
                    .question(question)
                    .map(|q| q.responses[r].clone())
                    .unwrap_or_default(),
                outcome: OutcomeVector::new(forecast.len(), r)?,
                forecast,
            })
        })
        .collect()
}

/// [`forecast_outcomes`] over many cases, flattened in case order.
pub fn forecast_outcomes_all(
    forecasts: &ForecastTable,
    cases: &[CaseRecord],
    exec: Execution,
) -> Result<Vec<ForecastOutcome>> {
    let per_case = exec::try_map(exec, cases, |c| forecast_outcomes(forecasts, c))?;
    Ok(per_case.into_iter().flatten().collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoreRecord {
    pub case_id: String,
    pub disease: String,
    pub question: String,
    pub response: String,
    pub rule: ScoringRule,
    pub score: f64,
}

/// One record per answered question, in schema question order.
pub fn score_case(
    forecasts: &ForecastTable,
    case: &CaseRecord,
    rule: ScoringRule,
    floor: Option<f64>,
) -> Result<Vec<ScoreRecord>> {
    let schema = forecasts.schema();
    case.validate(schema)?;
    case.observations(schema)?
        .into_iter()
        .map(|(slot, r)| {
            let (disease, question) = schema.cell_label(slot);
            let forecast = forecasts.forecast(slot);
            let responses = &schema.questions()[schema.coordinates(slot).1].responses;
            Ok(ScoreRecord {
                case_id: case.id.clone(),
                disease: disease.to_owned(),
                question: question.to_owned(),
                response: responses[r].clone(),
                rule,
                score: rule.score(forecast, &OutcomeVector::new(forecast.len(), r)?, floor)?,
            })
        })
        .collect()
}

/// Scores every case; records come out in case order.
pub fn score_cases(
    forecasts: &ForecastTable,
    cases: &[CaseRecord],
    rule: ScoringRule,
    floor: Option<f64>,
    exec: Execution,
) -> Result<Vec<ScoreRecord>> {
    if let Some(eps) = floor {
        if !(eps >= 0.0) {
            return Err(Error::NegativeFloor(eps));
        }
    }
    let per_case = exec::try_map(exec, cases, |c| score_case(forecasts, c, rule, floor))?;
    Ok(per_case.into_iter().flatten().collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum GroupKey {
    Disease,
    Question,
    #[default]
    Overall,
}

impl GroupKey {
    pub fn name(self) -> &'static str {
        match self {
            GroupKey::Disease => "disease",
            GroupKey::Question => "question",
            GroupKey::Overall => "overall",
        }
    }

    pub fn label<'a>(self, disease: &'a str, question: &'a str) -> &'a str {
        match self {
            GroupKey::Disease => disease,
            GroupKey::Question => question,
            GroupKey::Overall => "overall",
        }
    }
}

impl FromStr for GroupKey {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "disease" => Ok(GroupKey::Disease),
            "question" => Ok(GroupKey::Question),
            "overall" => Ok(GroupKey::Overall),
            other => Err(format!(
                "unknown group key '{other}' (expected disease, question or overall)"
            )),
        }
    }
}

/// Mean score of one group. `infinite_at` lists `(case id, question)` pairs
/// whose score was infinite; when non-empty the mean is infinite too.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupSummary {
    pub group: String,
    pub count: usize,
    pub mean: f64,
    pub infinite_at: Vec<(String, String)>,
}

/// Arithmetic mean score per group, ordered by group label.
pub fn aggregate(records: &[ScoreRecord], key: GroupKey) -> Result<Vec<GroupSummary>> {
    if let Some(first) = records.first() {
        if let Some(other) = records.iter().find(|r| r.rule != first.rule) {
            return Err(Error::MixedRules {
                first: first.rule.name(),
                other: other.rule.name(),
            });
        }
    }
    // `mean` holds the running sum until the end.
    let mut groups: BTreeMap<&str, GroupSummary> = BTreeMap::new();
    for r in records {
        let label = key.label(&r.disease, &r.question);
        let entry = groups.entry(label).or_insert_with(|| GroupSummary {
            group: label.to_owned(),
            count: 0,
            mean: 0.0,
            infinite_at: Vec::new(),
        });
        entry.count += 1;
        entry.mean += r.score;
        if r.score.is_infinite() {
            entry.infinite_at.push((r.case_id.clone(), r.question.clone()));
        }
    }
    Ok(groups
        .into_values()
        .map(|mut g| {
            g.mean /= g.count as f64;
            g
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::elicitation::{point_forecasts, ElicitationPolicy};
    use crate::ingestion::parse_assessments;
    use proptest::prelude::*;

    fn pv(v: &[f64]) -> ProbabilityVector {
        ProbabilityVector::new(v.to_vec()).unwrap()
    }

    fn worked() -> (ProbabilityVector, OutcomeVector) {
        (pv(&[0.0, 0.954, 0.046, 0.0, 0.0]), OutcomeVector::new(5, 2).unwrap())
    }

    // Definitional expansion, independent of `brier`.
    fn brier_alternate(p: &ProbabilityVector, e: &OutcomeVector) -> f64 {
        0.5 * (1.0 - 2.0 * p.get(e.observed()) + p.sum_of_squares())
    }

    fn expected(q: &[f64], p: &ProbabilityVector, rule: ScoringRule) -> f64 {
        q.iter()
            .enumerate()
            .filter(|(_, &qj)| qj > 0.0)
            .map(|(j, &qj)| qj * rule.score(p, &OutcomeVector::new(q.len(), j).unwrap(), None).unwrap())
            .sum()
    }

    // All probability vectors of length k with entries on a grid of 1/steps.
    fn simplex_grid(k: usize, steps: usize) -> Vec<Vec<f64>> {
        fn rec(k: usize, left: usize, steps: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<f64>>) {
            if k == 1 {
                cur.push(left);
                out.push(cur.iter().map(|&c| c as f64 / steps as f64).collect());
                cur.pop();
                return;
            }
            for c in 0..=left {
                cur.push(c);
                rec(k - 1, left - c, steps, cur, out);
                cur.pop();
            }
        }
        let mut out = Vec::new();
        rec(k, steps, steps, &mut Vec::new(), &mut out);
        out
    }

    #[test]
    fn brier_worked_example() {
        let (p, e) = worked();
        assert!((brier(&p, &e).unwrap() - 0.9101).abs() < 1e-4);
        assert!((brier(&p, &e).unwrap() - 0.954 * 0.954).abs() < 1e-12);
    }

    #[test]
    fn brier_trivial_cases() {
        let e = OutcomeVector::new(3, 1).unwrap();
        assert_eq!(brier(&ProbabilityVector::point_mass(3, 1).unwrap(), &e).unwrap(), 0.0);
        for j in 0..2 {
            let e = OutcomeVector::new(2, j).unwrap();
            assert!((brier(&pv(&[0.5, 0.5]), &e).unwrap() - 0.25).abs() < 1e-15);
        }
        assert!(matches!(
            brier(&pv(&[0.5, 0.5]), &OutcomeVector::new(3, 0).unwrap()),
            Err(Error::LengthMismatch { .. })
        ));
    }

    #[test]
    fn log_score_cases() {
        let (p, e) = worked();
        assert!((log_score(&p, &e, None).unwrap() - 3.0791).abs() < 1e-4);
        let certain = ProbabilityVector::point_mass(2, 0).unwrap();
        assert_eq!(
            log_score(&certain, &OutcomeVector::new(2, 0).unwrap(), None).unwrap(),
            0.0
        );
        let missed = OutcomeVector::new(2, 1).unwrap();
        assert_eq!(log_score(&certain, &missed, None).unwrap(), f64::INFINITY);
        let floored = log_score(&certain, &missed, Some(1e-3)).unwrap();
        assert!((floored - 1e3f64.ln()).abs() < 1e-12);
        assert!(matches!(
            log_score(&certain, &missed, Some(-0.1)),
            Err(Error::NegativeFloor(_))
        ));
    }

    #[test]
    fn abs_dev_cases() {
        let (p, e) = worked();
        assert!((abs_dev_score(&p, &e).unwrap() - 1.908).abs() < 1e-12);
        assert_eq!(
            abs_dev_score(
                &ProbabilityVector::point_mass(4, 3).unwrap(),
                &OutcomeVector::new(4, 3).unwrap()
            )
            .unwrap(),
            0.0
        );
        for j in 0..2 {
            let e = OutcomeVector::new(2, j).unwrap();
            assert!((abs_dev_score(&pv(&[0.5, 0.5]), &e).unwrap() - 1.0).abs() < 1e-15);
        }
        assert!(!ScoringRule::AbsDev.is_proper());
    }

    #[test]
    fn brier_and_log_are_strictly_proper_on_grid() {
        for k in 2..=4 {
            let grid = simplex_grid(k, 20);
            for rule in [ScoringRule::Brier, ScoringRule::Log] {
                for q in &grid {
                    let at_truth = expected(q, &pv(q), rule);
                    for p in &grid {
                        if p == q {
                            continue;
                        }
                        let other = expected(q, &pv(p), rule);
                        assert!(other > at_truth + 1e-12, "{rule} k={k} q={q:?} p={p:?}");
                    }
                }
            }
        }
    }

    #[test]
    fn abs_dev_rewards_exaggeration() {
        let q = [0.7, 0.3];
        let honest = expected(&q, &pv(&q), ScoringRule::AbsDev);
        let extreme = expected(&q, &pv(&[1.0, 0.0]), ScoringRule::AbsDev);
        assert!((honest - 0.84).abs() < 1e-12);
        assert!((extreme - 0.6).abs() < 1e-12);
        assert!(extreme < honest);
    }

    fn cardiac_forecasts() -> ForecastTable {
        let table = parse_assessments(include_str!("../tests/data/cardiac_assessments.csv").as_bytes()).unwrap();
        point_forecasts(&table, &ElicitationPolicy::default(), Execution::Sequential).unwrap()
    }

    #[test]
    fn score_case_on_aortic_stenosis() {
        let forecasts = cardiac_forecasts();
        let case = CaseRecord::new("AS-4", "Aortic stenosis")
            .with_answer("Main problem?", "Asymptomatic murmur")
            .with_answer("Grunting?", "No");
        let records = score_case(&forecasts, &case, ScoringRule::Brier, None).unwrap();
        assert_eq!(records.len(), 2);
        assert_eq!(records[0].question, "Main problem?");
        // Unrounded rescaled vector gives (0.925/0.97)^2; the 3-dp vector gives 0.9101.
        let hf = 0.925 / 0.97;
        assert!((records[0].score - hf * hf).abs() < 1e-12);
        assert!((records[0].score - 0.9101).abs() < 1e-3);
        assert!((records[1].score - 0.01).abs() < 1e-12);
    }

    #[test]
    fn score_case_edge_cases() {
        let forecasts = cardiac_forecasts();
        let empty = CaseRecord::new("E", "Aortic stenosis");
        assert!(score_case(&forecasts, &empty, ScoringRule::Brier, None)
            .unwrap()
            .is_empty());
        let bad = CaseRecord::new("B", "Aortic stenosis").with_answer("Grunting?", "Maybe");
        let err = score_case(&forecasts, &bad, ScoringRule::Brier, None).unwrap_err();
        assert!(err.to_string().contains("Maybe"));
        let unknown = CaseRecord::new("U", "Coarctation");
        assert!(matches!(
            score_case(&forecasts, &unknown, ScoringRule::Brier, None),
            Err(Error::UnknownDisease(_))
        ));
    }

    fn rec(disease: &str, question: &str, score: f64) -> ScoreRecord {
        ScoreRecord {
            case_id: "c".into(),
            disease: disease.into(),
            question: question.into(),
            response: "r".into(),
            rule: ScoringRule::Brier,
            score,
        }
    }

    #[test]
    fn aggregate_means() {
        let single = aggregate(&[rec("A", "Q", 0.3)], GroupKey::Overall).unwrap();
        assert_eq!(single[0].count, 1);
        assert_eq!(single[0].mean, 0.3);

        let two = aggregate(&[rec("A", "Q", 0.2), rec("A", "R", 0.4)], GroupKey::Disease).unwrap();
        assert_eq!(two.len(), 1);
        assert_eq!(two[0].count, 2);
        assert!((two[0].mean - 0.3).abs() < 1e-15);

        let mut mixed = vec![rec("A", "Q", 0.2)];
        mixed.push(ScoreRecord {
            rule: ScoringRule::Log,
            ..rec("A", "Q", 0.1)
        });
        assert!(matches!(
            aggregate(&mixed, GroupKey::Overall),
            Err(Error::MixedRules { .. })
        ));
        assert!(aggregate(&[], GroupKey::Overall).unwrap().is_empty());
    }

    #[test]
    fn aggregate_flags_infinite_scores() {
        let mut r = rec("A", "Q", f64::INFINITY);
        r.rule = ScoringRule::Log;
        r.case_id = "C9".into();
        let out = aggregate(&[r], GroupKey::Question).unwrap();
        assert_eq!(out[0].infinite_at, vec![("C9".to_owned(), "Q".to_owned())]);
        assert!(out[0].mean.is_infinite());
    }

    #[test]
    fn overall_mean_is_count_weighted_group_mean() {
        let diseases = ["A", "B", "C"];
        let records: Vec<ScoreRecord> = (0..40)
            .map(|i| rec(diseases[i % 3], "Q", ((i * 37) % 101) as f64 / 101.0))
            .collect();
        let overall = aggregate(&records, GroupKey::Overall).unwrap();
        let by_disease = aggregate(&records, GroupKey::Disease).unwrap();
        let brute: f64 = records.iter().map(|r| r.score).sum::<f64>() / records.len() as f64;
        let weighted: f64 = by_disease.iter().map(|g| g.mean * g.count as f64).sum::<f64>()
            / by_disease.iter().map(|g| g.count).sum::<usize>() as f64;
        assert!((overall[0].mean - brute).abs() < 1e-12);
        assert!((overall[0].mean - weighted).abs() < 1e-12);
    }

    #[test]
    fn rule_names_parse() {
        for rule in ScoringRule::ALL {
            assert_eq!(rule.name().parse::<ScoringRule>().unwrap(), rule);
        }
        assert!("spherical".parse::<ScoringRule>().is_err());
    }

    fn arb_case() -> impl Strategy<Value = (ProbabilityVector, OutcomeVector)> {
        (2usize..=5)
            .prop_flat_map(|k| (prop::collection::vec(0.0f64..1.0, k), 0..k))
            .prop_filter_map("nonzero mass", |(raw, j)| {
                let s: f64 = raw.iter().sum();
                if s <= 1e-9 {
                    return None;
                }
                let k = raw.len();
                let p = ProbabilityVector::new(raw.into_iter().map(|v| v / s).collect()).ok()?;
                Some((p, OutcomeVector::new(k, j).unwrap()))
            })
    }

    proptest! {
        #[test]
        fn brier_matches_expanded_form((p, e) in arb_case()) {
            let b = brier(&p, &e).unwrap();
            prop_assert!((b - brier_alternate(&p, &e)).abs() < 1e-12);
            prop_assert!((0.0..=1.0).contains(&b));
        }

        #[test]
        fn score_ranges((p, e) in arb_case()) {
            let l = log_score(&p, &e, None).unwrap();
            prop_assert!(l >= 0.0);
            let a = abs_dev_score(&p, &e).unwrap();
            prop_assert!((0.0..=2.0 + 1e-12).contains(&a));
        }
    }
}
