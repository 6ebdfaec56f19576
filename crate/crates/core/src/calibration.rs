//! Discrimination/reliability decomposition of the Brier score and
//! reliability-diagram binning.
//!
//! For a forecast `p` and observed response `r`,
//! `brier = discrimination + reliability` where
//! `discrimination = ½(1 − Σp²)` is the score expected if the forecast were
//! perfectly reliable and `reliability = Σp² − p_r` is the excess. A positive
//! mean reliability statistic indicates over-confident forecasts; a negative
//! one indicates diffident forecasts.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::exec::{self, Execution};
use crate::model::{OutcomeVector, ProbabilityVector};
use crate::scoring::{brier, ForecastOutcome, GroupKey};

/// Probabilities within this distance of a bin edge are treated as lying on it.
pub const EDGE_TOLERANCE: f64 = 1e-9;

const CHUNK: usize = 4096;

/// `½(1 − Σp²)`: lack of discrimination.
pub fn expected_brier_under_reliability(p: &ProbabilityVector) -> f64 {
    0.5 * (1.0 - p.sum_of_squares())
}

/// `Σp² − p_r`: lack of reliability, signed.
pub fn reliability_stat(p: &ProbabilityVector, e: &OutcomeVector) -> Result<f64> {
    if p.len() != e.len() {
        return Err(Error::LengthMismatch {
            forecast: p.len(),
            outcome: e.len(),
        });
    }
    Ok(p.sum_of_squares() - p.get(e.observed()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecompositionRecord {
    pub group: String,
    pub count: usize,
    pub mean_discrimination: f64,
    pub mean_reliability: f64,
    pub mean_brier: f64,
}

/// Mean discrimination and reliability per disease or per question, ordered
/// by group label. Means are weighted by the number of scored questions.
pub fn decomposition_report(
    outcomes: &[ForecastOutcome],
    key: GroupKey,
    exec: Execution,
) -> Result<Vec<DecompositionRecord>> {
    if outcomes.is_empty() {
        return Err(Error::EmptyInput);
    }
    let terms = exec::try_map(exec, outcomes, |fo| -> Result<(f64, f64, f64)> {
        let d = expected_brier_under_reliability(&fo.forecast);
        let r = reliability_stat(&fo.forecast, &fo.outcome)?;
        let b = brier(&fo.forecast, &fo.outcome)?;
        Ok((d, r, b))
    })?;

    let mut groups: BTreeMap<&str, (usize, f64, f64, f64)> = BTreeMap::new();
    for (fo, (d, r, b)) in outcomes.iter().zip(terms) {
        let g = groups.entry(key.label(&fo.disease, &fo.question)).or_default();
        g.0 += 1;
        g.1 += d;
        g.2 += r;
        g.3 += b;
    }
    Ok(groups
        .into_iter()
        .map(|(group, (n, d, r, b))| {
            let n_f = n as f64;
            DecompositionRecord {
                group: group.to_owned(),
                count: n,
                mean_discrimination: d / n_f,
                mean_reliability: r / n_f,
                mean_brier: b / n_f,
            }
        })
        .collect())
}

/// One bin of a reliability diagram with its closedness at each end.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bin {
    pub lower: f64,
    pub upper: f64,
    pub lower_closed: bool,
    pub upper_closed: bool,
}

impl Bin {
    pub fn singleton(at: f64) -> Self {
        Self {
            lower: at,
            upper: at,
            lower_closed: true,
            upper_closed: true,
        }
    }

    fn contains(&self, p: f64) -> bool {
        let above = if self.lower_closed {
            p >= self.lower
        } else {
            p > self.lower
        };
        let below = if self.upper_closed {
            p <= self.upper
        } else {
            p < self.upper
        };
        above && below
    }

    /// Label in percent, e.g. `0%`, `1-10%`, `90-99%`, `100%`.
    pub fn label(&self) -> String {
        if self.lower == self.upper {
            return format!("{}%", pct(self.lower));
        }
        let lo = if self.lower_closed {
            pct(self.lower)
        } else {
            pct(self.lower) + 1.0
        };
        let hi = if self.upper_closed {
            pct(self.upper)
        } else {
            pct(self.upper) - 1.0
        };
        let whole = |v: f64| (v - v.round()).abs() < 1e-9;
        if whole(self.lower * 100.0) && whole(self.upper * 100.0) && lo <= hi {
            format!("{lo}-{hi}%")
        } else {
            let open = if self.lower_closed { '[' } else { '(' };
            let close = if self.upper_closed { ']' } else { ')' };
            format!("{open}{},{}{close}", self.lower, self.upper)
        }
    }
}

fn pct(p: f64) -> f64 {
    (p * 100.0).round()
}

/// A partition of [0, 1] into bins.
#[derive(Debug, Clone, PartialEq)]
pub struct BinScheme {
    bins: Vec<Bin>,
}

impl BinScheme {
    /// Twelve groups: `{0}`, `(0,.1]`, `(.1,.2]`, …, `(.8,.9]`, `(.9,1)`, `{1}`.
    pub fn twelve_groups() -> Self {
        let mut bins = vec![Bin::singleton(0.0)];
        for i in 0..9 {
            bins.push(Bin {
                lower: i as f64 / 10.0,
                upper: (i + 1) as f64 / 10.0,
                lower_closed: false,
                upper_closed: true,
            });
        }
        bins.push(Bin {
            lower: 0.9,
            upper: 1.0,
            lower_closed: false,
            upper_closed: false,
        });
        bins.push(Bin::singleton(1.0));
        Self { bins }
    }

    /// Bins `[e0,e1], (e1,e2], …, (e_{n-1},e_n]` from strictly increasing
    /// edges that start at 0 and end at 1.
    pub fn from_edges(edges: &[f64]) -> Result<Self> {
        if edges.len() < 2 {
            return Err(Error::InvalidBinScheme("need at least two edges".into()));
        }
        if edges[0] != 0.0 || edges[edges.len() - 1] != 1.0 {
            return Err(Error::InvalidBinScheme("edges must start at 0 and end at 1".into()));
        }
        if let Some(w) = edges.windows(2).find(|w| !(w[0] < w[1])) {
            return Err(Error::InvalidBinScheme(format!(
                "edges must be strictly increasing; {} is followed by {}",
                w[0], w[1]
            )));
        }
        let bins = edges
            .windows(2)
            .enumerate()
            .map(|(i, w)| Bin {
                lower: w[0],
                upper: w[1],
                lower_closed: i == 0,
                upper_closed: true,
            })
            .collect();
        Self::from_bins(bins)
    }

    /// Checks that the bins are ordered and cover [0, 1] with no gap or overlap.
    pub fn from_bins(bins: Vec<Bin>) -> Result<Self> {
        let fail = |m: String| Err(Error::InvalidBinScheme(m));
        let Some(first) = bins.first() else {
            return fail("no bins".into());
        };
        if first.lower != 0.0 || !first.lower_closed {
            return fail("first bin must include 0".into());
        }
        let last = bins[bins.len() - 1];
        if last.upper != 1.0 || !last.upper_closed {
            return fail("last bin must include 1".into());
        }
        for b in &bins {
            if b.lower > b.upper || (b.lower == b.upper && !(b.lower_closed && b.upper_closed)) {
                return fail(format!("bin {} is empty or reversed", b.label()));
            }
        }
        for w in bins.windows(2) {
            let (a, b) = (w[0], w[1]);
            if a.upper != b.lower {
                let what = if a.upper > b.lower { "overlap" } else { "gap" };
                return fail(format!("{what} between {} and {}", a.label(), b.label()));
            }
            if a.upper_closed == b.lower_closed {
                let what = if a.upper_closed { "overlap" } else { "gap" };
                return fail(format!("{what} at {} between {} and {}", a.upper, a.label(), b.label()));
            }
        }
        Ok(Self { bins })
    }

    pub fn bins(&self) -> &[Bin] {
        &self.bins
    }

    /// Index of the bin holding `p`. Values within [`EDGE_TOLERANCE`] of an
    /// edge snap onto it, so `0.1 + ε` still lands in `(0, 0.1]`.
    pub fn locate(&self, p: f64) -> Result<usize> {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::ProbabilityOutOfRange(p));
        }
        let snapped = self
            .bins
            .iter()
            .flat_map(|b| [b.lower, b.upper])
            .find(|e| (p - e).abs() <= EDGE_TOLERANCE && *e != 0.0 && *e != 1.0)
            .unwrap_or(p);
        self.bins
            .iter()
            .position(|b| b.contains(snapped))
            .ok_or(Error::ProbabilityOutOfRange(p))
    }
}

impl Default for BinScheme {
    fn default() -> Self {
        Self::twelve_groups()
    }
}

impl FromStr for BinScheme {
    type Err = Error;

    /// `default`, `uniform:N`, or `edges:e0,e1,…,en`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.eq_ignore_ascii_case("default") || s.eq_ignore_ascii_case("twelve") {
            return Ok(Self::twelve_groups());
        }
        if let Some(n) = s.strip_prefix("uniform:") {
            let n: usize = n
                .trim()
                .parse()
                .map_err(|_| Error::InvalidBinScheme(format!("bad bin count '{n}'")))?;
            if n == 0 {
                return Err(Error::InvalidBinScheme("bin count must be positive".into()));
            }
            let edges: Vec<f64> = (0..=n).map(|i| i as f64 / n as f64).collect();
            return Self::from_edges(&edges);
        }
        if let Some(list) = s.strip_prefix("edges:") {
            let edges = list
                .split(',')
                .map(|e| {
                    e.trim()
                        .parse::<f64>()
                        .map_err(|_| Error::InvalidBinScheme(format!("bad edge '{e}'")))
                })
                .collect::<Result<Vec<_>>>()?;
            return Self::from_edges(&edges);
        }
        Err(Error::InvalidBinScheme(format!("unknown scheme '{s}'")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BinStats {
    pub bin: Bin,
    /// Number of (probability, outcome) pairs in the bin.
    pub count: u64,
    pub occurred: u64,
    /// Sum of the stated probabilities, for the bin's mean stated value.
    pub stated_sum: f64,
}

impl BinStats {
    /// Observed fraction `occurred / count`; `None` for an empty bin.
    pub fn fraction(&self) -> Option<f64> {
        (self.count > 0).then(|| self.occurred as f64 / self.count as f64)
    }

    pub fn mean_stated(&self) -> Option<f64> {
        (self.count > 0).then(|| self.stated_sum / self.count as f64)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReliabilityBinTable {
    pub bins: Vec<BinStats>,
}

impl ReliabilityBinTable {
    pub fn total(&self) -> u64 {
        self.bins.iter().map(|b| b.count).sum()
    }
}

impl fmt::Display for ReliabilityBinTable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for b in &self.bins {
            let frac = b.fraction().map_or_else(|| "-".to_owned(), |v| format!("{v:.2}"));
            writeln!(f, "{:>8}  {:>6}  {:>6}  {frac}", b.bin.label(), b.count, b.occurred)?;
        }
        Ok(())
    }
}

/// Bins `(stated probability, occurred)` pairs.
pub fn reliability_bins(pairs: &[(f64, bool)], scheme: &BinScheme, exec: Execution) -> Result<ReliabilityBinTable> {
    let nb = scheme.bins().len();
    let partials = exec::map_chunks(exec, pairs, CHUNK, |chunk| -> Result<Vec<(u64, u64, f64)>> {
        let mut acc = vec![(0u64, 0u64, 0.0f64); nb];
        for &(p, hit) in chunk {
            let slot = &mut acc[scheme.locate(p)?];
            slot.0 += 1;
            slot.1 += u64::from(hit);
            slot.2 += p;
        }
        Ok(acc)
    });
    let mut merged = vec![(0u64, 0u64, 0.0f64); nb];
    for part in partials {
        for (m, p) in merged.iter_mut().zip(part?) {
            m.0 += p.0;
            m.1 += p.1;
            m.2 += p.2;
        }
    }
    Ok(ReliabilityBinTable {
        bins: scheme
            .bins()
            .iter()
            .zip(merged)
            .map(|(&bin, (count, occurred, stated_sum))| BinStats {
                bin,
                count,
                occurred,
                stated_sum,
            })
            .collect(),
    })
}

/// One pair per response of every scored question: its stated probability
/// and whether it was the observed response.
pub fn response_pairs(outcomes: &[ForecastOutcome]) -> Vec<(f64, bool)> {
    outcomes
        .iter()
        .flat_map(|fo| {
            fo.forecast
                .values()
                .iter()
                .enumerate()
                .map(move |(i, &p)| (p, i == fo.outcome.observed()))
        })
        .collect()
}
