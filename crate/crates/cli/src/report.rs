use anyhow::Result;
use subjprob_core::{
    DecompositionRecord, GroupKey, GroupSummary, PrequentialTrace, ReliabilityBinTable, ScoreRecord, ScoringRule,
};

/// Six decimals, `inf` for infinity, no negative zero.
pub fn fixed(v: f64) -> String {
    if v.is_infinite() {
        return if v > 0.0 { "inf".into() } else { "-inf".into() };
    }
    let s = format!("{v:.6}");
    match s.strip_prefix('-') {
        Some(rest) if rest.bytes().all(|b| b == b'0' || b == b'.') => rest.to_string(),
        _ => s,
    }
}

fn optional(v: Option<f64>) -> String {
    v.map(fixed).unwrap_or_default()
}

fn csv_block<F>(prefix: String, header: &[&str], rows: F) -> Result<String>
where
    F: FnOnce(&mut csv::Writer<&mut Vec<u8>>) -> Result<()>,
{
    let mut buf = prefix.into_bytes();
    {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(&mut buf);
        w.write_record(header)?;
        rows(&mut w)?;
        w.flush()?;
    }
    Ok(String::from_utf8(buf)?)
}

pub fn score_report(
    rule: ScoringRule,
    key: GroupKey,
    records: &[ScoreRecord],
    groups: &[GroupSummary],
) -> Result<String> {
    let banner = format!(
        "# subjprob score rule={} proper={} improper_rule={} log_base=e\n",
        rule,
        rule.is_proper(),
        !rule.is_proper()
    );
    let mut text = csv_block(banner, &["case_id", "disease", "question", "response", "score"], |w| {
        for r in records {
            w.write_record([&r.case_id, &r.disease, &r.question, &r.response, &fixed(r.score)])?;
        }
        Ok(())
    })?;
    let summary = format!("# summary group_by={}\n", key.name());
    text += &csv_block(summary, &["group", "count", "mean_score", "infinite"], |w| {
        for g in groups {
            w.write_record([
                g.group.clone(),
                g.count.to_string(),
                fixed(g.mean),
                g.infinite_at.len().to_string(),
            ])?;
        }
        Ok(())
    })?;
    Ok(text)
}

pub fn decomposition_report(key: GroupKey, rows: &[DecompositionRecord]) -> Result<String> {
    let banner = format!("# subjprob decompose group_by={}\n", key.name());
    csv_block(
        banner,
        &[
            "group",
            "count",
            "mean_discrimination",
            "mean_reliability",
            "mean_brier",
        ],
        |w| {
            for r in rows {
                w.write_record([
                    r.group.clone(),
                    r.count.to_string(),
                    fixed(r.mean_discrimination),
                    fixed(r.mean_reliability),
                    fixed(r.mean_brier),
                ])?;
            }
            Ok(())
        },
    )
}

pub fn bins_report(scheme: &str, table: &ReliabilityBinTable) -> Result<String> {
    let banner = format!("# subjprob bins scheme={scheme} total={}\n", table.total());
    csv_block(
        banner,
        &["bin", "lower", "upper", "count", "occurred", "fraction", "mean_stated"],
        |w| {
            for s in &table.bins {
                w.write_record([
                    s.bin.label(),
                    fixed(s.bin.lower),
                    fixed(s.bin.upper),
                    s.count.to_string(),
                    s.occurred.to_string(),
                    optional(s.fraction()),
                    optional(s.mean_stated()),
                ])?;
            }
            Ok(())
        },
    )
}

pub fn trace_report(trace: &PrequentialTrace) -> Result<String> {
    let mut header: Vec<String> = [
        "case_index",
        "case_id",
        "disease",
        "question",
        "response",
        "prob_observed",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    header.extend(trace.rules.iter().map(|r| format!("{r}_score")));
    header.extend(["reliability", "cell_total", "skipped"].map(String::from));
    header.extend(trace.rules.iter().map(|r| format!("cumulative_{r}")));
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    csv_block(String::new(), &header, |w| {
        for e in &trace.entries {
            let mut row = vec![
                e.case_index.to_string(),
                e.case_id.clone(),
                e.disease.clone(),
                e.question.clone(),
                e.response.clone(),
                fixed(e.prob_observed),
            ];
            row.extend(e.scores.iter().copied().map(fixed));
            row.push(fixed(e.reliability));
            row.push(fixed(e.total_after));
            row.push(e.skipped.to_string());
            row.extend(e.cumulative.iter().copied().map(fixed));
            w.write_record(&row)?;
        }
        Ok(())
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixed_formatting() {
        assert_eq!(fixed(0.909369), "0.909369");
        assert_eq!(fixed(-1e-12), "0.000000");
        assert_eq!(fixed(-0.5), "-0.500000");
        assert_eq!(fixed(f64::INFINITY), "inf");
        assert_eq!(fixed(0.0078125), "0.007812");
        assert_eq!(fixed(131.0 / 297.0), "0.441077");
    }
}
