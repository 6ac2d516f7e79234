//! Corpus-level evaluation: ROUGE table overall and per LCS group.

use std::collections::HashMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{lcs_order_score, split_scores, RougeReport, SplitStats};
use crate::text::{tokenize, RawPair, TokenMode};

/// Default boundary between low and high LCS groups.
pub const DEFAULT_LCS_THRESHOLD: f64 = 0.4;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Prediction {
    pub id: String,
    pub headline: String,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct GroupReport {
    pub count: usize,
    pub fraction: f64,
    pub mean_lcs: f64,
    pub rouge: RougeReport,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub count: usize,
    pub exact_match: f64,
    pub overall: RougeReport,
    pub high: GroupReport,
    pub low: GroupReport,
    pub split: SplitStats,
}

/// Pairs each reference with its prediction by id. All ids must match both
/// ways; the error lists the ones that do not.
pub fn align<'a>(predictions: &'a [Prediction], references: &'a [RawPair]) -> Result<Vec<(&'a Prediction, &'a RawPair)>> {
    let ref_id = |i: usize, r: &RawPair| r.id.clone().unwrap_or_else(|| i.to_string());
    let by_id: HashMap<&str, &Prediction> = predictions.iter().map(|p| (p.id.as_str(), p)).collect();
    let ref_ids: Vec<String> = references.iter().enumerate().map(|(i, r)| ref_id(i, r)).collect();
    let missing: Vec<&str> = ref_ids.iter().map(String::as_str).filter(|id| !by_id.contains_key(id)).collect();
    let known: std::collections::HashSet<&str> = ref_ids.iter().map(String::as_str).collect();
    let extra: Vec<&str> = predictions.iter().map(|p| p.id.as_str()).filter(|id| !known.contains(id)).collect();
    if !missing.is_empty() || !extra.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "id mismatch: missing predictions for [{}]; no reference for [{}]",
            missing.join(", "),
            extra.join(", ")
        )));
    }
    Ok(ref_ids
        .iter()
        .zip(references)
        .map(|(id, r)| (by_id[id.as_str()], r))
        .collect())
}

/// Scores predictions against references. Headlines are compared as
/// character tokens; LCS groups use reference headline against document.
pub fn evaluate(predictions: &[Prediction], references: &[RawPair], threshold: f64) -> Result<EvalReport> {
    if !(0.0..=1.0).contains(&threshold) {
        return Err(Error::InvalidArgument(format!("threshold {threshold} outside [0, 1]")));
    }
    let pairs = align(predictions, references)?;
    let mut scores = Vec::with_capacity(pairs.len());
    let mut rouge = Vec::with_capacity(pairs.len());
    let mut exact = 0;
    for (pred, reference) in &pairs {
        let cand = tokenize(&pred.headline, TokenMode::Character);
        let gold = tokenize(&reference.headline, TokenMode::Character);
        let doc = tokenize(&reference.document, TokenMode::Character);
        if cand == gold {
            exact += 1;
        }
        rouge.push(RougeReport::score(&cand, &gold));
        // an empty reference headline preserves nothing
        scores.push(lcs_order_score(&gold, &doc).map_or(0.0, |s| s.0));
    }
    let split = split_scores(scores, threshold);
    let group = |idx: &[usize], fraction: f64, mean_lcs: f64| GroupReport {
        count: idx.len(),
        fraction,
        mean_lcs,
        rouge: RougeReport::mean(&idx.iter().map(|&i| rouge[i]).collect::<Vec<_>>()),
    };
    let n = pairs.len();
    Ok(EvalReport {
        count: n,
        exact_match: if n == 0 { 0.0 } else { exact as f64 / n as f64 },
        overall: RougeReport::mean(&rouge),
        high: group(&split.high, split.stats.high_fraction, split.stats.high_mean),
        low: group(&split.low, split.stats.low_fraction, split.stats.low_mean),
        split: split.stats,
    })
}

/// Aligned text table, scores ×100 with two decimals.
pub fn render_table(report: &EvalReport) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<22} {:>6} {:>8} {:>8} {:>8} {:>8} {:>8}",
        "group", "pairs", "share", "ROUGE-1", "ROUGE-2", "ROUGE-3", "ROUGE-L"
    );
    let mut row = |name: String, count: usize, share: f64, r: &RougeReport| {
        let [r1, r2, r3, rl] = r.as_array();
        let _ = writeln!(
            out,
            "{:<22} {:>6} {:>8.2} {:>8.2} {:>8.2} {:>8.2} {:>8.2}",
            name,
            count,
            share * 100.0,
            r1 * 100.0,
            r2 * 100.0,
            r3 * 100.0,
            rl * 100.0
        );
    };
    row("all".into(), report.count, 1.0, &report.overall);
    row(format!("LCS > {:.2}", report.split.threshold), report.high.count, report.high.fraction, &report.high.rouge);
    row(format!("LCS <= {:.2}", report.split.threshold), report.low.count, report.low.fraction, &report.low.rouge);
    let _ = writeln!(out, "exact match: {:.2}", report.exact_match * 100.0);
    let _ = writeln!(
        out,
        "mean LCS score: high {:.2}, low {:.2}",
        report.high.mean_lcs * 100.0,
        report.low.mean_lcs * 100.0
    );
    out
}
