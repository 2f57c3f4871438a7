//! Multi-label ranking metrics: Top-k accuracy, mean samplewise Average
//! Precision (msAP) over emoji rankings, and mean Average Precision (mAP) over
//! per-emoji document rankings.
//!
//! Equal scores are ordered by ascending index (class index for emoji
//! rankings, document index for document rankings). AP is tie-sensitive, so
//! the rule is fixed rather than left to sort stability.

use serde::Serialize;

use crate::emoji::ClassIndex;
use crate::scores::{rank_descending, ScoreVector};
use crate::{Error, Result};

/// `N × C` scores with matching binary relevance. Every row has at least one
/// relevant class and every score is finite.
#[derive(Clone, Debug, PartialEq)]
pub struct EvalBatch {
    rows: usize,
    cols: usize,
    scores: Vec<f64>,
    relevance: Vec<bool>,
}

impl EvalBatch {
    pub fn new(scores: Vec<Vec<f64>>, relevance: Vec<Vec<bool>>) -> Result<Self> {
        if scores.len() != relevance.len() {
            return Err(Error::ShapeMismatch {
                what: "relevance rows",
                expected: scores.len(),
                found: relevance.len(),
            });
        }
        let cols = scores.first().map_or(0, Vec::len);
        let mut flat_scores = Vec::with_capacity(scores.len() * cols);
        let mut flat_rel = Vec::with_capacity(scores.len() * cols);
        for (i, (s, r)) in scores.into_iter().zip(relevance).enumerate() {
            if s.len() != cols || r.len() != cols {
                return Err(Error::ShapeMismatch {
                    what: "score/relevance row",
                    expected: cols,
                    found: if s.len() != cols { s.len() } else { r.len() },
                });
            }
            if s.iter().any(|v| !v.is_finite()) {
                return Err(Error::invalid(format!("row {i} has a non-finite score")));
            }
            if !r.iter().any(|&x| x) {
                return Err(Error::invalid(format!("row {i} has no relevant entry")));
            }
            flat_scores.extend(s);
            flat_rel.extend(r);
        }
        Ok(EvalBatch {
            rows: flat_rel.len().checked_div(cols).unwrap_or(0),
            cols,
            scores: flat_scores,
            relevance: flat_rel,
        })
    }

    /// Builds a batch from score vectors and annotation sets.
    pub fn from_labels(scores: &[ScoreVector], labels: &[Vec<ClassIndex>], classes: usize) -> Result<Self> {
        let relevance = labels
            .iter()
            .map(|set| {
                let mut row = vec![false; classes];
                for &c in set {
                    *row.get_mut(c).ok_or_else(|| Error::invalid(format!("class {c} out of range")))? = true;
                }
                Ok(row)
            })
            .collect::<Result<Vec<_>>>()?;
        let scores = scores.iter().map(|s| s.values().to_vec()).collect();
        Self::new(scores, relevance)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn score_row(&self, i: usize) -> &[f64] {
        &self.scores[i * self.cols..(i + 1) * self.cols]
    }

    pub fn relevance_row(&self, i: usize) -> &[bool] {
        &self.relevance[i * self.cols..(i + 1) * self.cols]
    }

    pub fn score_column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self.scores[i * self.cols + j]).collect()
    }

    pub fn relevance_column(&self, j: usize) -> Vec<bool> {
        (0..self.rows).map(|i| self.relevance[i * self.cols + j]).collect()
    }
}

/// Fraction of rows with at least one relevant class among the `k` best-scored.
pub fn top_k_accuracy(batch: &EvalBatch, k: usize) -> Result<f64> {
    if k == 0 || k > batch.cols() {
        return Err(Error::invalid(format!("k={k} outside 1..={}", batch.cols())));
    }
    if batch.rows() == 0 {
        return Err(Error::Empty("evaluation batch"));
    }
    let hits = (0..batch.rows())
        .filter(|&i| best_relevant_rank(batch.score_row(i), batch.relevance_row(i)) < k)
        .count();
    Ok(hits as f64 / batch.rows() as f64)
}

/// Zero-based rank of the best-placed relevant entry, without sorting.
fn best_relevant_rank(scores: &[f64], relevance: &[bool]) -> usize {
    let outranks = |a: usize, b: usize| {
        scores[a] > scores[b] || (scores[a] == scores[b] && a < b)
    };
    let best = (0..scores.len())
        .filter(|&j| relevance[j])
        .reduce(|a, b| if outranks(b, a) { b } else { a })
        .expect("row has a relevant entry");
    (0..scores.len()).filter(|&j| outranks(j, best)).count()
}

/// Average precision of the ranking induced by `scores` against `relevance`.
pub fn samplewise_ap(scores: &[f64], relevance: &[bool]) -> Result<f64> {
    if scores.len() != relevance.len() {
        return Err(Error::ShapeMismatch {
            what: "relevance",
            expected: scores.len(),
            found: relevance.len(),
        });
    }
    let total = relevance.iter().filter(|&&r| r).count();
    if total == 0 {
        return Err(Error::invalid("average precision needs at least one relevant entry"));
    }
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (rank, idx) in rank_descending(scores).into_iter().enumerate() {
        if relevance[idx] {
            hits += 1;
            sum += hits as f64 / (rank + 1) as f64;
            if hits == total {
                break;
            }
        }
    }
    Ok(sum / total as f64)
}

/// Mean samplewise average precision over the rows of `batch`.
pub fn msap(batch: &EvalBatch) -> Result<f64> {
    if batch.rows() == 0 {
        return Err(Error::Empty("evaluation batch"));
    }
    let mut sum = 0.0;
    for i in 0..batch.rows() {
        sum += samplewise_ap(batch.score_row(i), batch.relevance_row(i))?;
    }
    Ok(sum / batch.rows() as f64)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MapReport {
    pub map: f64,
    /// AP of every included query, in class order.
    pub per_query: Vec<(ClassIndex, f64)>,
    /// Queries without any relevant document.
    pub excluded: Vec<ClassIndex>,
}

/// Mean over classes of the AP of the document ranking by that class's score.
/// Classes that no document is relevant to are excluded and reported.
pub fn map_per_query(batch: &EvalBatch) -> Result<MapReport> {
    let mut per_query = Vec::new();
    let mut excluded = Vec::new();
    for j in 0..batch.cols() {
        let relevance = batch.relevance_column(j);
        if !relevance.iter().any(|&r| r) {
            excluded.push(j);
            continue;
        }
        per_query.push((j, samplewise_ap(&batch.score_column(j), &relevance)?));
    }
    if per_query.is_empty() {
        return Err(Error::invalid("no query has a relevant document"));
    }
    let map = per_query.iter().map(|(_, ap)| ap).sum::<f64>() / per_query.len() as f64;
    Ok(MapReport {
        map,
        per_query,
        excluded,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MetricValue {
    pub name: String,
    pub k: Option<usize>,
    pub value: f64,
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(rename = "C")]
    pub c: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct MetricReport {
    pub values: Vec<MetricValue>,
}

impl MetricReport {
    /// Top-k for every requested `k` (values above `C` are skipped) plus msAP.
    pub fn prediction(batch: &EvalBatch, ks: &[usize]) -> Result<Self> {
        let mut values = Vec::new();
        for &k in ks.iter().filter(|&&k| k <= batch.cols()) {
            values.push(MetricValue {
                name: "top_k".into(),
                k: Some(k),
                value: top_k_accuracy(batch, k)?,
                n: batch.rows(),
                c: batch.cols(),
            });
        }
        values.push(MetricValue {
            name: "msap".into(),
            k: None,
            value: msap(batch)?,
            n: batch.rows(),
            c: batch.cols(),
        });
        Ok(MetricReport { values })
    }

    pub fn push(&mut self, value: MetricValue) {
        self.values.push(value);
    }

    pub fn get(&self, name: &str, k: Option<usize>) -> Option<f64> {
        self.values
            .iter()
            .find(|v| v.name == name && v.k == k)
            .map(|v| v.value)
    }

    /// Flat `key value` block.
    pub fn to_text(&self) -> String {
        self.values
            .iter()
            .map(|v| match v.k {
                Some(k) => format!("{}@{}\t{:.6}\n", v.name, k, v.value),
                None => format!("{}\t{:.6}\n", v.name, v.value),
            })
            .collect()
    }

    /// One JSON object per metric per line.
    pub fn to_json_lines(&self) -> String {
        self.values
            .iter()
            .map(|v| serde_json::to_string(v).expect("metric serializes") + "\n")
            .collect()
    }
}

fn parse_matrix<T>(
    what: &'static str,
    input: &str,
    parse: impl Fn(&str) -> Option<T>,
) -> Result<Vec<Vec<T>>> {
    let mut rows: Vec<Vec<T>> = Vec::new();
    for (i, line) in input.lines().enumerate() {
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let row = line
            .split('\t')
            .map(|cell| {
                parse(cell.trim())
                    .ok_or_else(|| Error::parse(what, i + 1, format!("bad value {cell:?}")))
            })
            .collect::<Result<Vec<T>>>()?;
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(Error::parse(
                    what,
                    i + 1,
                    format!("{} columns, expected {}", row.len(), first.len()),
                ));
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::Empty(what));
    }
    Ok(rows)
}

/// Tab-separated matrix of finite scores, one sample per line.
pub fn parse_score_matrix(input: &str) -> Result<Vec<Vec<f64>>> {
    parse_matrix("score matrix", input, |s| {
        s.parse::<f64>().ok().filter(|v| v.is_finite())
    })
}

/// Tab-separated matrix of `0`/`1` relevance flags, one sample per line.
pub fn parse_label_matrix(input: &str) -> Result<Vec<Vec<bool>>> {
    parse_matrix("label matrix", input, |s| match s {
        "0" => Some(false),
        "1" => Some(true),
        _ => None,
    })
}
