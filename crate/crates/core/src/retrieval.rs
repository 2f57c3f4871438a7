//! Query-by-emoji: a dense per-document score index and ranked lookup for
//! single and composed emoji queries.

use std::cmp::Ordering;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::codec::{Decoder, Encoder};
use crate::corpus::Corpus;
use crate::emoji::{segment, ClassIndex, EmojiCatalog, SegmentOptions};
use crate::metrics::{map_per_query, EvalBatch, MapReport};
use crate::scores::Scorer;
use crate::{Error, Result};

pub const INDEX_MAGIC: &[u8; 5] = b"EMJI1";
/// Lower clamp applied before taking logarithms in the geometric mean.
pub const GEO_FLOOR: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq)]
pub struct ScoreIndex {
    doc_ids: Vec<String>,
    snippets: Vec<String>,
    has_image: Vec<bool>,
    /// Row-major `N × C`.
    scores: Vec<f64>,
    classes: usize,
    scorer_tag: String,
}

/// Scores every document of `corpus` with `scorer`.
pub fn build_index(corpus: &Corpus, scorer: &dyn Scorer) -> Result<ScoreIndex> {
    let classes = corpus.num_classes();
    if scorer.num_classes() != classes {
        return Err(Error::ShapeMismatch {
            what: "scorer classes",
            expected: classes,
            found: scorer.num_classes(),
        });
    }
    let mut scores = Vec::with_capacity(corpus.len() * classes);
    for doc in corpus.documents() {
        let s = scorer.score(doc)?;
        if s.len() != classes {
            return Err(Error::ShapeMismatch {
                what: "score vector",
                expected: classes,
                found: s.len(),
            });
        }
        scores.extend_from_slice(s.values());
    }
    ScoreIndex::new(
        corpus.documents().iter().map(|d| d.id.clone()).collect(),
        corpus.documents().iter().map(|d| d.stripped_text.clone()).collect(),
        corpus.documents().iter().map(|d| d.image_features.is_some()).collect(),
        scores,
        classes,
        scorer.tag(),
    )
}

impl ScoreIndex {
    pub fn new(
        doc_ids: Vec<String>,
        snippets: Vec<String>,
        has_image: Vec<bool>,
        scores: Vec<f64>,
        classes: usize,
        scorer_tag: String,
    ) -> Result<Self> {
        let n = doc_ids.len();
        if n == 0 {
            return Err(Error::Empty("score index"));
        }
        if classes == 0 {
            return Err(Error::invalid("score index needs at least one class"));
        }
        for (what, len) in [("snippets", snippets.len()), ("image flags", has_image.len())] {
            if len != n {
                return Err(Error::ShapeMismatch { what, expected: n, found: len });
            }
        }
        if scores.len() != n * classes {
            return Err(Error::ShapeMismatch {
                what: "score matrix",
                expected: n * classes,
                found: scores.len(),
            });
        }
        if scores.iter().any(|s| !s.is_finite()) {
            return Err(Error::invalid("score index contains non-finite scores"));
        }
        Ok(ScoreIndex {
            doc_ids,
            snippets,
            has_image,
            scores,
            classes,
            scorer_tag,
        })
    }

    pub fn len(&self) -> usize {
        self.doc_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.doc_ids.is_empty()
    }

    pub fn num_classes(&self) -> usize {
        self.classes
    }

    pub fn scorer_tag(&self) -> &str {
        &self.scorer_tag
    }

    pub fn doc_ids(&self) -> &[String] {
        &self.doc_ids
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.scores[i * self.classes..(i + 1) * self.classes]
    }

    pub fn score(&self, doc: usize, class: ClassIndex) -> f64 {
        self.scores[doc * self.classes + class]
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut enc = Encoder::new(INDEX_MAGIC);
        enc.len32(self.classes).str(&self.scorer_tag).u64(self.len() as u64);
        for i in 0..self.len() {
            enc.str(&self.doc_ids[i])
                .str(&self.snippets[i])
                .u8(self.has_image[i] as u8)
                .f64s(self.row(i));
        }
        enc.finish()
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut dec = Decoder::new("score index", bytes, INDEX_MAGIC)?;
        let classes = dec.len32()?;
        let tag = dec.str()?;
        let n = dec.u64()?;
        let (mut ids, mut snippets, mut flags, mut scores) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
        for _ in 0..n {
            ids.push(dec.str()?);
            snippets.push(dec.str()?);
            flags.push(match dec.u8()? {
                0 => false,
                1 => true,
                _ => return Err(dec.error("bad image flag")),
            });
            scores.extend(dec.f64s(classes)?);
        }
        dec.finish()?;
        ScoreIndex::new(ids, snippets, flags, scores, classes, tag)
            .map_err(|e| Error::decode("score index", e.to_string()))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.encode()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::decode(&bytes)
    }
}

/// How member-class scores of a composed query are combined.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Combine {
    #[default]
    Geo,
    Min,
    Mean,
}

impl FromStr for Combine {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "geo" => Ok(Combine::Geo),
            "min" => Ok(Combine::Min),
            "mean" => Ok(Combine::Mean),
            _ => Err(Error::invalid(format!("unknown combine mode {s:?}; expected geo, min or mean"))),
        }
    }
}

impl Combine {
    pub fn apply(self, scores: &[f64]) -> f64 {
        if let [single] = scores {
            return *single;
        }
        let n = scores.len() as f64;
        match self {
            Combine::Geo => (scores.iter().map(|s| s.max(GEO_FLOOR).ln()).sum::<f64>() / n).exp(),
            Combine::Min => scores.iter().copied().fold(f64::INFINITY, f64::min),
            Combine::Mean => scores.iter().sum::<f64>() / n,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct EmojiQuery {
    /// Distinct classes in order of first appearance.
    pub classes: Vec<ClassIndex>,
    pub raw: String,
}

impl EmojiQuery {
    /// Emoji separated by nothing, whitespace, `+` or `,`. Anything left over
    /// after segmentation is reported as unknown.
    pub fn parse(raw: &str, catalog: &EmojiCatalog) -> Result<Self> {
        let mut classes = Vec::new();
        let mut unknown = Vec::new();
        for chunk in raw.split(|c: char| c.is_whitespace() || c == '+' || c == ',') {
            if chunk.is_empty() {
                continue;
            }
            let seg = segment(chunk, catalog, SegmentOptions::default());
            for c in seg.class_indices() {
                if !classes.contains(&c) {
                    classes.push(c);
                }
            }
            if !seg.stripped_text.trim().is_empty() {
                unknown.push(seg.stripped_text.trim().to_string());
            }
        }
        if !unknown.is_empty() {
            return Err(Error::UnknownEmoji(unknown));
        }
        if classes.is_empty() {
            return Err(Error::Empty("emoji query"));
        }
        Ok(EmojiQuery {
            classes,
            raw: raw.to_string(),
        })
    }

    pub fn from_classes(classes: Vec<ClassIndex>) -> Result<Self> {
        if classes.is_empty() {
            return Err(Error::Empty("emoji query"));
        }
        Ok(EmojiQuery {
            raw: String::new(),
            classes,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankedResult {
    pub doc_id: String,
    pub score: f64,
    pub rank: usize,
    pub snippet: String,
    pub has_image: bool,
}

/// Top `top_k` documents by combined score; ties go to the smaller doc id.
/// A single-emoji query ranks by the raw column.
pub fn query(index: &ScoreIndex, q: &EmojiQuery, top_k: usize, combine: Combine) -> Result<Vec<RankedResult>> {
    if top_k == 0 {
        return Err(Error::invalid("top_k must be at least 1"));
    }
    if let Some(&c) = q.classes.iter().find(|&&c| c >= index.classes) {
        return Err(Error::invalid(format!("query class {c} outside index of {} classes", index.classes)));
    }
    let mut member = Vec::with_capacity(q.classes.len());
    let mut scored: Vec<(usize, f64)> = (0..index.len())
        .map(|i| {
            member.clear();
            member.extend(q.classes.iter().map(|&c| index.score(i, c)));
            (i, combine.apply(&member))
        })
        .collect();
    scored.sort_by(|a, b| match b.1.total_cmp(&a.1) {
        Ordering::Equal => index.doc_ids[a.0].cmp(&index.doc_ids[b.0]),
        o => o,
    });
    Ok(scored
        .into_iter()
        .take(top_k)
        .enumerate()
        .map(|(r, (i, score))| RankedResult {
            doc_id: index.doc_ids[i].clone(),
            score,
            rank: r + 1,
            snippet: index.snippets[i].clone(),
            has_image: index.has_image[i],
        })
        .collect())
}

/// Per-query mAP with annotation presence as relevance; `labels[i]` belongs
/// to index row `i`.
pub fn evaluate_retrieval(index: &ScoreIndex, labels: &[Vec<ClassIndex>]) -> Result<MapReport> {
    if labels.len() != index.len() {
        return Err(Error::ShapeMismatch {
            what: "relevance labels",
            expected: index.len(),
            found: labels.len(),
        });
    }
    let scores = (0..index.len()).map(|i| index.row(i).to_vec()).collect();
    let mut relevance = vec![vec![false; index.classes]; index.len()];
    for (row, ls) in relevance.iter_mut().zip(labels) {
        for &c in ls {
            *row.get_mut(c).ok_or_else(|| Error::invalid(format!("label {c} outside index classes")))? = true;
        }
    }
    map_per_query(&EvalBatch::new(scores, relevance)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::emoji::EmojiSequence;

    fn index(rows: &[&[f64]]) -> ScoreIndex {
        let n = rows.len();
        ScoreIndex::new(
            (0..n).map(|i| format!("d{i}")).collect(),
            (0..n).map(|i| format!("text {i}")).collect(),
            vec![false; n],
            rows.iter().flat_map(|r| r.iter().copied()).collect(),
            rows[0].len(),
            "test".into(),
        )
        .unwrap()
    }

    fn catalog() -> EmojiCatalog {
        EmojiCatalog::from_entries(["🐠", "👟", "🐱"].iter().map(|e| {
            (EmojiSequence::from_str_chars(e).unwrap(), format!("n{e}"), Vec::<String>::new())
        }))
        .unwrap()
    }

    #[test]
    fn geometric_mean_composition() {
        let idx = index(&[&[0.9, 0.1], &[0.5, 0.5]]);
        let q = EmojiQuery::from_classes(vec![0, 1]).unwrap();
        let r = query(&idx, &q, 10, Combine::Geo).unwrap();
        assert_eq!(r[0].doc_id, "d1");
        assert!((r[0].score - 0.5).abs() < 1e-12);
        assert!((r[1].score - 0.3).abs() < 1e-12);
        assert_eq!(query(&idx, &q, 10, Combine::Min).unwrap()[0].doc_id, "d1");
        let mean = query(&idx, &q, 10, Combine::Mean).unwrap();
        assert_eq!(mean[0].doc_id, "d0");
    }

    #[test]
    fn singleton_uses_raw_column_and_ties_by_id() {
        let idx = index(&[&[0.2, 0.0], &[0.7, 0.0], &[0.2, 0.0]]);
        let r = query(&idx, &EmojiQuery::from_classes(vec![0]).unwrap(), 3, Combine::Geo).unwrap();
        let order: Vec<&str> = r.iter().map(|x| x.doc_id.as_str()).collect();
        assert_eq!(order, ["d1", "d0", "d2"]);
        assert_eq!(r[0].score, 0.7);
        assert_eq!(r.iter().map(|x| x.rank).collect::<Vec<_>>(), [1, 2, 3]);
        let top1 = query(&idx, &EmojiQuery::from_classes(vec![0]).unwrap(), 1, Combine::Geo).unwrap();
        assert_eq!(top1.len(), 1);
    }

    #[test]
    fn geo_clamps_zero_scores() {
        assert!((Combine::Geo.apply(&[0.0, 0.0]) / GEO_FLOOR - 1.0).abs() < 1e-9);
        assert!(Combine::Geo.apply(&[-1.0, 1.0]) > 0.0);
    }

    #[test]
    fn query_errors() {
        let idx = index(&[&[0.5, 0.5]]);
        assert!(query(&idx, &EmojiQuery::from_classes(vec![0]).unwrap(), 0, Combine::Geo).is_err());
        assert!(query(&idx, &EmojiQuery::from_classes(vec![2]).unwrap(), 1, Combine::Geo).is_err());
        assert!("avg".parse::<Combine>().is_err());
    }

    #[test]
    fn query_parsing() {
        let cat = catalog();
        assert_eq!(EmojiQuery::parse("👟🐱", &cat).unwrap().classes, vec![1, 2]);
        assert_eq!(EmojiQuery::parse("🐱 + 👟,🐱", &cat).unwrap().classes, vec![2, 1]);
        match EmojiQuery::parse("🐱🦄", &cat) {
            Err(Error::UnknownEmoji(u)) => assert_eq!(u, vec!["🦄".to_string()]),
            other => panic!("{other:?}"),
        }
        assert!(matches!(EmojiQuery::parse("cat", &cat), Err(Error::UnknownEmoji(_))));
        assert!(matches!(EmojiQuery::parse(" + ", &cat), Err(Error::Empty(_))));
    }

    #[test]
    fn index_round_trip() {
        let idx = index(&[&[0.9, 0.1], &[0.5, 0.5]]);
        let bytes = idx.encode();
        assert_eq!(ScoreIndex::decode(&bytes).unwrap(), idx);
        for cut in 0..bytes.len() {
            assert!(ScoreIndex::decode(&bytes[..cut]).is_err());
        }
    }

    #[test]
    fn retrieval_map() {
        let idx = index(&[&[0.9, 0.1], &[0.2, 0.8], &[0.6, 0.05]]);
        let report = evaluate_retrieval(&idx, &[vec![0], vec![1], vec![1]]).unwrap();
        // query 0: relevant doc first -> 1; query 1: d1 first, d2 third -> (1 + 2/3) / 2
        assert!((report.per_query[0].1 - 1.0).abs() < 1e-12);
        assert!((report.per_query[1].1 - 5.0 / 6.0).abs() < 1e-12);
        assert!(evaluate_retrieval(&idx, &[vec![0]]).is_err());
    }
}
