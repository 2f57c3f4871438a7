//! Zero-shot emoji scoring: texts, image concepts and emoji descriptions are
//! embedded in one word-vector space and compared by similarity, so no
//! trained parameters are involved.

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::Document;
use crate::emoji::{ClassIndex, EmojiCatalog, EmojiEntry};
use crate::fusion::FusionWeight;
use crate::linalg::{dot, norm};
use crate::scores::{ScoreVector, Scorer};
use crate::tokenize::tokenize;
use crate::{Error, Result};

pub const MISSING_PROTOTYPE_SCORE: f64 = -1.0;
pub const DEFAULT_TOP_CONCEPTS: usize = 10;

#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingTable {
    dim: usize,
    index: HashMap<String, usize>,
    vectors: Vec<f64>,
}

impl EmbeddingTable {
    /// Rows of `(token, vector)`. The first occurrence of a token wins.
    pub fn from_rows(rows: impl IntoIterator<Item = (String, Vec<f64>)>) -> Result<Self> {
        let mut table: Option<EmbeddingTable> = None;
        for (i, (token, v)) in rows.into_iter().enumerate() {
            let t = table.get_or_insert_with(|| EmbeddingTable {
                dim: v.len(),
                index: HashMap::new(),
                vectors: Vec::new(),
            });
            if v.is_empty() || v.len() != t.dim || v.iter().any(|x| !x.is_finite()) {
                return Err(Error::invalid(format!(
                    "embedding row {} ({token:?}) has {} values, expected {} finite values",
                    i + 1,
                    v.len(),
                    t.dim
                )));
            }
            t.push(token, &v);
        }
        table.ok_or(Error::Empty("embedding table"))
    }

    fn push(&mut self, token: String, v: &[f64]) {
        if self.index.contains_key(&token) {
            log::debug!("duplicate embedding for {token:?} ignored");
            return;
        }
        self.index.insert(token, self.index.len());
        self.vectors.extend_from_slice(v);
    }

    /// One `token v1 ... vd` line per token, space separated.
    pub fn parse(text: &str) -> Result<Self> {
        let mut table: Option<EmbeddingTable> = None;
        for (n, line) in text.lines().enumerate() {
            let line_no = n + 1;
            let mut fields = line.split_ascii_whitespace();
            let Some(token) = fields.next() else { continue };
            let values = fields
                .map(|f| match f.parse::<f64>() {
                    Ok(x) if x.is_finite() => Ok(x),
                    _ => Err(Error::parse("embedding file", line_no, format!("bad value {f:?}"))),
                })
                .collect::<Result<Vec<f64>>>()?;
            if values.is_empty() {
                return Err(Error::parse("embedding file", line_no, "token without vector"));
            }
            let t = table.get_or_insert_with(|| EmbeddingTable {
                dim: values.len(),
                index: HashMap::new(),
                vectors: Vec::new(),
            });
            if values.len() != t.dim {
                return Err(Error::parse(
                    "embedding file",
                    line_no,
                    format!("{} values, expected {}", values.len(), t.dim),
                ));
            }
            t.push(token.to_string(), &values);
        }
        table.ok_or(Error::Empty("embedding file"))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.index.len()
    }

    pub fn is_empty(&self) -> bool {
        self.index.is_empty()
    }

    pub fn get(&self, token: &str) -> Option<&[f64]> {
        self.index
            .get(token)
            .map(|&i| &self.vectors[i * self.dim..(i + 1) * self.dim])
    }

    /// Unweighted mean of the in-table tokens, with multiplicity.
    fn mean_of<'a>(&self, tokens: impl IntoIterator<Item = &'a str>) -> Option<Vec<f64>> {
        let mut sum = vec![0.0; self.dim];
        let mut n = 0usize;
        for t in tokens {
            if let Some(v) = self.get(t) {
                sum.iter_mut().zip(v).for_each(|(s, x)| *s += x);
                n += 1;
            }
        }
        (n > 0).then(|| sum.into_iter().map(|s| s / n as f64).collect())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EmojiPrototype {
    pub class_index: ClassIndex,
    pub vector: Vec<f64>,
    /// The in-table words the vector averages, in order.
    pub source_terms: Vec<String>,
}

/// Mean vector of the entry's name words and description terms, after the
/// text tokenizer. Absent when none of them is in the table.
pub fn emoji_prototype(entry: &EmojiEntry, table: &EmbeddingTable) -> Option<EmojiPrototype> {
    let words: Vec<String> = tokenize(&entry.name.replace('_', " "))
        .into_iter()
        .chain(entry.description_terms.iter().flat_map(|t| tokenize(t)))
        .filter(|w| table.get(w).is_some())
        .collect();
    let vector = table.mean_of(words.iter().map(String::as_str))?;
    Some(EmojiPrototype {
        class_index: entry.class_index,
        vector,
        source_terms: words,
    })
}

pub fn prototypes(catalog: &EmojiCatalog, table: &EmbeddingTable) -> Vec<EmojiPrototype> {
    catalog
        .entries()
        .iter()
        .filter_map(|e| emoji_prototype(e, table))
        .collect()
}

pub fn embed_text(stripped_text: &str, table: &EmbeddingTable) -> Option<Vec<f64>> {
    let tokens = tokenize(stripped_text);
    table.mean_of(tokens.iter().map(String::as_str))
}

/// Visual concept detections for one image.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConceptScores(Vec<(String, f64)>);

impl ConceptScores {
    pub fn new(concepts: Vec<(String, f64)>) -> Result<Self> {
        for (name, conf) in &concepts {
            if name.trim().is_empty() {
                return Err(Error::invalid("empty concept name"));
            }
            if !(0.0..=1.0).contains(conf) {
                return Err(Error::invalid(format!("confidence {conf} of {name:?} outside [0, 1]")));
            }
        }
        Ok(ConceptScores(concepts))
    }

    /// One concept per feature dimension, with the feature value clamped to
    /// [0, 1] as confidence.
    pub fn from_features(features: &[f64], names: &[String]) -> Result<Self> {
        if features.len() != names.len() {
            return Err(Error::ShapeMismatch {
                what: "concept names",
                expected: features.len(),
                found: names.len(),
            });
        }
        Self::new(
            names
                .iter()
                .zip(features)
                .map(|(n, &f)| (n.clone(), f.clamp(0.0, 1.0)))
                .collect(),
        )
    }

    pub fn concepts(&self) -> &[(String, f64)] {
        &self.0
    }
}

/// Lines of `id<TAB>name:confidence<TAB>name:confidence...`. Names may
/// contain ':'; the value follows the last one.
pub fn parse_concept_file(text: &str) -> Result<Vec<(String, ConceptScores)>> {
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line_no = n + 1;
        if line.trim().is_empty() {
            continue;
        }
        let mut fields = line.split('\t');
        let id = fields.next().unwrap_or_default().trim();
        if id.is_empty() {
            return Err(Error::parse("concept file", line_no, "missing document id"));
        }
        let pairs = fields
            .filter(|f| !f.is_empty())
            .map(|f| {
                let (name, conf) = f
                    .rsplit_once(':')
                    .ok_or_else(|| Error::parse("concept file", line_no, format!("expected name:confidence, got {f:?}")))?;
                let conf: f64 = conf
                    .trim()
                    .parse()
                    .map_err(|_| Error::parse("concept file", line_no, format!("bad confidence {conf:?}")))?;
                Ok((name.trim().to_string(), conf))
            })
            .collect::<Result<Vec<_>>>()?;
        let scores = ConceptScores::new(pairs).map_err(|e| Error::parse("concept file", line_no, e.to_string()))?;
        out.push((id.to_string(), scores));
    }
    Ok(out)
}

/// Confidence-weighted mean of the `top_n` most confident in-table concepts.
pub fn embed_image_concepts(concepts: &ConceptScores, table: &EmbeddingTable, top_n: usize) -> Option<Vec<f64>> {
    let mut ranked: Vec<(&str, f64, Vec<f64>)> = concepts
        .0
        .iter()
        .filter_map(|(name, conf)| embed_text(name, table).map(|v| (name.as_str(), *conf, v)))
        .collect();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1));
    ranked.truncate(top_n);
    let total: f64 = ranked.iter().map(|r| r.1).sum();
    if total <= 0.0 {
        return None;
    }
    let mut sum = vec![0.0; table.dim()];
    for (_, conf, v) in &ranked {
        sum.iter_mut().zip(v).for_each(|(s, x)| *s += conf * x);
    }
    Some(sum.into_iter().map(|s| s / total).collect())
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Similarity {
    #[default]
    Cosine,
    Dot,
}

impl std::str::FromStr for Similarity {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cosine" => Ok(Similarity::Cosine),
            "dot" => Ok(Similarity::Dot),
            _ => Err(Error::invalid(format!("unknown similarity {s:?}"))),
        }
    }
}

/// Per-class similarity to the input. Classes without a prototype score -1.
pub fn zeroshot_scores(
    input: &[f64],
    prototypes: &[EmojiPrototype],
    classes: usize,
    similarity: Similarity,
) -> Result<ScoreVector> {
    let input_norm = norm(input);
    if input_norm == 0.0 || !input_norm.is_finite() {
        return Err(Error::invalid("zero-shot input vector is zero"));
    }
    let mut scores = vec![MISSING_PROTOTYPE_SCORE; classes];
    for p in prototypes {
        if p.vector.len() != input.len() {
            return Err(Error::ShapeMismatch {
                what: "prototype vector",
                expected: input.len(),
                found: p.vector.len(),
            });
        }
        let slot = scores
            .get_mut(p.class_index)
            .ok_or_else(|| Error::invalid(format!("prototype class {} outside 0..{classes}", p.class_index)))?;
        *slot = match similarity {
            Similarity::Dot => dot(input, &p.vector),
            Similarity::Cosine => {
                let pn = norm(&p.vector);
                if pn == 0.0 {
                    0.0
                } else {
                    (dot(input, &p.vector) / (input_norm * pn)).clamp(-1.0, 1.0)
                }
            }
        };
    }
    Ok(ScoreVector::new(scores))
}

fn min_max(s: &ScoreVector) -> Vec<f64> {
    let v = s.values();
    let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if hi > lo {
        v.iter().map(|x| (x - lo) / (hi - lo)).collect()
    } else {
        vec![0.0; v.len()]
    }
}

/// Fuses min-max normalized text and image similarities. With one modality
/// absent the other is returned unchanged.
pub fn zeroshot_fused(
    text: Option<&ScoreVector>,
    image: Option<&ScoreVector>,
    alpha: FusionWeight,
) -> Result<ScoreVector> {
    match (text, image) {
        (Some(t), Some(i)) => {
            if t.len() != i.len() {
                return Err(Error::ShapeMismatch {
                    what: "zero-shot score vectors",
                    expected: t.len(),
                    found: i.len(),
                });
            }
            let a = alpha.value();
            Ok(ScoreVector::new(
                min_max(t)
                    .into_iter()
                    .zip(min_max(i))
                    .map(|(x, y)| a * x + (1.0 - a) * y)
                    .collect(),
            ))
        }
        (Some(s), None) | (None, Some(s)) => Ok(s.clone()),
        (None, None) => Err(Error::MissingModality("zero-shot fusion needs at least one modality".into())),
    }
}

/// Where a document's visual concepts come from.
#[derive(Clone, Debug, Default)]
pub enum ConceptSource {
    #[default]
    None,
    ById(HashMap<String, ConceptScores>),
    /// Feature dimension `k` is the confidence of concept `names[k]`.
    FromFeatures(Vec<String>),
}

#[derive(Clone, Debug)]
pub struct ZeroShotScorer {
    pub table: EmbeddingTable,
    pub prototypes: Vec<EmojiPrototype>,
    pub classes: usize,
    pub similarity: Similarity,
    pub alpha: FusionWeight,
    pub top_n: usize,
    pub concepts: ConceptSource,
    pub use_text: bool,
}

impl ZeroShotScorer {
    pub fn new(catalog: &EmojiCatalog, table: EmbeddingTable) -> Self {
        ZeroShotScorer {
            prototypes: prototypes(catalog, &table),
            table,
            classes: catalog.len(),
            similarity: Similarity::Cosine,
            alpha: FusionWeight::new(0.5).unwrap(),
            top_n: DEFAULT_TOP_CONCEPTS,
            concepts: ConceptSource::None,
            use_text: true,
        }
    }

    fn similarities(&self, v: Option<Vec<f64>>) -> Option<ScoreVector> {
        zeroshot_scores(&v?, &self.prototypes, self.classes, self.similarity).ok()
    }

    pub fn text_scores(&self, text: &str) -> Option<ScoreVector> {
        self.similarities(embed_text(text, &self.table))
    }

    pub fn concept_scores(&self, concepts: &ConceptScores) -> Option<ScoreVector> {
        self.similarities(embed_image_concepts(concepts, &self.table, self.top_n))
    }

    pub fn image_scores(&self, doc: &Document) -> Result<Option<ScoreVector>> {
        let concepts = match &self.concepts {
            ConceptSource::None => return Ok(None),
            ConceptSource::ById(map) => match map.get(&doc.id) {
                Some(c) => c.clone(),
                None => return Ok(None),
            },
            ConceptSource::FromFeatures(names) => match &doc.image_features {
                Some(f) => ConceptScores::from_features(f, names)?,
                None => return Ok(None),
            },
        };
        Ok(self.concept_scores(&concepts))
    }

    /// Text and image similarities fused; a document with nothing in the
    /// table scores -1 everywhere.
    pub fn score_parts(&self, text: Option<ScoreVector>, image: Option<ScoreVector>) -> ScoreVector {
        zeroshot_fused(text.as_ref(), image.as_ref(), self.alpha)
            .unwrap_or_else(|_| ScoreVector::new(vec![MISSING_PROTOTYPE_SCORE; self.classes]))
    }
}

impl Scorer for ZeroShotScorer {
    fn tag(&self) -> String {
        match self.concepts {
            ConceptSource::None => "zeroshot-text".into(),
            _ if !self.use_text => "zeroshot-image".into(),
            _ => format!("zeroshot-fused(alpha={})", self.alpha.value()),
        }
    }

    fn num_classes(&self) -> usize {
        self.classes
    }

    fn score(&self, doc: &Document) -> Result<ScoreVector> {
        let text = if self.use_text {
            self.text_scores(&doc.stripped_text)
        } else {
            None
        };
        Ok(self.score_parts(text, self.image_scores(doc)?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table(rows: &[(&str, &[f64])]) -> EmbeddingTable {
        EmbeddingTable::from_rows(rows.iter().map(|(t, v)| (t.to_string(), v.to_vec()))).unwrap()
    }

    fn entry(name: &str, terms: &[&str]) -> EmojiEntry {
        let catalog = EmojiCatalog::from_entries([(
            crate::emoji::EmojiSequence::from_str_chars("🌵").unwrap(),
            name.to_string(),
            terms.iter().map(|s| s.to_string()).collect::<Vec<_>>(),
        )])
        .unwrap();
        catalog.entries()[0].clone()
    }

    #[test]
    fn parse_embedding_file() {
        let t = EmbeddingTable::parse("a 1 0 0 0\nb 0 1 0 0\n\nc 0 0 1 0.5\n").unwrap();
        assert_eq!((t.len(), t.dim()), (3, 4));
        assert_eq!(t.get("c").unwrap(), &[0.0, 0.0, 1.0, 0.5]);
        match EmbeddingTable::parse("a 1 0\nb 1 0 0\n") {
            Err(Error::Parse { line: 2, .. }) => {}
            other => panic!("{other:?}"),
        }
        assert!(matches!(EmbeddingTable::parse(" \n"), Err(Error::Empty(_))));
        assert!(EmbeddingTable::parse("a\n").is_err());
        assert!(EmbeddingTable::parse("a 1 nan\n").is_err());
    }

    #[test]
    fn prototypes_are_means() {
        let t = table(&[("cactus", &[3.0, 4.0]), ("a", &[1.0, 0.0]), ("b", &[0.0, 1.0])]);
        let p = emoji_prototype(&entry("xx", &["cactus"]), &t).unwrap();
        assert_eq!(p.vector, vec![3.0, 4.0]);
        let p = emoji_prototype(&entry("a", &["b"]), &t).unwrap();
        assert_eq!(p.vector, vec![0.5, 0.5]);
        assert_eq!(p.source_terms, vec!["a", "b"]);
        assert!(emoji_prototype(&entry("zz", &["qq"]), &t).is_none());
    }

    #[test]
    fn text_embedding() {
        let t = table(&[("a", &[1.0, 0.0]), ("b", &[0.0, 1.0])]);
        assert_eq!(embed_text("A", &t).unwrap(), vec![1.0, 0.0]);
        assert_eq!(embed_text("a b unknown", &t).unwrap(), vec![0.5, 0.5]);
        assert_eq!(embed_text("q r", &t), None);
    }

    #[test]
    fn concept_embedding() {
        let t = table(&[("sea", &[1.0, 0.0]), ("sky", &[0.0, 1.0])]);
        let one = ConceptScores::new(vec![("sea".into(), 1.0)]).unwrap();
        assert_eq!(embed_image_concepts(&one, &t, 10).unwrap(), vec![1.0, 0.0]);
        let two = ConceptScores::new(vec![("sea".into(), 0.75), ("sky".into(), 0.25)]).unwrap();
        assert_eq!(embed_image_concepts(&two, &t, 10).unwrap(), vec![0.75, 0.25]);
        assert_eq!(embed_image_concepts(&two, &t, 1).unwrap(), vec![1.0, 0.0]);
        let oov = ConceptScores::new(vec![("dog".into(), 0.9)]).unwrap();
        assert_eq!(embed_image_concepts(&oov, &t, 10), None);
        assert!(ConceptScores::new(vec![("x".into(), 1.5)]).is_err());
        assert!(ConceptScores::new(vec![(" ".into(), 0.5)]).is_err());
    }

    #[test]
    fn concept_file() {
        let parsed = parse_concept_file("d1\tsea:0.9\tclock:face:0.25\n\nd2\n").unwrap();
        assert_eq!(parsed.len(), 2);
        assert_eq!(parsed[0].1.concepts()[1], ("clock:face".to_string(), 0.25));
        assert!(parsed[1].1.concepts().is_empty());
        for bad in ["d1\tsea\n", "d1\tsea:x\n", "\tsea:0.5\n", "d1\tsea:2\n"] {
            assert!(matches!(parse_concept_file(bad), Err(Error::Parse { line: 1, .. })), "{bad:?}");
        }
    }

    fn proto(class_index: usize, v: &[f64]) -> EmojiPrototype {
        EmojiPrototype {
            class_index,
            vector: v.to_vec(),
            source_terms: vec![],
        }
    }

    #[test]
    fn cosine_angles() {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let ps = [proto(0, &[1.0, 0.0]), proto(1, &[h, h]), proto(2, &[0.0, 2.0])];
        let s = zeroshot_scores(&[3.0, 0.0], &ps, 4, Similarity::Cosine).unwrap();
        let v = s.values();
        assert!((v[0] - 1.0).abs() < 1e-12 && (v[1] - h).abs() < 1e-12 && v[2].abs() < 1e-12);
        assert_eq!(v[3], MISSING_PROTOTYPE_SCORE);
        assert_eq!(s.ranking(), vec![0, 1, 2, 3]);
        assert!(zeroshot_scores(&[0.0, 0.0], &ps, 4, Similarity::Cosine).is_err());
        let d = zeroshot_scores(&[3.0, 0.0], &ps, 3, Similarity::Dot).unwrap();
        assert_eq!(d.values()[0], 3.0);
    }

    #[test]
    fn fused_policy() {
        let a = ScoreVector::new(vec![0.2, 0.6, 1.0]);
        let b = ScoreVector::new(vec![1.0, 0.6, 0.2]);
        let half = FusionWeight::new(0.5).unwrap();
        let f = zeroshot_fused(Some(&a), Some(&b), half).unwrap();
        assert!(f.values().iter().all(|v| (v - 0.5).abs() < 1e-15));
        assert_eq!(zeroshot_fused(Some(&a), None, half).unwrap(), a);
        assert_eq!(zeroshot_fused(None, Some(&b), half).unwrap(), b);
        assert!(zeroshot_fused(None, None, half).is_err());
        let short = ScoreVector::new(vec![0.0]);
        assert!(zeroshot_fused(Some(&a), Some(&short), half).is_err());
    }
}
