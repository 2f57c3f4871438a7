use crate::corpus::Document;
use crate::Result;

/// Per-class scores for one input: a softmax distribution or, for zero-shot
/// scoring, raw similarities.
#[derive(Clone, Debug, PartialEq)]
pub struct ScoreVector(Vec<f64>);

impl ScoreVector {
    pub fn new(values: Vec<f64>) -> Self {
        ScoreVector(values)
    }

    pub fn uniform(classes: usize) -> Self {
        ScoreVector(vec![1.0 / classes as f64; classes])
    }

    /// Numerically stable softmax of `logits`.
    pub fn softmax(logits: &[f64]) -> Self {
        let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = logits.iter().map(|&z| (z - max).exp()).collect();
        let total: f64 = exps.iter().sum();
        ScoreVector(exps.into_iter().map(|e| e / total).collect())
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn sum(&self) -> f64 {
        self.0.iter().sum()
    }

    /// Class indices by descending score, ties by ascending index.
    pub fn ranking(&self) -> Vec<usize> {
        rank_descending(&self.0)
    }

    pub fn top_k(&self, k: usize) -> Vec<(usize, f64)> {
        self.ranking()
            .into_iter()
            .take(k)
            .map(|i| (i, self.0[i]))
            .collect()
    }

    pub fn argmax(&self) -> Option<usize> {
        self.ranking().first().copied()
    }
}

impl From<Vec<f64>> for ScoreVector {
    fn from(values: Vec<f64>) -> Self {
        ScoreVector(values)
    }
}

/// Indices sorted by descending value; equal values keep ascending index order.
pub fn rank_descending(values: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));
    order
}

/// Anything that maps a document to per-class scores.
pub trait Scorer: Send + Sync {
    /// Provenance label recorded in score indices.
    fn tag(&self) -> String;

    fn num_classes(&self) -> usize;

    fn score(&self, doc: &Document) -> Result<ScoreVector>;
}

impl<S: Scorer + ?Sized> Scorer for &S {
    fn tag(&self) -> String {
        (**self).tag()
    }

    fn num_classes(&self) -> usize {
        (**self).num_classes()
    }

    fn score(&self, doc: &Document) -> Result<ScoreVector> {
        (**self).score(doc)
    }
}
