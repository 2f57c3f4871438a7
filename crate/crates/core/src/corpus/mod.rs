//! Emoji-annotated document collections.

mod cache;
mod ingest;
mod sampling;
mod split;
pub mod synth;

use std::collections::BTreeMap;
use std::hash::Hasher;

use crate::emoji::ClassIndex;
use crate::{Error, Result};

pub use cache::{decode_corpus, encode_corpus, read_corpus, write_corpus, CORPUS_MAGIC};
pub use ingest::{ingest, ingest_records, parse_records, IngestOptions, RawRecord};
pub use sampling::{sampling_weights, BalancedSampler, SamplerState};
pub use split::{balanced_test_subset, image_subset, split};
pub use synth::{generate_synthetic, ImageSynth, SynthConfig, SyntheticCorpus};

#[derive(Clone, Debug, PartialEq)]
pub struct Document {
    pub id: String,
    pub stripped_text: String,
    /// Sorted, deduplicated set of annotated classes (the support of the multi-hot vector).
    pub annotation: Vec<ClassIndex>,
    /// Annotated classes in order of appearance, with multiplicity.
    pub annotation_multiset: Vec<ClassIndex>,
    pub image_features: Option<Vec<f64>>,
}

impl Document {
    pub fn new(
        id: impl Into<String>,
        stripped_text: impl Into<String>,
        annotation_multiset: Vec<ClassIndex>,
        image_features: Option<Vec<f64>>,
    ) -> Self {
        let mut annotation = annotation_multiset.clone();
        annotation.sort_unstable();
        annotation.dedup();
        Document {
            id: id.into(),
            stripped_text: stripped_text.into(),
            annotation,
            annotation_multiset,
            image_features,
        }
    }

    pub fn annotation_vector(&self, num_classes: usize) -> Vec<bool> {
        let mut y = vec![false; num_classes];
        for &c in &self.annotation {
            y[c] = true;
        }
        y
    }

    pub fn has_class(&self, class: ClassIndex) -> bool {
        self.annotation.binary_search(&class).is_ok()
    }

    /// 64-bit FNV hash of the feature vector quantized to 1e-6.
    pub fn feature_hash(&self) -> Option<u64> {
        let features = self.image_features.as_ref()?;
        let mut hasher = fnv::FnvHasher::default();
        for &x in features {
            hasher.write_i64((x * 1e6).round() as i64);
        }
        Some(hasher.finish())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Corpus {
    documents: Vec<Document>,
    num_classes: usize,
    image_dim: Option<usize>,
    class_counts: Vec<usize>,
    annotation_set_counts: BTreeMap<Vec<ClassIndex>, usize>,
}

impl Corpus {
    /// Validates the documents and derives the class statistics.
    pub fn new(
        documents: Vec<Document>,
        num_classes: usize,
        image_dim: Option<usize>,
    ) -> Result<Self> {
        if num_classes == 0 {
            return Err(Error::invalid("corpus needs at least one class"));
        }
        let mut class_counts = vec![0; num_classes];
        let mut annotation_set_counts = BTreeMap::new();
        for doc in &documents {
            if doc.annotation.is_empty() {
                return Err(Error::invalid(format!("document {} has no emoji", doc.id)));
            }
            if let Some(&bad) = doc.annotation_multiset.iter().find(|&&c| c >= num_classes) {
                return Err(Error::invalid(format!(
                    "document {} annotates class {bad} outside 0..{num_classes}",
                    doc.id
                )));
            }
            if let Some(features) = &doc.image_features {
                match image_dim {
                    Some(d) if d == features.len() => {}
                    Some(d) => {
                        return Err(Error::ShapeMismatch {
                            what: "image features",
                            expected: d,
                            found: features.len(),
                        })
                    }
                    None => {
                        return Err(Error::invalid(format!(
                            "document {} carries image features but the corpus has none",
                            doc.id
                        )))
                    }
                }
                if features.iter().any(|x| !x.is_finite()) {
                    return Err(Error::invalid(format!(
                        "document {} has non-finite image features",
                        doc.id
                    )));
                }
            }
            for &c in &doc.annotation {
                class_counts[c] += 1;
            }
            *annotation_set_counts.entry(doc.annotation.clone()).or_insert(0) += 1;
        }
        Ok(Corpus {
            documents,
            num_classes,
            image_dim,
            class_counts,
            annotation_set_counts,
        })
    }

    pub fn documents(&self) -> &[Document] {
        &self.documents
    }

    pub fn len(&self) -> usize {
        self.documents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.documents.is_empty()
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn image_dim(&self) -> Option<usize> {
        self.image_dim
    }

    /// Number of documents annotated with each class.
    pub fn class_counts(&self) -> &[usize] {
        &self.class_counts
    }

    /// Number of documents sharing each exact annotation set.
    pub fn annotation_set_counts(&self) -> &BTreeMap<Vec<ClassIndex>, usize> {
        &self.annotation_set_counts
    }

    /// `C(y_i)`: how many documents share document `i`'s annotation set.
    pub fn annotation_set_count(&self, i: usize) -> usize {
        self.annotation_set_counts[&self.documents[i].annotation]
    }

    /// Annotation sets, one per document (the relevance input of the metrics).
    pub fn labels(&self) -> Vec<Vec<ClassIndex>> {
        self.documents.iter().map(|d| d.annotation.clone()).collect()
    }

    /// A corpus over the given document indices, in the given order.
    pub fn subset(&self, indices: &[usize]) -> Self {
        let documents = indices.iter().map(|&i| self.documents[i].clone()).collect();
        Corpus::new(documents, self.num_classes, self.image_dim)
            .expect("a subset of a valid corpus is valid")
    }

    pub fn filter(&self, keep: impl Fn(&Document) -> bool) -> Self {
        let indices: Vec<usize> = (0..self.len()).filter(|&i| keep(&self.documents[i])).collect();
        self.subset(&indices)
    }

    /// Replaces every document's annotation through `f`.
    pub fn relabel(&self, mut f: impl FnMut(usize, &Document) -> Vec<ClassIndex>) -> Result<Self> {
        let documents = self
            .documents
            .iter()
            .enumerate()
            .map(|(i, d)| {
                Document::new(d.id.clone(), d.stripped_text.clone(), f(i, d), d.image_features.clone())
            })
            .collect();
        Corpus::new(documents, self.num_classes, self.image_dim)
    }
}
