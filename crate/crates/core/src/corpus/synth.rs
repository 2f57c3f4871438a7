//! Synthetic emoji corpora with planted, recorded correlations.
//!
//! Class `j` owns a signature token that is planted in the text of its
//! documents with probability `strength`; otherwise a uniformly random class's
//! signature is planted instead, so at strength 0 text and labels are
//! independent. Optional image features are one-hot on a cue class plus
//! Gaussian noise. Classes can be made uninformative for a modality: their
//! cue is then drawn uniformly from the other uninformative classes, so the
//! modality reveals the group but not the class.

use std::collections::HashSet;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{ingest_records, Corpus, IngestOptions, RawRecord};
use crate::emoji::{ClassIndex, EmojiCatalog, EmojiSequence};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImageSynth {
    /// Feature width; must be at least the number of classes.
    pub dim: usize,
    pub noise: f64,
    pub strength: f64,
    /// Classes whose image cue is their own class; `None` means all.
    pub informative: Option<Vec<ClassIndex>>,
}

impl ImageSynth {
    pub fn aligned(dim: usize, noise: f64) -> Self {
        ImageSynth {
            dim,
            noise,
            strength: 1.0,
            informative: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub classes: usize,
    pub docs: usize,
    pub strength: f64,
    /// Filler tokens per document.
    pub text_len: usize,
    pub filler_vocab: usize,
    /// Probability that a document carries a second, distinct class.
    pub extra_label_prob: f64,
    /// Classes whose text cue is their own signature; `None` means all.
    pub text_informative: Option<Vec<ClassIndex>>,
    pub image: Option<ImageSynth>,
}

impl SynthConfig {
    pub fn new(classes: usize, docs: usize, strength: f64) -> Self {
        SynthConfig {
            classes,
            docs,
            strength,
            text_len: 8,
            filler_vocab: 200,
            extra_label_prob: 0.0,
            text_informative: None,
            image: None,
        }
    }

    pub fn with_image(mut self, image: ImageSynth) -> Self {
        self.image = Some(image);
        self
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TruthRecord {
    pub id: String,
    pub labels: Vec<ClassIndex>,
    /// Classes whose signatures were planted in the text.
    pub text_cues: Vec<ClassIndex>,
    pub image_cue: Option<ClassIndex>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub signatures: Vec<String>,
    pub filler_words: Vec<String>,
    pub class_counts: Vec<usize>,
    pub documents: Vec<TruthRecord>,
}

#[derive(Clone, Debug)]
pub struct SyntheticCorpus {
    pub config: SynthConfig,
    pub catalog: EmojiCatalog,
    pub records: Vec<RawRecord>,
    pub truth: GroundTruth,
    pub corpus: Corpus,
}

const CONSONANTS: &[u8] = b"bdfgklmnprstv";
const VOWELS: &[u8] = b"aeiou";

/// Pronounceable word for `n`, at least two syllables, never starting with `z`.
fn syllable_word(n: usize) -> String {
    let base = CONSONANTS.len() * VOWELS.len();
    let mut n = n + base;
    let mut syllables = Vec::new();
    loop {
        let s = n % base;
        syllables.push([CONSONANTS[s / VOWELS.len()], VOWELS[s % VOWELS.len()]]);
        n /= base;
        if n == 0 {
            break;
        }
    }
    syllables.iter().rev().flatten().map(|&b| b as char).collect()
}

pub fn signature_token(class: ClassIndex) -> String {
    format!("z{}", syllable_word(class))
}

pub fn filler_word(k: usize) -> String {
    syllable_word(k)
}

fn emoji_pool() -> impl Iterator<Item = char> {
    (0x1F300..=0x1F5FF)
        .filter(|c| !(0x1F3FB..=0x1F3FF).contains(c))
        .chain(0x1F600..=0x1F64F)
        .chain(0x1F680..=0x1F6C5)
        .chain(0x1F900..=0x1F9FF)
        .filter_map(char::from_u32)
}

/// Catalog of `classes` single-codepoint emoji named after their signatures.
pub fn synthetic_catalog(classes: usize) -> Result<EmojiCatalog> {
    let pool: Vec<char> = emoji_pool().take(classes).collect();
    if pool.len() < classes {
        return Err(Error::invalid(format!(
            "at most {} synthetic classes are supported",
            pool.len()
        )));
    }
    EmojiCatalog::from_entries(pool.into_iter().enumerate().map(|(j, c)| {
        let sig = signature_token(j);
        (EmojiSequence::new(vec![c]).unwrap(), sig.clone(), vec![sig])
    }))
}

fn informative_set(spec: &Option<Vec<ClassIndex>>, classes: usize) -> Result<Vec<bool>> {
    let mut mask = vec![spec.is_none(); classes];
    for &c in spec.iter().flatten() {
        *mask
            .get_mut(c)
            .ok_or_else(|| Error::invalid(format!("informative class {c} out of range")))? = true;
    }
    Ok(mask)
}

fn cue<R: Rng>(label: ClassIndex, strength: f64, informative: &[bool], rng: &mut R) -> ClassIndex {
    if informative[label] {
        if rng.random::<f64>() < strength {
            label
        } else {
            rng.random_range(0..informative.len())
        }
    } else {
        let pool: Vec<ClassIndex> = (0..informative.len()).filter(|&c| !informative[c]).collect();
        *pool.choose(rng).unwrap()
    }
}

pub fn generate_synthetic(config: &SynthConfig, seed: u64) -> Result<SyntheticCorpus> {
    let c = config.classes;
    if c < 2 || config.docs < c {
        return Err(Error::invalid("synthetic corpus needs at least 2 classes and as many documents as classes"));
    }
    if !(0.0..=1.0).contains(&config.strength) || !(0.0..=1.0).contains(&config.extra_label_prob) {
        return Err(Error::invalid("strength and extra_label_prob must lie in [0, 1]"));
    }
    if config.filler_vocab == 0 {
        return Err(Error::invalid("filler vocabulary must not be empty"));
    }
    let text_informative = informative_set(&config.text_informative, c)?;
    let image_informative = match &config.image {
        Some(image) => {
            if image.dim < c {
                return Err(Error::invalid("image dimension must be at least the number of classes"));
            }
            if !(0.0..=1.0).contains(&image.strength) || !(image.noise >= 0.0) {
                return Err(Error::invalid("image strength must lie in [0, 1] and noise be non-negative"));
            }
            Some(informative_set(&image.informative, c)?)
        }
        None => None,
    };

    let catalog = synthetic_catalog(c)?;
    let signatures: Vec<String> = (0..c).map(signature_token).collect();
    let fillers: Vec<String> = (0..config.filler_vocab).map(filler_word).collect();
    let emoji: Vec<String> = catalog.entries().iter().map(|e| e.sequence.to_string()).collect();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut seen_texts = HashSet::new();
    let mut records = Vec::with_capacity(config.docs);
    let mut truth_docs = Vec::with_capacity(config.docs);
    let mut class_counts = vec![0usize; c];

    for i in 0..config.docs {
        let mut labels = vec![i % c];
        if rng.random::<f64>() < config.extra_label_prob {
            let mut other = rng.random_range(0..c - 1);
            if other >= labels[0] {
                other += 1;
            }
            labels.push(other);
        }
        labels.sort_unstable();
        let text_cues: Vec<ClassIndex> = labels
            .iter()
            .map(|&l| cue(l, config.strength, &text_informative, &mut rng))
            .collect();
        let (image_cue, image_features) = match (&config.image, &image_informative) {
            (Some(image), Some(mask)) => {
                let m = cue(labels[0], image.strength, mask, &mut rng);
                let features: Vec<f64> = (0..image.dim)
                    .map(|k| {
                        let noise: f64 = rng.sample(StandardNormal);
                        (if k == m { 1.0 } else { 0.0 }) + image.noise * noise
                    })
                    .collect();
                (Some(m), Some(features))
            }
            _ => (None, None),
        };

        let mut text = None;
        for _ in 0..1000 {
            let mut tokens: Vec<&str> = (0..config.text_len)
                .map(|_| fillers[rng.random_range(0..fillers.len())].as_str())
                .collect();
            for &cue in &text_cues {
                let at = rng.random_range(0..=tokens.len());
                tokens.insert(at, &signatures[cue]);
            }
            for &label in &labels {
                let at = rng.random_range(0..=tokens.len());
                tokens.insert(at, &emoji[label]);
            }
            let candidate = tokens.join(" ");
            if seen_texts.insert(candidate.clone()) {
                text = Some(candidate);
                break;
            }
        }
        let text = text.ok_or_else(|| {
            Error::invalid("could not generate distinct texts; raise text_len or filler_vocab")
        })?;

        for &l in &labels {
            class_counts[l] += 1;
        }
        let id = format!("syn{i:06}");
        truth_docs.push(TruthRecord {
            id: id.clone(),
            labels,
            text_cues,
            image_cue,
        });
        records.push(RawRecord {
            id,
            text,
            image_features,
        });
    }

    let corpus = ingest_records(
        records.iter().cloned().enumerate().map(|(i, r)| (i + 1, r)),
        &catalog,
        IngestOptions {
            image_dim: config.image.as_ref().map(|im| im.dim),
            ..Default::default()
        },
    )?;

    Ok(SyntheticCorpus {
        config: config.clone(),
        catalog,
        records,
        truth: GroundTruth {
            signatures,
            filler_words: fillers,
            class_counts,
            documents: truth_docs,
        },
        corpus,
    })
}

impl SyntheticCorpus {
    /// The records as line-delimited JSON, the corpus input format.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for r in &self.records {
            out.push_str(&serde_json::to_string(r).expect("records serialize"));
            out.push('\n');
        }
        out
    }

    /// Word vectors for every signature and for the first `fillers_in_table`
    /// filler words, drawn from a standard normal.
    pub fn embedding_rows(&self, dim: usize, fillers_in_table: usize, seed: u64) -> Vec<(String, Vec<f64>)> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        self.truth
            .signatures
            .iter()
            .chain(self.truth.filler_words.iter().take(fillers_in_table))
            .map(|token| {
                let v = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
                (token.clone(), v)
            })
            .collect()
    }
}
