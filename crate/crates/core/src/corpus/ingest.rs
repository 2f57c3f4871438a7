use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};
use unicode_normalization::UnicodeNormalization;

use super::{Corpus, Document};
use crate::emoji::{segment, EmojiCatalog, SegmentOptions};
use crate::{Error, Result};

/// One input line: `{"id": ..., "text": ..., "image_features": [...]}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawRecord {
    pub id: String,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image_features: Option<Vec<f64>>,
}

#[derive(Clone, Copy, Debug, Default)]
pub struct IngestOptions {
    /// Expected feature width; inferred from the first record with features when unset.
    pub image_dim: Option<usize>,
    pub segment: SegmentOptions,
}

/// Parses line-delimited JSON records, skipping blank lines. Returns each
/// record with its 1-based line number.
pub fn parse_records(input: &str) -> Result<Vec<(usize, RawRecord)>> {
    let mut out = Vec::new();
    for (i, line) in input.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let record: RawRecord = serde_json::from_str(line)
            .map_err(|e| Error::parse("corpus input", i + 1, e.to_string()))?;
        out.push((i + 1, record));
    }
    Ok(out)
}

/// Segments every record, keeps those with at least one catalog emoji and
/// drops repeated texts (compared after NFC normalization).
pub fn ingest_records(
    records: impl IntoIterator<Item = (usize, RawRecord)>,
    catalog: &EmojiCatalog,
    options: IngestOptions,
) -> Result<Corpus> {
    let mut image_dim = options.image_dim;
    let mut seen = HashSet::new();
    let mut documents = Vec::new();
    for (line, record) in records {
        if let Some(features) = &record.image_features {
            let expected = *image_dim.get_or_insert(features.len());
            if features.len() != expected {
                return Err(Error::parse(
                    "corpus input",
                    line,
                    format!("image_features has {} values, expected {expected}", features.len()),
                ));
            }
            if expected == 0 {
                return Err(Error::parse("corpus input", line, "empty image_features"));
            }
        }
        let seg = segment(&record.text, catalog, options.segment);
        if seg.emoji.is_empty() {
            continue;
        }
        if !seen.insert(record.text.nfc().collect::<String>()) {
            continue;
        }
        documents.push(Document::new(
            record.id,
            seg.stripped_text.clone(),
            seg.class_indices(),
            record.image_features,
        ));
    }
    let documents_have_features = documents.iter().any(|d| d.image_features.is_some());
    Corpus::new(
        documents,
        catalog.len(),
        if documents_have_features { image_dim } else { options.image_dim },
    )
}

pub fn ingest(path: impl AsRef<Path>, catalog: &EmojiCatalog, options: IngestOptions) -> Result<Corpus> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    ingest_records(parse_records(&text)?, catalog, options)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn catalog() -> EmojiCatalog {
        EmojiCatalog::parse(
            "1F60E\tcool\tcool\n1F697\tautomobile\tcar\n1F3E5\thospital\thospital\n1F476\tbaby\tbaby\n",
        )
        .unwrap()
    }

    fn ingest_str(s: &str) -> Result<Corpus> {
        ingest_records(parse_records(s)?, &catalog(), IngestOptions::default())
    }

    #[test]
    fn drops_lines_without_emoji() {
        let corpus = ingest_str(
            "{\"id\":\"1\",\"text\":\"awesome day 😎\"}\n{\"id\":\"2\",\"text\":\"no emoji here\"}\n",
        )
        .unwrap();
        assert_eq!(corpus.len(), 1);
        assert_eq!(corpus.documents()[0].stripped_text, "awesome day ");
    }

    #[test]
    fn multi_label_annotation() {
        let corpus = ingest_str("{\"id\":\"1\",\"text\":\"in 🚗 going to 🏥\"}").unwrap();
        let doc = &corpus.documents()[0];
        assert_eq!(doc.annotation, vec![1, 2]);
        assert_eq!(doc.annotation_vector(4), vec![false, true, true, false]);
        assert_eq!(doc.stripped_text, "in  going to ");
    }

    #[test]
    fn duplicates_compare_after_nfc() {
        // "é" precomposed vs. e + combining acute
        let corpus = ingest_str(
            "{\"id\":\"1\",\"text\":\"caf\\u00e9 😎\"}\n\n{\"id\":\"2\",\"text\":\"cafe\\u0301 😎\"}\n",
        )
        .unwrap();
        assert_eq!(corpus.len(), 1);
        assert_eq!(corpus.documents()[0].id, "1");
    }

    #[test]
    fn malformed_line_has_line_number() {
        let err = ingest_str("{\"id\":\"1\",\"text\":\"😎\"}\n{not json}\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }), "{err}");
        let err = ingest_str("{\"id\":\"1\"}").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }), "{err}");
    }

    #[test]
    fn feature_length_mismatch() {
        let err = ingest_str(
            "{\"id\":\"1\",\"text\":\"😎\",\"image_features\":[1,2]}\n\
             {\"id\":\"2\",\"text\":\"🚗\",\"image_features\":[1,2,3]}\n",
        )
        .unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }), "{err}");

        let corpus = ingest_str("{\"id\":\"1\",\"text\":\"😎\",\"image_features\":[1,2]}").unwrap();
        assert_eq!(corpus.image_dim(), Some(2));
    }
}
