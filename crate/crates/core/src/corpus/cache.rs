//! Binary corpus cache.
//!
//! ```text
//! "EMJC1"
//! u32  number of classes
//! u32  image feature width (0 = no image features)
//! u64  document count
//! per document: u32 body length, then the body:
//!     str  id
//!     str  stripped text
//!     u32  annotation count, then that many u32 class indices (appearance order)
//!     u8   1 if image features follow (width × f64), else 0
//! ```

use std::path::Path;

use super::{Corpus, Document};
use crate::codec::{Decoder, Encoder};
use crate::{Error, Result};

pub const CORPUS_MAGIC: &[u8; 5] = b"EMJC1";

/// Largest class count a cache may declare. Per-class tables are allocated
/// up front, so an unchecked header could ask for gigabytes.
pub const MAX_CACHE_CLASSES: usize = 1 << 20;

pub fn encode_corpus(corpus: &Corpus) -> Vec<u8> {
    let mut enc = Encoder::new(CORPUS_MAGIC);
    enc.len32(corpus.num_classes())
        .len32(corpus.image_dim().unwrap_or(0))
        .u64(corpus.len() as u64);
    for doc in corpus.documents() {
        let mut body = Encoder::default();
        body.str(&doc.id).str(&doc.stripped_text);
        body.len32(doc.annotation_multiset.len());
        for &c in &doc.annotation_multiset {
            body.len32(c);
        }
        match &doc.image_features {
            Some(f) => body.u8(1).f64s(f),
            None => body.u8(0),
        };
        let body = body.finish();
        enc.len32(body.len()).bytes(&body);
    }
    enc.finish()
}

pub fn decode_corpus(bytes: &[u8]) -> Result<Corpus> {
    let mut dec = Decoder::new("corpus cache", bytes, CORPUS_MAGIC)?;
    let num_classes = dec.len32()?;
    if num_classes > MAX_CACHE_CLASSES {
        return Err(dec.error(format!("{num_classes} classes exceeds the limit of {MAX_CACHE_CLASSES}")));
    }
    let image_dim = match dec.len32()? {
        0 => None,
        d => Some(d),
    };
    let count = dec.u64()?;
    let mut documents = Vec::new();
    for _ in 0..count {
        let len = dec.len32()?;
        let mut body = dec.sub(len)?;
        let id = body.str()?;
        let text = body.str()?;
        let n = body.len32()?;
        if n > body.remaining() / 4 {
            return Err(body.error("annotation count exceeds document body"));
        }
        let multiset = (0..n).map(|_| body.len32()).collect::<Result<Vec<_>>>()?;
        let features = match body.u8()? {
            0 => None,
            1 => {
                let d = image_dim.ok_or_else(|| body.error("features in a corpus without image width"))?;
                Some(body.f64s(d)?)
            }
            other => return Err(body.error(format!("bad feature flag {other}"))),
        };
        body.finish()?;
        documents.push(Document::new(id, text, multiset, features));
    }
    dec.finish()?;
    Corpus::new(documents, num_classes, image_dim)
        .map_err(|e| Error::decode("corpus cache", e.to_string()))
}

pub fn write_corpus(path: impl AsRef<Path>, corpus: &Corpus) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, encode_corpus(corpus)).map_err(|e| Error::io(path, e))
}

pub fn read_corpus(path: impl AsRef<Path>) -> Result<Corpus> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_corpus(&bytes)
}
