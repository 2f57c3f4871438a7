//! Emoji as a standalone modality.
//!
//! This crate covers the whole pipeline around emoji-annotated documents:
//!
//! * [`emoji`]: catalog loading and unicode-correct extraction of emoji from text,
//! * [`corpus`]: ingestion, splits, balanced sampling and synthetic corpora,
//! * [`text_model`] and [`vision_model`]: supervised emoji predictors,
//! * [`fusion`]: late fusion of per-modality score vectors,
//! * [`zeroshot`]: scoring of unseen emoji from their descriptions,
//! * [`metrics`]: Top-k accuracy, msAP and per-query mAP,
//! * [`retrieval`]: query-by-emoji over a precomputed score index.

pub mod codec;
pub mod corpus;
pub mod emoji;
mod error;
pub mod fusion;
pub mod linalg;
pub mod metrics;
pub mod retrieval;
pub mod scores;
pub mod text_model;
pub mod tokenize;
pub mod train;
pub mod vision_model;
pub mod zeroshot;

pub use error::{Error, Result};
pub use scores::ScoreVector;
