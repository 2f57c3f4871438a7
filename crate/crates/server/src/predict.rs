use emojimodal::corpus::Document;
use emojimodal::emoji::{segment, EmojiCatalog, SegmentOptions};
use emojimodal::fusion::{fuse, FusionWeight};
use emojimodal::text_model::TextClassifier;
use emojimodal::vision_model::LinearSoftmaxModel;
use emojimodal::zeroshot::{zeroshot_fused, ZeroShotScorer, MISSING_PROTOTYPE_SCORE};
use emojimodal::ScoreVector;
use serde::{Deserialize, Serialize};

use crate::error::ApiError;

pub const DEFAULT_TOP_K: usize = 5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Text,
    Image,
    Fused,
    Zeroshot,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PredictRequest {
    pub text: Option<String>,
    pub image_features: Option<Vec<f64>>,
    pub alpha: Option<f64>,
    pub mode: Option<Mode>,
    pub k: Option<usize>,
}

#[derive(Debug, Serialize, Deserialize, PartialEq)]
pub struct Prediction {
    pub emoji: String,
    pub name: String,
    pub score: f64,
}

#[derive(Debug, Serialize, Deserialize, PartialEq)]
pub struct PredictResponse {
    pub mode: Mode,
    pub topk: Vec<Prediction>,
}

/// The models behind `POST /predict`. Any of them may be absent.
#[derive(Default)]
pub struct Predictor {
    pub text: Option<TextClassifier>,
    pub image: Option<LinearSoftmaxModel>,
    pub zeroshot: Option<ZeroShotScorer>,
    /// Fusion weight used when a request does not carry one.
    pub alpha: Option<f64>,
}

impl Predictor {
    fn default_mode(&self, req: &PredictRequest) -> Mode {
        let text = req.text.is_some() && self.text.is_some();
        let image = req.image_features.is_some() && self.image.is_some();
        match (text, image) {
            (true, true) => Mode::Fused,
            (false, true) => Mode::Image,
            (true, false) => Mode::Text,
            (false, false) if self.zeroshot.is_some() => Mode::Zeroshot,
            (false, false) => Mode::Text,
        }
    }

    fn text_scores(&self, text: Option<&str>) -> Result<ScoreVector, ApiError> {
        let model = self.text.as_ref().ok_or_else(|| ApiError::unavailable("no text model loaded"))?;
        let text = text.ok_or_else(|| ApiError::bad_request("mode needs a text field"))?;
        Ok(model.predict_text(text))
    }

    fn image_scores(&self, features: Option<&[f64]>) -> Result<ScoreVector, ApiError> {
        let model = self.image.as_ref().ok_or_else(|| ApiError::unavailable("no image model loaded"))?;
        let features = features.ok_or_else(|| ApiError::bad_request("mode needs an image_features field"))?;
        Ok(model.predict_image(features)?)
    }

    fn zeroshot_scores(&self, text: Option<&str>, features: Option<&[f64]>, alpha: FusionWeight) -> Result<ScoreVector, ApiError> {
        let scorer = self.zeroshot.as_ref().ok_or_else(|| ApiError::unavailable("no embedding table loaded"))?;
        if text.is_none() && features.is_none() {
            return Err(ApiError::bad_request("request has neither text nor image_features"));
        }
        let t = text.and_then(|t| scorer.text_scores(t));
        let doc = Document::new("request", text.unwrap_or_default(), Vec::new(), features.map(<[f64]>::to_vec));
        let i = scorer.image_scores(&doc)?;
        Ok(zeroshot_fused(t.as_ref(), i.as_ref(), alpha)
            .unwrap_or_else(|_| ScoreVector::new(vec![MISSING_PROTOTYPE_SCORE; scorer.classes])))
    }

    pub fn predict(&self, catalog: &EmojiCatalog, req: &PredictRequest) -> Result<PredictResponse, ApiError> {
        let k = req.k.unwrap_or(DEFAULT_TOP_K);
        if k == 0 {
            return Err(ApiError::bad_request("k must be at least 1"));
        }
        let alpha = match req.alpha.or(self.alpha) {
            Some(a) => FusionWeight::new(a)?,
            None => FusionWeight::new(0.5)?,
        };
        // Models see text with its emoji removed, as in training.
        let stripped = req
            .text
            .as_deref()
            .map(|t| segment(t, catalog, SegmentOptions::default()).stripped_text);
        let features = req.image_features.as_deref();
        let mode = req.mode.unwrap_or_else(|| self.default_mode(req));
        let scores = match mode {
            Mode::Text => self.text_scores(stripped.as_deref())?,
            Mode::Image => self.image_scores(features)?,
            Mode::Fused => fuse(&self.text_scores(stripped.as_deref())?, &self.image_scores(features)?, alpha)?,
            Mode::Zeroshot => self.zeroshot_scores(stripped.as_deref(), features, alpha)?,
        };
        if scores.len() != catalog.len() {
            return Err(ApiError::new(
                axum::http::StatusCode::INTERNAL_SERVER_ERROR,
                "internal",
                format!("model has {} classes, catalog has {}", scores.len(), catalog.len()),
            ));
        }
        let topk = scores
            .top_k(k)
            .into_iter()
            .map(|(class, score)| {
                let entry = catalog.entry(class).expect("class checked against catalog");
                Prediction {
                    emoji: entry.sequence.chars().iter().collect(),
                    name: entry.name.clone(),
                    score,
                }
            })
            .collect();
        Ok(PredictResponse { mode, topk })
    }
}
