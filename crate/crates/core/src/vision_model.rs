//! Image-to-emoji prediction: a linear softmax layer over fixed, pre-extracted
//! image features.

use std::path::Path;

use crate::codec::{Decoder, Encoder};
use crate::corpus::{BalancedSampler, Corpus, Document};
use crate::emoji::ClassIndex;
use crate::linalg::{axpy, log_sum_exp, Matrix};
use crate::scores::{ScoreVector, Scorer};
use crate::train::{fit, target_weights, Gradient, TrainConfig, TrainHistory, Trainable};
use crate::{Error, Result};

pub const VISION_MAGIC: &[u8; 5] = b"EMJV1";
pub const DEFAULT_L2: f64 = 1e-4;

#[derive(Clone, Debug, PartialEq)]
pub struct LinearSoftmaxModel {
    /// `d × C`
    pub weights: Matrix,
    pub bias: Vec<f64>,
    /// Coefficient of `½‖W‖²` in the loss. The bias is not penalized.
    pub l2: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LinearGradient {
    pub weights: Matrix,
    pub bias: Vec<f64>,
}

impl Gradient for LinearGradient {
    fn norm(&self) -> f64 {
        self.weights
            .as_slice()
            .iter()
            .chain(&self.bias)
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt()
    }

    fn scale(&mut self, factor: f64) {
        self.weights
            .as_mut_slice()
            .iter_mut()
            .chain(&mut self.bias)
            .for_each(|v| *v *= factor);
    }
}

impl LinearSoftmaxModel {
    pub fn zeros(dim: usize, classes: usize, l2: f64) -> Self {
        LinearSoftmaxModel {
            weights: Matrix::zeros(dim, classes),
            bias: vec![0.0; classes],
            l2,
        }
    }

    pub fn dim(&self) -> usize {
        self.weights.rows()
    }

    pub fn num_classes(&self) -> usize {
        self.bias.len()
    }

    fn logits(&self, features: &[f64]) -> Vec<f64> {
        let mut z = self.bias.clone();
        self.weights.mul_transposed_vec_add(features, &mut z);
        z
    }

    pub fn predict_image(&self, features: &[f64]) -> Result<ScoreVector> {
        self.check(features)?;
        Ok(ScoreVector::softmax(&self.logits(features)))
    }

    fn check(&self, features: &[f64]) -> Result<()> {
        if features.len() != self.dim() {
            return Err(Error::ShapeMismatch {
                what: "image features",
                expected: self.dim(),
                found: features.len(),
            });
        }
        Ok(())
    }

    fn penalty(&self) -> f64 {
        0.5 * self.l2 * self.weights.as_slice().iter().map(|w| w * w).sum::<f64>()
    }

    /// Mean cross-entropy plus the L2 penalty.
    pub fn loss(&self, batch: &[(&[f64], &[ClassIndex])]) -> Result<f64> {
        if batch.is_empty() {
            return Err(Error::Empty("batch"));
        }
        let mut total = 0.0;
        for (x, labels) in batch {
            self.check(x)?;
            let z = self.logits(x);
            let lse = log_sum_exp(&z);
            total -= target_weights(labels).map(|(j, w)| w * (z[j] - lse)).sum::<f64>();
        }
        Ok(total / batch.len() as f64 + self.penalty())
    }

    pub fn gradient(&self, batch: &[(&[f64], &[ClassIndex])]) -> Result<(f64, LinearGradient)> {
        if batch.is_empty() {
            return Err(Error::Empty("batch"));
        }
        for (x, _) in batch {
            self.check(x)?;
        }
        Ok(self.gradient_unchecked(batch))
    }

    fn gradient_unchecked(&self, batch: &[(&[f64], &[ClassIndex])]) -> (f64, LinearGradient) {
        let scale = 1.0 / batch.len() as f64;
        let mut grad = LinearGradient {
            weights: Matrix::zeros(self.dim(), self.num_classes()),
            bias: vec![0.0; self.num_classes()],
        };
        let mut total = 0.0;
        for (x, labels) in batch {
            let z = self.logits(x);
            let lse = log_sum_exp(&z);
            let mut d: Vec<f64> = z.iter().map(|v| (v - lse).exp()).collect();
            for (j, w) in target_weights(labels) {
                total -= w * (z[j] - lse);
                d[j] -= w;
            }
            d.iter_mut().for_each(|v| *v *= scale);
            axpy(1.0, &d, &mut grad.bias);
            grad.weights.add_outer(x, &d);
        }
        axpy(self.l2, self.weights.as_slice(), grad.weights.as_mut_slice());
        (total * scale + self.penalty(), grad)
    }

    /// Plain full-batch gradient descent; returns the loss before each step
    /// and after the last one.
    pub fn full_batch_descent(&mut self, corpus: &Corpus, learning_rate: f64, steps: usize) -> Result<Vec<f64>> {
        let inputs = corpus
            .documents()
            .iter()
            .map(|d| self.prepare(d))
            .collect::<Result<Vec<_>>>()?;
        let batch: Vec<(&[f64], &[ClassIndex])> = inputs
            .iter()
            .zip(corpus.documents())
            .map(|(x, d)| (x.as_slice(), d.annotation.as_slice()))
            .collect();
        if batch.is_empty() {
            return Err(Error::Empty("corpus"));
        }
        let mut curve = Vec::with_capacity(steps + 1);
        for _ in 0..steps {
            let (loss, grad) = self.gradient_unchecked(&batch);
            curve.push(loss);
            self.apply_gradient(&grad, learning_rate);
        }
        curve.push(self.loss(&batch)?);
        Ok(curve)
    }

    pub fn encode_checkpoint(&self) -> Vec<u8> {
        let mut enc = Encoder::new(VISION_MAGIC);
        enc.len32(self.dim())
            .len32(self.num_classes())
            .f64(self.l2)
            .f64s(self.weights.as_slice())
            .f64s(&self.bias);
        enc.finish()
    }

    pub fn decode_checkpoint(bytes: &[u8]) -> Result<Self> {
        let mut dec = Decoder::new("image checkpoint", bytes, VISION_MAGIC)?;
        let (d, c) = (dec.len32()?, dec.len32()?);
        if d == 0 || c == 0 {
            return Err(dec.error("zero dimension"));
        }
        let l2 = dec.f64()?;
        if !(l2.is_finite() && l2 >= 0.0) {
            return Err(dec.error("invalid l2 coefficient"));
        }
        let size = d.checked_mul(c).ok_or_else(|| dec.error("dimension overflow"))?;
        let weights = Matrix::from_vec(d, c, dec.f64s(size)?).unwrap();
        let bias = dec.f64s(c)?;
        dec.finish()?;
        Ok(LinearSoftmaxModel { weights, bias, l2 })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.encode_checkpoint()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::decode_checkpoint(&bytes)
    }
}

impl Trainable for LinearSoftmaxModel {
    type Input = Vec<f64>;
    type Gradient = LinearGradient;

    fn prepare(&self, doc: &Document) -> Result<Vec<f64>> {
        let features = doc
            .image_features
            .as_ref()
            .ok_or_else(|| Error::MissingModality(format!("document {} has no image", doc.id)))?;
        self.check(features)?;
        Ok(features.clone())
    }

    fn predict_input(&self, input: &Vec<f64>) -> ScoreVector {
        ScoreVector::softmax(&self.logits(input))
    }

    fn loss_and_gradient(&self, batch: &[(&Vec<f64>, &[ClassIndex])]) -> (f64, LinearGradient) {
        let batch: Vec<(&[f64], &[ClassIndex])> = batch.iter().map(|(x, y)| (x.as_slice(), *y)).collect();
        self.gradient_unchecked(&batch)
    }

    fn apply_gradient(&mut self, gradient: &LinearGradient, learning_rate: f64) {
        axpy(-learning_rate, gradient.weights.as_slice(), self.weights.as_mut_slice());
        axpy(-learning_rate, &gradient.bias, &mut self.bias);
    }
}

impl Scorer for LinearSoftmaxModel {
    fn tag(&self) -> String {
        "image".into()
    }

    fn num_classes(&self) -> usize {
        self.bias.len()
    }

    fn score(&self, doc: &Document) -> Result<ScoreVector> {
        let features = self.prepare(doc)?;
        Ok(self.predict_input(&features))
    }
}

/// Trains a linear model on the documents of `train` and `val` that carry
/// image features.
pub fn train_image_model(
    train: &Corpus,
    val: &Corpus,
    l2: f64,
    config: &TrainConfig,
) -> Result<(LinearSoftmaxModel, TrainHistory)> {
    let dim = train
        .image_dim()
        .ok_or_else(|| Error::MissingModality("training corpus has no image features".into()))?;
    if !(l2.is_finite() && l2 >= 0.0) {
        return Err(Error::invalid(format!("l2 must be non-negative, got {l2}")));
    }
    let train = train.filter(|d| d.image_features.is_some());
    let val = val.filter(|d| d.image_features.is_some());
    let model = LinearSoftmaxModel::zeros(dim, train.num_classes(), l2);
    let sampler = BalancedSampler::new(&train, config.seed.wrapping_add(1))?;
    fit(model, &train, &val, &sampler, config)
}
