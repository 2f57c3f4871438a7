//! Mini-batch SGD with gradient-norm clipping, step decay on validation
//! plateaus and early stopping on validation msAP. Shared by the text and
//! image models.

use serde::{Deserialize, Serialize};

use crate::corpus::{BalancedSampler, Corpus, Document};
use crate::emoji::ClassIndex;
use crate::metrics::{msap, EvalBatch};
use crate::scores::ScoreVector;
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    /// Multiplier applied to the learning rate after an epoch without improvement.
    pub lr_decay: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Validation epochs without improvement before stopping.
    pub patience: usize,
    pub clip_norm: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.1,
            lr_decay: 0.5,
            batch_size: 64,
            max_epochs: 50,
            patience: 3,
            clip_norm: 5.0,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = |x: f64| x.is_finite() && x > 0.0;
        if !positive(self.learning_rate)
            || !positive(self.clip_norm)
            || !(self.lr_decay > 0.0 && self.lr_decay <= 1.0)
            || self.batch_size == 0
            || self.max_epochs == 0
            || self.patience == 0
        {
            return Err(Error::invalid(format!("invalid training configuration {self:?}")));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_msap: f64,
    pub learning_rate: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_val_msap: f64,
    pub stopped_early: bool,
}

pub trait Gradient {
    fn norm(&self) -> f64;
    fn scale(&mut self, factor: f64);
}

/// A model trainable by [`fit`].
pub trait Trainable: Clone {
    type Input;
    type Gradient: Gradient;

    /// Converts a document into model input (tokenization, feature lookup).
    fn prepare(&self, doc: &Document) -> Result<Self::Input>;

    fn predict_input(&self, input: &Self::Input) -> ScoreVector;

    /// Mean loss over the batch and its exact gradient.
    fn loss_and_gradient(&self, batch: &[(&Self::Input, &[ClassIndex])]) -> (f64, Self::Gradient);

    fn apply_gradient(&mut self, gradient: &Self::Gradient, learning_rate: f64);
}

/// Normalized multi-hot target `y / Σy`, as (class, weight) pairs.
pub(crate) fn target_weights(labels: &[ClassIndex]) -> impl Iterator<Item = (ClassIndex, f64)> + '_ {
    let w = 1.0 / labels.len() as f64;
    labels.iter().map(move |&c| (c, w))
}

fn validation_msap<M: Trainable>(
    model: &M,
    inputs: &[M::Input],
    labels: &[Vec<ClassIndex>],
    classes: usize,
) -> Result<f64> {
    let scores: Vec<ScoreVector> = inputs.iter().map(|x| model.predict_input(x)).collect();
    msap(&EvalBatch::from_labels(&scores, labels, classes)?)
}

/// Trains `model` on `train`, drawing batches from `sampler`, and returns the
/// snapshot with the best validation msAP.
pub fn fit<M: Trainable>(
    mut model: M,
    train: &Corpus,
    val: &Corpus,
    sampler: &BalancedSampler,
    config: &TrainConfig,
) -> Result<(M, TrainHistory)> {
    config.validate()?;
    if train.is_empty() {
        return Err(Error::Empty("training corpus"));
    }
    if val.is_empty() {
        return Err(Error::Empty("validation corpus"));
    }
    if sampler.weights().len() != train.len() {
        return Err(Error::ShapeMismatch {
            what: "sampler weights",
            expected: train.len(),
            found: sampler.weights().len(),
        });
    }
    let train_inputs = train
        .documents()
        .iter()
        .map(|d| model.prepare(d))
        .collect::<Result<Vec<_>>>()?;
    let val_inputs = val
        .documents()
        .iter()
        .map(|d| model.prepare(d))
        .collect::<Result<Vec<_>>>()?;
    let val_labels = val.labels();

    let steps_per_epoch = train.len().div_ceil(config.batch_size);
    let mut state = sampler.initial_state();
    let mut lr = config.learning_rate;
    let mut best = model.clone();
    let mut history = TrainHistory {
        best_val_msap: f64::NEG_INFINITY,
        ..Default::default()
    };
    let mut stale = 0;

    for epoch in 1..=config.max_epochs {
        let mut loss_sum = 0.0;
        for step in 0..steps_per_epoch {
            let indices = sampler.next_batch(config.batch_size, &mut state)?;
            let batch: Vec<(&M::Input, &[ClassIndex])> = indices
                .iter()
                .map(|&i| (&train_inputs[i], train.documents()[i].annotation.as_slice()))
                .collect();
            let (loss, mut grad) = model.loss_and_gradient(&batch);
            let norm = grad.norm();
            if !loss.is_finite() || !norm.is_finite() {
                return Err(Error::Divergence { epoch, step });
            }
            if norm > config.clip_norm {
                grad.scale(config.clip_norm / norm);
            }
            model.apply_gradient(&grad, lr);
            loss_sum += loss;
        }

        let val_msap = validation_msap(&model, &val_inputs, &val_labels, train.num_classes())?;
        history.epochs.push(EpochRecord {
            epoch,
            train_loss: loss_sum / steps_per_epoch as f64,
            val_msap,
            learning_rate: lr,
        });
        log::debug!("epoch {epoch}: loss {:.5} val msAP {val_msap:.5} lr {lr}", loss_sum / steps_per_epoch as f64);

        if val_msap > history.best_val_msap {
            history.best_val_msap = val_msap;
            history.best_epoch = epoch;
            best = model.clone();
            stale = 0;
        } else {
            stale += 1;
            lr *= config.lr_decay;
            if stale >= config.patience {
                history.stopped_early = true;
                break;
            }
        }
    }
    Ok((best, history))
}
