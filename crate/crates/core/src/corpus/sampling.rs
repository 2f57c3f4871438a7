//! Class-balanced sampling: each document is drawn with probability inversely
//! proportional to the number of documents sharing its annotation set.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::Corpus;
use crate::{Error, Result};

/// `p(x_i) = C(y_i)^-1 / Σ_k C(y_k)^-1`
pub fn sampling_weights(corpus: &Corpus) -> Result<Vec<f64>> {
    if corpus.is_empty() {
        return Err(Error::Empty("corpus"));
    }
    let inverse: Vec<f64> = (0..corpus.len())
        .map(|i| 1.0 / corpus.annotation_set_count(i) as f64)
        .collect();
    let total: f64 = inverse.iter().sum();
    Ok(inverse.into_iter().map(|w| w / total).collect())
}

/// Explicit random stream for batch sampling, so independent trainers can own
/// independent streams.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SamplerState(ChaCha8Rng);

impl SamplerState {
    pub fn from_seed(seed: u64) -> Self {
        SamplerState(ChaCha8Rng::seed_from_u64(seed))
    }
}

#[derive(Clone, Debug)]
pub struct BalancedSampler {
    weights: Vec<f64>,
    distribution: WeightedIndex<f64>,
    rng_seed: u64,
}

impl BalancedSampler {
    pub fn new(corpus: &Corpus, rng_seed: u64) -> Result<Self> {
        Self::from_weights(sampling_weights(corpus)?, rng_seed)
    }

    /// A sampler over arbitrary non-negative weights (normalized here).
    pub fn from_weights(weights: Vec<f64>, rng_seed: u64) -> Result<Self> {
        let total: f64 = weights.iter().sum();
        if weights.is_empty() || !(total > 0.0) || weights.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
            return Err(Error::invalid("sampling weights must be non-negative with a positive sum"));
        }
        let weights: Vec<f64> = weights.into_iter().map(|w| w / total).collect();
        let distribution =
            WeightedIndex::new(&weights).map_err(|e| Error::invalid(e.to_string()))?;
        Ok(BalancedSampler {
            weights,
            distribution,
            rng_seed,
        })
    }

    /// A sampler that draws every document with equal probability.
    pub fn uniform(len: usize, rng_seed: u64) -> Result<Self> {
        Self::from_weights(vec![1.0; len], rng_seed)
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn initial_state(&self) -> SamplerState {
        SamplerState::from_seed(self.rng_seed)
    }

    /// Draws `batch_size` document indices i.i.d. with replacement, advancing `state`.
    pub fn next_batch(&self, batch_size: usize, state: &mut SamplerState) -> Result<Vec<usize>> {
        if batch_size == 0 {
            return Err(Error::invalid("batch size must be at least 1"));
        }
        Ok((0..batch_size)
            .map(|_| self.distribution.sample(&mut state.0))
            .collect())
    }
}
