use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::Corpus;
use crate::emoji::ClassIndex;
use crate::{Error, Result};

/// Random train/validation/test split. Each part keeps the original document order.
pub fn split(corpus: &Corpus, ratios: [f64; 3], seed: u64) -> Result<(Corpus, Corpus, Corpus)> {
    if ratios.iter().any(|r| !r.is_finite() || *r <= 0.0) {
        return Err(Error::invalid(format!("split ratios must be positive, got {ratios:?}")));
    }
    let total: f64 = ratios.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::invalid(format!("split ratios must sum to 1, got {total}")));
    }
    let n = corpus.len();
    let n_train = ((n as f64 * ratios[0]).round() as usize).min(n);
    let n_val = ((n as f64 * ratios[1]).round() as usize).min(n - n_train);
    let n_test = n - n_train - n_val;
    if n_train == 0 || n_val == 0 || n_test == 0 {
        return Err(Error::invalid(format!(
            "split of {n} documents leaves an empty part ({n_train}/{n_val}/{n_test})"
        )));
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut parts = [
        order[..n_train].to_vec(),
        order[n_train..n_train + n_val].to_vec(),
        order[n_train + n_val..].to_vec(),
    ];
    for part in &mut parts {
        part.sort_unstable();
    }
    Ok((
        corpus.subset(&parts[0]),
        corpus.subset(&parts[1]),
        corpus.subset(&parts[2]),
    ))
}

/// Subset in which no class is annotated on more than `cap` documents.
///
/// One greedy pass over the shuffled documents: a document is kept when every
/// class it carries is still under the cap.
pub fn balanced_test_subset(test: &Corpus, cap: usize, seed: u64) -> Result<Corpus> {
    if cap == 0 {
        return Err(Error::invalid("balanced subset cap must be at least 1"));
    }
    let mut order: Vec<usize> = (0..test.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut taken = vec![0usize; test.num_classes()];
    let mut keep = Vec::new();
    for i in order {
        let doc = &test.documents()[i];
        if doc.annotation.iter().all(|&c| taken[c] < cap) {
            for &c in &doc.annotation {
                taken[c] += 1;
            }
            keep.push(i);
        }
    }
    keep.sort_unstable();
    Ok(test.subset(&keep))
}

/// Restricts all three splits to image-bearing documents and removes test
/// documents whose image also appears in training with the same annotation set.
pub fn image_subset(train: &Corpus, val: &Corpus, test: &Corpus) -> (Corpus, Corpus, Corpus) {
    let with_images = |c: &Corpus| c.filter(|d| d.image_features.is_some());
    let train = with_images(train);
    let seen: HashSet<(u64, Vec<ClassIndex>)> = train
        .documents()
        .iter()
        .filter_map(|d| Some((d.feature_hash()?, d.annotation.clone())))
        .collect();
    let test = test.filter(|d| match d.feature_hash() {
        Some(h) => !seen.contains(&(h, d.annotation.clone())),
        None => false,
    });
    (train, with_images(val), test)
}
