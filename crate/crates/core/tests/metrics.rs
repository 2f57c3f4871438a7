mod common;

use emojimodal::metrics::{map_per_query, msap, top_k_accuracy, EvalBatch};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use common::{oracle_map, oracle_msap, oracle_top_k, random_instance};

fn instance() -> impl Strategy<Value = (Vec<Vec<f64>>, Vec<Vec<bool>>)> {
    (1usize..30, 1usize..15, any::<u64>()).prop_map(|(n, c, seed)| {
        random_instance(&mut ChaCha8Rng::seed_from_u64(seed), n, c)
    })
}

fn transpose<T: Copy>(m: &[Vec<T>]) -> Vec<Vec<T>> {
    (0..m[0].len()).map(|j| m.iter().map(|row| row[j]).collect()).collect()
}

proptest! {
    #[test]
    fn fast_metrics_match_oracle((scores, rel) in instance()) {
        let batch = EvalBatch::new(scores.clone(), rel.clone()).unwrap();
        for k in 1..=batch.cols() {
            prop_assert!((top_k_accuracy(&batch, k).unwrap() - oracle_top_k(&scores, &rel, k)).abs() < 1e-9);
        }
        prop_assert!((msap(&batch).unwrap() - oracle_msap(&scores, &rel)).abs() < 1e-9);
        let map = map_per_query(&batch).unwrap().map;
        prop_assert!((map - oracle_map(&scores, &rel).unwrap()).abs() < 1e-9);
    }

    #[test]
    fn top_k_is_monotone_and_reaches_one((scores, rel) in instance()) {
        let batch = EvalBatch::new(scores, rel).unwrap();
        let values: Vec<f64> = (1..=batch.cols()).map(|k| top_k_accuracy(&batch, k).unwrap()).collect();
        prop_assert!(values.windows(2).all(|w| w[0] <= w[1]));
        prop_assert_eq!(*values.last().unwrap(), 1.0);
        prop_assert!(values.iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn column_permutation_invariance((scores, rel) in instance(), seed in any::<u64>()) {
        let c = scores[0].len();
        let mut perm: Vec<usize> = (0..c).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rand::seq::SliceRandom::shuffle(perm.as_mut_slice(), &mut rng);
        let permute = |m: &[Vec<f64>]| m.iter().map(|r| perm.iter().map(|&j| r[j]).collect()).collect::<Vec<Vec<f64>>>();
        let permute_b = |m: &[Vec<bool>]| m.iter().map(|r| perm.iter().map(|&j| r[j]).collect()).collect::<Vec<Vec<bool>>>();
        let a = EvalBatch::new(scores.clone(), rel.clone()).unwrap();
        let b = EvalBatch::new(permute(&scores), permute_b(&rel)).unwrap();
        prop_assert!((msap(&a).unwrap() - msap(&b).unwrap()).abs() < 1e-12);
        prop_assert!((map_per_query(&a).unwrap().map - map_per_query(&b).unwrap().map).abs() < 1e-12);
        for k in 1..=c {
            prop_assert_eq!(top_k_accuracy(&a, k).unwrap(), top_k_accuracy(&b, k).unwrap());
        }
    }

    #[test]
    fn map_is_msap_of_the_transpose((scores, rel) in instance()) {
        let report = map_per_query(&EvalBatch::new(scores.clone(), rel.clone()).unwrap()).unwrap();
        let (ts, tr) = (transpose(&scores), transpose(&rel));
        let keep: Vec<usize> = (0..tr.len()).filter(|&j| tr[j].iter().any(|&x| x)).collect();
        let t = EvalBatch::new(
            keep.iter().map(|&j| ts[j].clone()).collect(),
            keep.iter().map(|&j| tr[j].clone()).collect(),
        ).unwrap();
        prop_assert!((report.map - msap(&t).unwrap()).abs() < 1e-9);
        prop_assert_eq!(report.excluded.len() + keep.len(), scores[0].len());
    }

    #[test]
    fn tied_scores_are_deterministic(n in 1usize..10, c in 1usize..8, seed in any::<u64>()) {
        let (_, rel) = random_instance(&mut ChaCha8Rng::seed_from_u64(seed), n, c);
        let scores = vec![vec![0.5; c]; n];
        let a = EvalBatch::new(scores.clone(), rel.clone()).unwrap();
        let b = EvalBatch::new(scores, rel).unwrap();
        prop_assert_eq!(msap(&a).unwrap(), msap(&b).unwrap());
        prop_assert_eq!(map_per_query(&a).unwrap(), map_per_query(&b).unwrap());
    }
}
