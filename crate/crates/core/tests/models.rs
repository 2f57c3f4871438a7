mod common;

use emojimodal::corpus::{generate_synthetic, split, ImageSynth, SynthConfig};
use emojimodal::linalg::Matrix;
use emojimodal::metrics::{top_k_accuracy, EvalBatch};
use emojimodal::scores::Scorer;
use emojimodal::text_model::{train_text_model, BiLstm, ModelShape, TextClassifier};
use emojimodal::train::TrainConfig;
use emojimodal::vision_model::{train_image_model, LinearSoftmaxModel};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::max_relative_error;

fn flatten(net: &BiLstm) -> Vec<f64> {
    net.blocks().iter().flat_map(|b| b.iter().copied()).collect()
}

fn unflatten(net: &mut BiLstm, flat: &[f64]) {
    let mut at = 0;
    for block in net.blocks_mut() {
        block.copy_from_slice(&flat[at..at + block.len()]);
        at += block.len();
    }
}

pub fn recurrent_gradient_error(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let net = BiLstm::random(8, 3, 4, 5, seed);
    let mut net = net;
    // larger weights than the default init exercise saturation
    for block in net.blocks_mut() {
        block.iter_mut().for_each(|w| *w = rng.random_range(-0.8..0.8));
    }
    let seqs: Vec<Vec<usize>> = (0..3).map(|_| (0..6).map(|_| rng.random_range(0..8)).collect()).collect();
    let labels: [&[usize]; 3] = [&[2], &[0, 4], &[1]];
    let batch: Vec<(&[usize], &[usize])> = seqs.iter().map(|s| s.as_slice()).zip(labels).collect();
    let (_, grad) = net.gradient(&batch).unwrap();
    let analytic = flatten(&grad.params);
    let mut params = flatten(&net);
    let mut probe = net.clone();
    let (err, _) = max_relative_error(&analytic, &mut params, 1e-3, |p| {
        unflatten(&mut probe, p);
        probe.loss(&batch).unwrap()
    });
    err
}

#[test]
fn recurrent_gradients_match_finite_differences() {
    for seed in 0..5 {
        let err = recurrent_gradient_error(seed);
        assert!(err < 1e-4, "seed {seed}: relative error {err:e}");
    }
}

#[test]
fn linear_gradients_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut model = LinearSoftmaxModel::zeros(6, 5, 1e-3);
    model.weights = Matrix::from_vec(6, 5, (0..30).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
    model.bias = (0..5).map(|_| rng.random_range(-1.0..1.0)).collect();
    let xs: Vec<Vec<f64>> = (0..4).map(|_| (0..6).map(|_| rng.random_range(-2.0..2.0)).collect()).collect();
    let labels: [&[usize]; 4] = [&[0], &[1, 3], &[4], &[2]];
    let batch: Vec<(&[f64], &[usize])> = xs.iter().map(|x| x.as_slice()).zip(labels).collect();
    let (_, grad) = model.gradient(&batch).unwrap();
    let analytic: Vec<f64> = grad.weights.as_slice().iter().chain(&grad.bias).copied().collect();
    let mut params: Vec<f64> = model.weights.as_slice().iter().chain(&model.bias).copied().collect();
    let mut probe = model.clone();
    let (err, _) = max_relative_error(&analytic, &mut params, 1e-3, |p| {
        probe.weights.as_mut_slice().copy_from_slice(&p[..30]);
        probe.bias.copy_from_slice(&p[30..]);
        probe.loss(&batch).unwrap()
    });
    assert!(err < 1e-6, "relative error {err:e}");
}

fn held_out_top1(scorer: &dyn Scorer, test: &emojimodal::corpus::Corpus) -> f64 {
    let scores: Vec<_> = test.documents().iter().map(|d| scorer.score(d).unwrap()).collect();
    let batch = EvalBatch::from_labels(&scores, &test.labels(), test.num_classes()).unwrap();
    top_k_accuracy(&batch, 1).unwrap()
}

#[test]
fn small_synthetic_corpus_is_learned() {
    let synth = generate_synthetic(&SynthConfig::new(6, 600, 1.0).with_image(ImageSynth::aligned(8, 0.2)), 3).unwrap();
    let (train, val, test) = split(&synth.corpus, [0.8, 0.1, 0.1], 3).unwrap();
    let config = TrainConfig { learning_rate: 0.5, batch_size: 16, max_epochs: 20, ..Default::default() };
    let shape = ModelShape { embed_dim: 16, hidden: 16, max_len: 32 };
    let (text, history) = train_text_model(&train, &val, &shape, 1, &config).unwrap();
    assert!(history.best_val_msap > 0.9, "{history:?}");
    assert!(held_out_top1(&text, &test) >= 0.9);

    let (image, _) = train_image_model(&train, &val, 1e-4, &config).unwrap();
    assert!(held_out_top1(&image, &test) >= 0.9);

    let restored = TextClassifier::decode_checkpoint(&text.encode_checkpoint()).unwrap();
    assert_eq!(restored.predict_text("anything at all"), text.predict_text("anything at all"));
}

