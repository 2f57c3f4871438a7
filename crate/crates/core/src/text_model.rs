//! Text-to-emoji prediction with a bi-directional LSTM over word embeddings.
//!
//! The final hidden states of a left-to-right and a right-to-left pass are
//! concatenated and projected to one logit per emoji class, followed by a
//! softmax. Gradients are computed by backpropagation through time in `f64`.

use std::collections::HashMap;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::codec::{Decoder, Encoder};
use crate::corpus::{BalancedSampler, Corpus, Document};
use crate::emoji::ClassIndex;
use crate::linalg::{dot, log_sum_exp, sigmoid, Matrix};
use crate::scores::{ScoreVector, Scorer};
use crate::tokenize::{tokenize, NUMBER, PAD, UNKNOWN, USER};
use crate::train::{fit, target_weights, Gradient, TrainConfig, TrainHistory, Trainable};
use crate::{Error, Result};

pub const PAD_ID: usize = 0;
pub const UNKNOWN_ID: usize = 1;
pub const USER_ID: usize = 2;
pub const NUMBER_ID: usize = 3;
const SPECIALS: [&str; 4] = [PAD, UNKNOWN, USER, NUMBER];

pub const TEXT_MAGIC: &[u8; 5] = b"EMJT1";

#[derive(Clone, Debug, PartialEq)]
pub struct Vocabulary {
    token_to_id: HashMap<String, usize>,
    id_to_token: Vec<String>,
}

impl Vocabulary {
    /// Tokens seen at least `min_count` times, ordered by count (descending)
    /// then token, after the four special tokens.
    pub fn build(corpus: &Corpus, min_count: usize) -> Result<Self> {
        if min_count == 0 {
            return Err(Error::invalid("min_count must be at least 1"));
        }
        if corpus.is_empty() {
            return Err(Error::Empty("corpus"));
        }
        let mut counts: HashMap<String, usize> = HashMap::new();
        for doc in corpus.documents() {
            for token in tokenize(&doc.stripped_text) {
                *counts.entry(token).or_insert(0) += 1;
            }
        }
        let mut kept: Vec<(String, usize)> = counts
            .into_iter()
            .filter(|(t, n)| *n >= min_count && !SPECIALS.contains(&t.as_str()))
            .collect();
        kept.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        Self::from_tokens(
            SPECIALS
                .iter()
                .map(|s| s.to_string())
                .chain(kept.into_iter().map(|(t, _)| t))
                .collect(),
        )
    }

    /// Rebuilds a vocabulary from its id order. The first four tokens must be
    /// the special tokens.
    pub fn from_tokens(id_to_token: Vec<String>) -> Result<Self> {
        if id_to_token.len() < SPECIALS.len()
            || id_to_token.iter().zip(SPECIALS).any(|(a, b)| a != b)
        {
            return Err(Error::invalid("vocabulary must start with the special tokens"));
        }
        let mut token_to_id = HashMap::with_capacity(id_to_token.len());
        for (i, t) in id_to_token.iter().enumerate() {
            if token_to_id.insert(t.clone(), i).is_some() {
                return Err(Error::invalid(format!("duplicate vocabulary token {t:?}")));
            }
        }
        Ok(Vocabulary {
            token_to_id,
            id_to_token,
        })
    }

    pub fn len(&self) -> usize {
        self.id_to_token.len()
    }

    pub fn is_empty(&self) -> bool {
        self.id_to_token.is_empty()
    }

    pub fn id(&self, token: &str) -> usize {
        self.token_to_id.get(token).copied().unwrap_or(UNKNOWN_ID)
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        self.id_to_token.get(id).map(String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.id_to_token
    }

    pub fn encode(&self, text: &str) -> Vec<usize> {
        tokenize(text).iter().map(|t| self.id(t)).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelShape {
    pub embed_dim: usize,
    pub hidden: usize,
    /// Longer inputs keep their first `max_len` tokens.
    pub max_len: usize,
}

impl Default for ModelShape {
    fn default() -> Self {
        ModelShape {
            embed_dim: 64,
            hidden: 128,
            max_len: 64,
        }
    }
}

/// Gate rows are stacked as input, forget, candidate, output.
#[derive(Clone, Debug, PartialEq)]
pub struct LstmCell {
    pub input_weights: Matrix,
    pub recurrent_weights: Matrix,
    pub bias: Vec<f64>,
}

impl LstmCell {
    fn zeros(input: usize, hidden: usize) -> Self {
        LstmCell {
            input_weights: Matrix::zeros(4 * hidden, input),
            recurrent_weights: Matrix::zeros(4 * hidden, hidden),
            bias: vec![0.0; 4 * hidden],
        }
    }

    fn hidden(&self) -> usize {
        self.recurrent_weights.cols()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BiLstm {
    pub embedding: Matrix,
    pub forward: LstmCell,
    pub backward: LstmCell,
    /// `2H × C`; rows `0..H` read the forward state, rows `H..2H` the backward one.
    pub output_weights: Matrix,
    pub output_bias: Vec<f64>,
}

struct StepCache {
    token: usize,
    h_prev: Vec<f64>,
    c_prev: Vec<f64>,
    gates: [Vec<f64>; 4],
    tanh_c: Vec<f64>,
}

struct Trace {
    steps: Vec<StepCache>,
    h: Vec<f64>,
}

impl BiLstm {
    pub fn zeros(vocab: usize, embed_dim: usize, hidden: usize, classes: usize) -> Self {
        BiLstm {
            embedding: Matrix::zeros(vocab, embed_dim),
            forward: LstmCell::zeros(embed_dim, hidden),
            backward: LstmCell::zeros(embed_dim, hidden),
            output_weights: Matrix::zeros(2 * hidden, classes),
            output_bias: vec![0.0; classes],
        }
    }

    /// Embeddings uniform in (-1, 1), weight matrices Glorot-uniform,
    /// forget-gate bias 1 and all other biases 0.
    pub fn random(vocab: usize, embed_dim: usize, hidden: usize, classes: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let glorot = |rows: usize, cols: usize, rng: &mut ChaCha8Rng| {
            Matrix::uniform(rows, cols, (6.0 / (rows + cols) as f64).sqrt(), rng)
        };
        let cell = |rng: &mut ChaCha8Rng| {
            let mut bias = vec![0.0; 4 * hidden];
            bias[hidden..2 * hidden].fill(1.0);
            LstmCell {
                input_weights: glorot(4 * hidden, embed_dim, rng),
                recurrent_weights: glorot(4 * hidden, hidden, rng),
                bias,
            }
        };
        let embedding = Matrix::uniform(vocab, embed_dim, 1.0, &mut rng);
        let forward = cell(&mut rng);
        let backward = cell(&mut rng);
        BiLstm {
            embedding,
            forward,
            backward,
            output_weights: glorot(2 * hidden, classes, &mut rng),
            output_bias: vec![0.0; classes],
        }
    }

    pub fn vocab_size(&self) -> usize {
        self.embedding.rows()
    }

    pub fn embed_dim(&self) -> usize {
        self.embedding.cols()
    }

    pub fn hidden(&self) -> usize {
        self.forward.hidden()
    }

    pub fn num_classes(&self) -> usize {
        self.output_bias.len()
    }

    /// Parameter blocks in checkpoint order.
    pub fn blocks(&self) -> [&[f64]; 9] {
        [
            self.embedding.as_slice(),
            self.forward.input_weights.as_slice(),
            self.forward.recurrent_weights.as_slice(),
            &self.forward.bias,
            self.backward.input_weights.as_slice(),
            self.backward.recurrent_weights.as_slice(),
            &self.backward.bias,
            self.output_weights.as_slice(),
            &self.output_bias,
        ]
    }

    pub fn blocks_mut(&mut self) -> [&mut [f64]; 9] {
        [
            self.embedding.as_mut_slice(),
            self.forward.input_weights.as_mut_slice(),
            self.forward.recurrent_weights.as_mut_slice(),
            &mut self.forward.bias,
            self.backward.input_weights.as_mut_slice(),
            self.backward.recurrent_weights.as_mut_slice(),
            &mut self.backward.bias,
            self.output_weights.as_mut_slice(),
            &mut self.output_bias,
        ]
    }

    /// The same network with the two directions exchanged: running it on the
    /// reversed input yields the original output.
    pub fn swapped_directions(&self) -> Self {
        let h = self.hidden();
        let c = self.num_classes();
        let w = self.output_weights.as_slice();
        let mut swapped = w[h * c..].to_vec();
        swapped.extend_from_slice(&w[..h * c]);
        BiLstm {
            embedding: self.embedding.clone(),
            forward: self.backward.clone(),
            backward: self.forward.clone(),
            output_weights: Matrix::from_vec(2 * h, c, swapped).unwrap(),
            output_bias: self.output_bias.clone(),
        }
    }

    fn check_tokens(&self, tokens: &[usize]) -> Result<()> {
        match tokens.iter().find(|&&t| t >= self.vocab_size()) {
            Some(&t) => Err(Error::invalid(format!(
                "token id {t} outside vocabulary of {}",
                self.vocab_size()
            ))),
            None => Ok(()),
        }
    }

    fn run_direction<'a>(&self, cell: &LstmCell, tokens: impl Iterator<Item = &'a usize>) -> Trace {
        let h_dim = cell.hidden();
        let mut h = vec![0.0; h_dim];
        let mut c = vec![0.0; h_dim];
        let mut steps = Vec::new();
        for &token in tokens {
            let mut z = cell.bias.clone();
            cell.input_weights.mul_vec_add(self.embedding.row(token), &mut z);
            cell.recurrent_weights.mul_vec_add(&h, &mut z);
            let i: Vec<f64> = z[..h_dim].iter().map(|&v| sigmoid(v)).collect();
            let f: Vec<f64> = z[h_dim..2 * h_dim].iter().map(|&v| sigmoid(v)).collect();
            let g: Vec<f64> = z[2 * h_dim..3 * h_dim].iter().map(|&v| v.tanh()).collect();
            let o: Vec<f64> = z[3 * h_dim..].iter().map(|&v| sigmoid(v)).collect();
            let c_new: Vec<f64> = (0..h_dim).map(|k| f[k] * c[k] + i[k] * g[k]).collect();
            let tanh_c: Vec<f64> = c_new.iter().map(|v| v.tanh()).collect();
            let h_new: Vec<f64> = (0..h_dim).map(|k| o[k] * tanh_c[k]).collect();
            steps.push(StepCache {
                token,
                h_prev: std::mem::replace(&mut h, h_new),
                c_prev: std::mem::replace(&mut c, c_new),
                gates: [i, f, g, o],
                tanh_c,
            });
        }
        Trace { steps, h }
    }

    fn traces(&self, tokens: &[usize]) -> (Trace, Trace) {
        let tokens: &[usize] = if tokens.is_empty() { &[PAD_ID] } else { tokens };
        (
            self.run_direction(&self.forward, tokens.iter()),
            self.run_direction(&self.backward, tokens.iter().rev()),
        )
    }

    fn logits(&self, h_fwd: &[f64], h_bwd: &[f64]) -> Vec<f64> {
        let h = self.hidden();
        let c = self.num_classes();
        let w = self.output_weights.as_slice();
        let mut from_fwd = vec![0.0; c];
        let mut from_bwd = vec![0.0; c];
        for k in 0..h {
            for j in 0..c {
                from_fwd[j] += h_fwd[k] * w[k * c + j];
                from_bwd[j] += h_bwd[k] * w[(h + k) * c + j];
            }
        }
        // the two halves are summed separately so that exchanging the
        // directions is exact
        (0..c)
            .map(|j| self.output_bias[j] + (from_fwd[j] + from_bwd[j]))
            .collect()
    }

    /// Class distribution for a token sequence; an empty sequence reads as one PAD.
    pub fn forward(&self, tokens: &[usize]) -> Result<ScoreVector> {
        self.check_tokens(tokens)?;
        let (f, b) = self.traces(tokens);
        Ok(ScoreVector::softmax(&self.logits(&f.h, &b.h)))
    }

    /// Mean cross-entropy against normalized multi-hot targets.
    pub fn loss(&self, batch: &[(&[usize], &[ClassIndex])]) -> Result<f64> {
        if batch.is_empty() {
            return Err(Error::Empty("batch"));
        }
        let mut total = 0.0;
        for (tokens, labels) in batch {
            self.check_tokens(tokens)?;
            let (f, b) = self.traces(tokens);
            total += example_loss(&self.logits(&f.h, &b.h), labels);
        }
        Ok(total / batch.len() as f64)
    }

    /// Mean loss and its exact gradient.
    pub fn gradient(&self, batch: &[(&[usize], &[ClassIndex])]) -> Result<(f64, BiLstmGradient)> {
        if batch.is_empty() {
            return Err(Error::Empty("batch"));
        }
        for (tokens, _) in batch {
            self.check_tokens(tokens)?;
        }
        Ok(self.gradient_unchecked(batch))
    }

    fn gradient_unchecked(&self, batch: &[(&[usize], &[ClassIndex])]) -> (f64, BiLstmGradient) {
        let h = self.hidden();
        let c = self.num_classes();
        let scale = 1.0 / batch.len() as f64;
        let mut grad = BiLstmGradient {
            params: BiLstm::zeros(self.vocab_size(), self.embed_dim(), h, c),
            touched_rows: Vec::new(),
        };
        let mut touched = vec![false; self.vocab_size()];
        let mut total = 0.0;

        for (tokens, labels) in batch {
            let (fwd, bwd) = self.traces(tokens);
            let logits = self.logits(&fwd.h, &bwd.h);
            total += example_loss(&logits, labels);

            let mut dlogits = ScoreVector::softmax(&logits).into_inner();
            for (j, w) in target_weights(labels) {
                dlogits[j] -= w;
            }
            dlogits.iter_mut().for_each(|d| *d *= scale);

            for (g, d) in grad.params.output_bias.iter_mut().zip(&dlogits) {
                *g += d;
            }
            let concat: Vec<f64> = fwd.h.iter().chain(&bwd.h).copied().collect();
            grad.params.output_weights.add_outer(&concat, &dlogits);
            let dh: Vec<f64> = (0..2 * h)
                .map(|k| dot(self.output_weights.row(k), &dlogits))
                .collect();

            backprop_direction(&self.forward, &self.embedding, &fwd, &dh[..h], &mut grad.params.forward, &mut grad.params.embedding, &mut touched);
            backprop_direction(&self.backward, &self.embedding, &bwd, &dh[h..], &mut grad.params.backward, &mut grad.params.embedding, &mut touched);
        }
        grad.touched_rows = (0..touched.len()).filter(|&r| touched[r]).collect();
        (total * scale, grad)
    }
}

fn example_loss(logits: &[f64], labels: &[ClassIndex]) -> f64 {
    let lse = log_sum_exp(logits);
    -target_weights(labels)
        .map(|(j, w)| w * (logits[j] - lse))
        .sum::<f64>()
}

fn backprop_direction(
    cell: &LstmCell,
    embedding: &Matrix,
    trace: &Trace,
    dh_final: &[f64],
    grad: &mut LstmCell,
    grad_embedding: &mut Matrix,
    touched: &mut [bool],
) {
    let h = cell.hidden();
    let mut dh = dh_final.to_vec();
    let mut dc = vec![0.0; h];
    let mut dz = vec![0.0; 4 * h];
    for step in trace.steps.iter().rev() {
        let [i, f, g, o] = &step.gates;
        for k in 0..h {
            let dc_total = dc[k] + dh[k] * o[k] * (1.0 - step.tanh_c[k] * step.tanh_c[k]);
            let d_o = dh[k] * step.tanh_c[k];
            let d_i = dc_total * g[k];
            let d_g = dc_total * i[k];
            let d_f = dc_total * step.c_prev[k];
            dc[k] = dc_total * f[k];
            dz[k] = d_i * i[k] * (1.0 - i[k]);
            dz[h + k] = d_f * f[k] * (1.0 - f[k]);
            dz[2 * h + k] = d_g * (1.0 - g[k] * g[k]);
            dz[3 * h + k] = d_o * o[k] * (1.0 - o[k]);
        }
        let x = embedding.row(step.token);
        grad.input_weights.add_outer(&dz, x);
        grad.recurrent_weights.add_outer(&dz, &step.h_prev);
        for (b, d) in grad.bias.iter_mut().zip(&dz) {
            *b += d;
        }
        cell.input_weights
            .mul_transposed_vec_add(&dz, grad_embedding.row_mut(step.token));
        touched[step.token] = true;
        dh.fill(0.0);
        cell.recurrent_weights.mul_transposed_vec_add(&dz, &mut dh);
    }
}

/// Gradient with the same shape as the network. Only `touched_rows` of the
/// embedding gradient can be non-zero.
#[derive(Clone, Debug, PartialEq)]
pub struct BiLstmGradient {
    pub params: BiLstm,
    pub touched_rows: Vec<usize>,
}

impl Gradient for BiLstmGradient {
    fn norm(&self) -> f64 {
        let blocks = self.params.blocks();
        let embedding: f64 = self
            .touched_rows
            .iter()
            .map(|&r| self.params.embedding.row(r).iter().map(|v| v * v).sum::<f64>())
            .sum();
        let rest: f64 = blocks[1..]
            .iter()
            .map(|b| b.iter().map(|v| v * v).sum::<f64>())
            .sum();
        (embedding + rest).sqrt()
    }

    fn scale(&mut self, factor: f64) {
        let rows = self.touched_rows.clone();
        for r in rows {
            self.params.embedding.row_mut(r).iter_mut().for_each(|v| *v *= factor);
        }
        for block in self.params.blocks_mut().into_iter().skip(1) {
            block.iter_mut().for_each(|v| *v *= factor);
        }
    }
}

/// A vocabulary plus network: maps stripped text to emoji scores.
#[derive(Clone, Debug, PartialEq)]
pub struct TextClassifier {
    pub vocab: Vocabulary,
    pub net: BiLstm,
    pub max_len: usize,
}

impl TextClassifier {
    pub fn new(vocab: Vocabulary, classes: usize, shape: &ModelShape, seed: u64) -> Result<Self> {
        if shape.embed_dim == 0 || shape.hidden == 0 || shape.max_len == 0 || classes == 0 {
            return Err(Error::invalid(format!("invalid model shape {shape:?} with {classes} classes")));
        }
        let net = BiLstm::random(vocab.len(), shape.embed_dim, shape.hidden, classes, seed);
        Ok(TextClassifier {
            vocab,
            net,
            max_len: shape.max_len,
        })
    }

    pub fn shape(&self) -> ModelShape {
        ModelShape {
            embed_dim: self.net.embed_dim(),
            hidden: self.net.hidden(),
            max_len: self.max_len,
        }
    }

    pub fn encode(&self, text: &str) -> Vec<usize> {
        let mut ids = self.vocab.encode(text);
        ids.truncate(self.max_len);
        ids
    }

    pub fn predict_text(&self, text: &str) -> ScoreVector {
        self.net
            .forward(&self.encode(text))
            .expect("vocabulary ids are in range")
    }

    pub fn encode_checkpoint(&self) -> Vec<u8> {
        let mut enc = Encoder::new(TEXT_MAGIC);
        enc.len32(self.vocab.len());
        for t in self.vocab.tokens() {
            enc.str(t);
        }
        enc.len32(self.net.embed_dim())
            .len32(self.net.hidden())
            .len32(self.net.num_classes())
            .len32(self.max_len);
        for block in self.net.blocks() {
            enc.f64s(block);
        }
        enc.finish()
    }

    pub fn decode_checkpoint(bytes: &[u8]) -> Result<Self> {
        let mut dec = Decoder::new("text checkpoint", bytes, TEXT_MAGIC)?;
        let v = dec.len32()?;
        let mut tokens = Vec::new();
        for _ in 0..v {
            tokens.push(dec.str()?);
        }
        let vocab = Vocabulary::from_tokens(tokens).map_err(|e| dec.error(e.to_string()))?;
        let (e, h, c, max_len) = (dec.len32()?, dec.len32()?, dec.len32()?, dec.len32()?);
        if e == 0 || h == 0 || c == 0 || max_len == 0 {
            return Err(dec.error("zero dimension"));
        }
        let mut net = BiLstm::zeros(0, 0, 0, 0);
        let sizes = [
            v.checked_mul(e),
            (4 * h).checked_mul(e),
            (4 * h).checked_mul(h),
            Some(4 * h),
            (4 * h).checked_mul(e),
            (4 * h).checked_mul(h),
            Some(4 * h),
            (2 * h).checked_mul(c),
            Some(c),
        ];
        let mut blocks = Vec::with_capacity(9);
        for size in sizes {
            let size = size.ok_or_else(|| dec.error("dimension overflow"))?;
            blocks.push(dec.f64s(size)?);
        }
        dec.finish()?;
        let mut it = blocks.into_iter();
        let mut next = |r: usize, cols: usize| Matrix::from_vec(r, cols, it.next().unwrap()).unwrap();
        net.embedding = next(v, e);
        net.forward.input_weights = next(4 * h, e);
        net.forward.recurrent_weights = next(4 * h, h);
        net.forward.bias = next(1, 4 * h).as_slice().to_vec();
        net.backward.input_weights = next(4 * h, e);
        net.backward.recurrent_weights = next(4 * h, h);
        net.backward.bias = next(1, 4 * h).as_slice().to_vec();
        net.output_weights = next(2 * h, c);
        net.output_bias = next(1, c).as_slice().to_vec();
        Ok(TextClassifier { vocab, net, max_len })
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

impl Trainable for TextClassifier {
    type Input = Vec<usize>;
    type Gradient = BiLstmGradient;

    fn prepare(&self, doc: &Document) -> Result<Vec<usize>> {
        Ok(self.encode(&doc.stripped_text))
    }

    fn predict_input(&self, input: &Vec<usize>) -> ScoreVector {
        let (f, b) = self.net.traces(input);
        ScoreVector::softmax(&self.net.logits(&f.h, &b.h))
    }

    fn loss_and_gradient(&self, batch: &[(&Vec<usize>, &[ClassIndex])]) -> (f64, BiLstmGradient) {
        let batch: Vec<(&[usize], &[ClassIndex])> =
            batch.iter().map(|(x, y)| (x.as_slice(), *y)).collect();
        self.net.gradient_unchecked(&batch)
    }

    fn apply_gradient(&mut self, gradient: &BiLstmGradient, learning_rate: f64) {
        for &r in &gradient.touched_rows {
            crate::linalg::axpy(-learning_rate, gradient.params.embedding.row(r), self.net.embedding.row_mut(r));
        }
        for (p, g) in self
            .net
            .blocks_mut()
            .into_iter()
            .zip(gradient.params.blocks())
            .skip(1)
        {
            crate::linalg::axpy(-learning_rate, g, p);
        }
    }
}

impl Scorer for TextClassifier {
    fn tag(&self) -> String {
        "text".into()
    }

    fn num_classes(&self) -> usize {
        self.net.num_classes()
    }

    fn score(&self, doc: &Document) -> Result<ScoreVector> {
        Ok(self.predict_text(&doc.stripped_text))
    }
}

/// Builds the vocabulary from `train`, initializes a model and trains it with
/// class-balanced batches.
pub fn train_text_model(
    train: &Corpus,
    val: &Corpus,
    shape: &ModelShape,
    min_count: usize,
    config: &TrainConfig,
) -> Result<(TextClassifier, TrainHistory)> {
    let vocab = Vocabulary::build(train, min_count)?;
    let model = TextClassifier::new(vocab, train.num_classes(), shape, config.seed)?;
    let sampler = BalancedSampler::new(train, config.seed.wrapping_add(1))?;
    fit(model, train, val, &sampler, config)
}
