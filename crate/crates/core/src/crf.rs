//! Linear-chain conditional random field.
//!
//! Potentials are log-linear: each token contributes the emission weights of
//! its active features for its label, each adjacent label pair contributes a
//! transition weight, and the first and last labels contribute start and end
//! weights. All inference runs in log space.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{self, FeatureDictionary, FeatureVector, PosTag};
use crate::tagging::{LabelSequence, Scheme};

pub const MODEL_FILE_VERSION: u32 = 1;

/// Dense parameter vector laid out as emissions (feature-major), then
/// transitions (from-major), then start and end vectors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Weights {
    n_features: usize,
    n_labels: usize,
    params: Vec<f64>,
}

impl Weights {
    pub fn zeros(n_features: usize, n_labels: usize) -> Self {
        let len = n_features * n_labels + n_labels * n_labels + 2 * n_labels;
        Self {
            n_features,
            n_labels,
            params: vec![0.0; len],
        }
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn n_labels(&self) -> usize {
        self.n_labels
    }

    pub fn emission_index(&self, feature: usize, label: usize) -> usize {
        feature * self.n_labels + label
    }

    pub fn transition_index(&self, from: usize, to: usize) -> usize {
        self.n_features * self.n_labels + from * self.n_labels + to
    }

    pub fn start_index(&self, label: usize) -> usize {
        self.n_features * self.n_labels + self.n_labels * self.n_labels + label
    }

    pub fn end_index(&self, label: usize) -> usize {
        self.start_index(label) + self.n_labels
    }

    pub fn emission(&self, feature: usize, label: usize) -> f64 {
        self.params[self.emission_index(feature, label)]
    }

    pub fn transition(&self, from: usize, to: usize) -> f64 {
        self.params[self.transition_index(from, to)]
    }

    pub fn start(&self, label: usize) -> f64 {
        self.params[self.start_index(label)]
    }

    pub fn end(&self, label: usize) -> f64 {
        self.params[self.end_index(label)]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.params
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn is_finite(&self) -> bool {
        self.params.iter().all(|w| w.is_finite())
    }

    fn squared_norm(&self) -> f64 {
        self.params.iter().map(|w| w * w).sum()
    }

    /// Per-token, per-label emission scores (`len * n_labels`).
    fn emissions(&self, features: &[FeatureVector]) -> Result<Vec<f64>> {
        let l = self.n_labels;
        let mut out = vec![0.0; features.len() * l];
        for (t, feats) in features.iter().enumerate() {
            let row = &mut out[t * l..(t + 1) * l];
            for &f in feats {
                let f = f as usize;
                if f >= self.n_features {
                    return Err(Error::InvalidArgument(format!(
                        "feature id {f} out of range for {} features",
                        self.n_features
                    )));
                }
                let base = f * l;
                for (y, slot) in row.iter_mut().enumerate() {
                    *slot += self.params[base + y];
                }
            }
        }
        Ok(out)
    }

    fn check_labels(&self, len: usize, labels: &[usize]) -> Result<()> {
        if labels.len() != len {
            return Err(Error::LengthMismatch {
                index: 0,
                expected: len,
                found: labels.len(),
            });
        }
        if let Some(pos) = labels.iter().position(|&y| y >= self.n_labels) {
            return Err(Error::InvalidLabels {
                position: pos,
                message: format!("label id {} outside the {}-label set", labels[pos], self.n_labels),
            });
        }
        Ok(())
    }

    fn path_score(&self, emit: &[f64], labels: &[usize]) -> f64 {
        let l = self.n_labels;
        let mut score = self.start(labels[0]) + self.end(labels[labels.len() - 1]);
        for (t, &y) in labels.iter().enumerate() {
            score += emit[t * l + y];
            if t > 0 {
                score += self.transition(labels[t - 1], y);
            }
        }
        score
    }
}

fn log_sum_exp(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let max = values.clone().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + values.map(|v| (v - max).exp()).sum::<f64>().ln()
}

fn non_empty(features: &[FeatureVector]) -> Result<()> {
    if features.is_empty() {
        Err(Error::InvalidArgument("empty sequence".into()))
    } else {
        Ok(())
    }
}

/// Log-potential of one labelling.
pub fn sequence_score(weights: &Weights, features: &[FeatureVector], labels: &[usize]) -> Result<f64> {
    non_empty(features)?;
    weights.check_labels(features.len(), labels)?;
    let emit = weights.emissions(features)?;
    Ok(weights.path_score(&emit, labels))
}

/// Log-space forward and backward tables of one sequence.
#[derive(Debug, Clone)]
pub struct Lattice {
    len: usize,
    n_labels: usize,
    emit: Vec<f64>,
    alpha: Vec<f64>,
    beta: Vec<f64>,
    log_z: f64,
}

impl Lattice {
    pub fn new(weights: &Weights, features: &[FeatureVector]) -> Result<Self> {
        non_empty(features)?;
        let emit = weights.emissions(features)?;
        let (len, l) = (features.len(), weights.n_labels);

        let mut alpha = vec![0.0; len * l];
        for y in 0..l {
            alpha[y] = weights.start(y) + emit[y];
        }
        for t in 1..len {
            for y in 0..l {
                let prev = &alpha[(t - 1) * l..t * l];
                let incoming = log_sum_exp((0..l).map(|a| prev[a] + weights.transition(a, y)));
                alpha[t * l + y] = emit[t * l + y] + incoming;
            }
        }

        let mut beta = vec![0.0; len * l];
        for y in 0..l {
            beta[(len - 1) * l + y] = weights.end(y);
        }
        for t in (0..len - 1).rev() {
            for a in 0..l {
                let next = (t + 1) * l;
                beta[t * l + a] =
                    log_sum_exp((0..l).map(|b| weights.transition(a, b) + emit[next + b] + beta[next + b]));
            }
        }

        let last = (len - 1) * l;
        let log_z = log_sum_exp((0..l).map(|y| alpha[last + y] + weights.end(y)));
        Ok(Self {
            len,
            n_labels: l,
            emit,
            alpha,
            beta,
            log_z,
        })
    }

    pub fn log_z(&self) -> f64 {
        self.log_z
    }

    /// The partition value recomputed from the backward table.
    pub fn backward_log_z(&self, weights: &Weights) -> f64 {
        log_sum_exp((0..self.n_labels).map(|y| weights.start(y) + self.emit[y] + self.beta[y]))
    }

    /// `P(y_t = y)`, row-major `len * n_labels`.
    pub fn unary_marginals(&self) -> Vec<f64> {
        self.alpha
            .iter()
            .zip(&self.beta)
            .map(|(a, b)| (a + b - self.log_z).exp())
            .collect()
    }

    /// `P(y_t = a, y_{t+1} = b)` for each `t < len - 1`, `(len - 1) * L * L`.
    pub fn pairwise_marginals(&self, weights: &Weights) -> Vec<f64> {
        let l = self.n_labels;
        let mut out = Vec::with_capacity(self.len.saturating_sub(1) * l * l);
        for t in 0..self.len.saturating_sub(1) {
            for a in 0..l {
                for b in 0..l {
                    let next = (t + 1) * l + b;
                    let lp = self.alpha[t * l + a] + weights.transition(a, b) + self.emit[next] + self.beta[next]
                        - self.log_z;
                    out.push(lp.exp());
                }
            }
        }
        out
    }
}

/// Log partition value over all labellings.
pub fn forward_log_z(weights: &Weights, features: &[FeatureVector]) -> Result<f64> {
    Ok(Lattice::new(weights, features)?.log_z)
}

/// Highest-scoring labelling and its score. Ties resolve to the lowest
/// label id at every backpointer.
pub fn viterbi(weights: &Weights, features: &[FeatureVector]) -> Result<(Vec<usize>, f64)> {
    non_empty(features)?;
    let emit = weights.emissions(features)?;
    let (len, l) = (features.len(), weights.n_labels);
    let mut delta: Vec<f64> = (0..l).map(|y| weights.start(y) + emit[y]).collect();
    let mut back = vec![0usize; len * l];
    for t in 1..len {
        let mut next = vec![0.0; l];
        for y in 0..l {
            let mut best = f64::NEG_INFINITY;
            let mut arg = 0;
            for (a, d) in delta.iter().enumerate() {
                let s = d + weights.transition(a, y);
                if s > best {
                    best = s;
                    arg = a;
                }
            }
            next[y] = best + emit[t * l + y];
            back[t * l + y] = arg;
        }
        delta = next;
    }
    let mut best = f64::NEG_INFINITY;
    let mut last = 0;
    for (y, d) in delta.iter().enumerate() {
        let s = d + weights.end(y);
        if s > best {
            best = s;
            last = y;
        }
    }
    let mut path = vec![0; len];
    path[len - 1] = last;
    for t in (1..len).rev() {
        path[t - 1] = back[t * l + path[t]];
    }
    Ok((path, best))
}

/// One training example: per-token feature ids and gold label ids.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSequence {
    pub features: Vec<FeatureVector>,
    pub labels: Vec<usize>,
}

/// Loss and gradient over a batch.
#[derive(Debug, Clone)]
pub struct Objective {
    pub loss: f64,
    pub gradient: Vec<f64>,
}

struct SequenceStats {
    nll: f64,
    unary: Vec<f64>,
    pair_sum: Vec<f64>,
}

fn sequence_stats(weights: &Weights, seq: &LabeledSequence, index: usize) -> Result<SequenceStats> {
    weights.check_labels(seq.features.len(), &seq.labels)?;
    let lattice = Lattice::new(weights, &seq.features)?;
    let gold = weights.path_score(&lattice.emit, &seq.labels);
    let nll = lattice.log_z - gold;
    if !nll.is_finite() {
        return Err(Error::NonFinite { index });
    }
    let l = weights.n_labels;
    let mut pair_sum = vec![0.0; l * l];
    for chunk in lattice.pairwise_marginals(weights).chunks(l * l) {
        for (acc, p) in pair_sum.iter_mut().zip(chunk) {
            *acc += p;
        }
    }
    Ok(SequenceStats {
        nll,
        unary: lattice.unary_marginals(),
        pair_sum,
    })
}

/// Negative log-likelihood of the batch plus `(l2 / 2) * |w|^2`, and its
/// gradient (expected minus empirical feature counts plus `l2 * w`).
///
/// Per-sequence work runs in parallel; the reduction is sequential in batch
/// order so results do not depend on thread count.
pub fn nll_gradient(weights: &Weights, batch: &[LabeledSequence], l2: f64) -> Result<Objective> {
    if batch.is_empty() {
        return Err(Error::InvalidArgument("empty batch".into()));
    }
    let stats: Vec<SequenceStats> = batch
        .par_iter()
        .enumerate()
        .map(|(i, seq)| sequence_stats(weights, seq, i))
        .collect::<Result<_>>()?;

    let l = weights.n_labels;
    let mut grad: Vec<f64> = weights.params.iter().map(|w| l2 * w).collect();
    let mut loss = 0.5 * l2 * weights.squared_norm();
    for (seq, st) in batch.iter().zip(&stats) {
        loss += st.nll;
        let len = seq.features.len();
        for t in 0..len {
            let gold = seq.labels[t];
            for &f in &seq.features[t] {
                let base = weights.emission_index(f as usize, 0);
                for y in 0..l {
                    grad[base + y] += st.unary[t * l + y];
                }
                grad[base + gold] -= 1.0;
            }
            if t > 0 {
                grad[weights.transition_index(seq.labels[t - 1], gold)] -= 1.0;
            }
        }
        for a in 0..l {
            for b in 0..l {
                grad[weights.transition_index(a, b)] += st.pair_sum[a * l + b];
            }
            grad[weights.start_index(a)] += st.unary[a];
            grad[weights.end_index(a)] += st.unary[(len - 1) * l + a];
        }
        grad[weights.start_index(seq.labels[0])] -= 1.0;
        grad[weights.end_index(seq.labels[len - 1])] -= 1.0;
    }
    if !loss.is_finite() {
        return Err(Error::NonFinite { index: 0 });
    }
    Ok(Objective { loss, gradient: grad })
}

/// Mean per-sequence negative log-likelihood, without regularization.
pub fn mean_nll(weights: &Weights, data: &[LabeledSequence]) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::InvalidArgument("empty dataset".into()));
    }
    let nlls: Vec<f64> = data
        .par_iter()
        .enumerate()
        .map(|(i, seq)| {
            weights.check_labels(seq.features.len(), &seq.labels)?;
            let lattice = Lattice::new(weights, &seq.features)?;
            let nll = lattice.log_z - weights.path_score(&lattice.emit, &seq.labels);
            if nll.is_finite() {
                Ok(nll)
            } else {
                Err(Error::NonFinite { index: i })
            }
        })
        .collect::<Result<_>>()?;
    Ok(nlls.iter().sum::<f64>() / data.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Optimizer {
    /// Adaptive moment estimation with decoupled weight decay.
    AdamW {
        beta1: f64,
        beta2: f64,
        epsilon: f64,
        weight_decay: f64,
    },
    Sgd,
}

impl Default for Optimizer {
    fn default() -> Self {
        Optimizer::AdamW {
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            weight_decay: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub learning_rate: f64,
    pub optimizer: Optimizer,
    pub l2: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 8,
            max_epochs: 20,
            patience: 3,
            learning_rate: 1e-5,
            optimizer: Optimizer::default(),
            l2: 1e-2,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_epochs < 1 || self.patience < 1 || self.batch_size < 1 {
            return Err(Error::InvalidArgument(
                "batch size, max epochs and patience must all be at least 1".into(),
            ));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) || !(self.l2 >= 0.0) {
            return Err(Error::InvalidArgument("learning rate and l2 must be finite and non-negative".into()));
        }
        Ok(())
    }
}

struct OptimizerState {
    step: i32,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl OptimizerState {
    fn new(n: usize) -> Self {
        Self {
            step: 0,
            m: vec![0.0; n],
            v: vec![0.0; n],
        }
    }

    fn apply(&mut self, kind: Optimizer, lr: f64, params: &mut [f64], grad: &[f64]) {
        match kind {
            Optimizer::Sgd => {
                for (w, g) in params.iter_mut().zip(grad) {
                    *w -= lr * g;
                }
            }
            Optimizer::AdamW {
                beta1,
                beta2,
                epsilon,
                weight_decay,
            } => {
                self.step += 1;
                let c1 = 1.0 - beta1.powi(self.step);
                let c2 = 1.0 - beta2.powi(self.step);
                for i in 0..params.len() {
                    let g = grad[i];
                    self.m[i] = beta1 * self.m[i] + (1.0 - beta1) * g;
                    self.v[i] = beta2 * self.v[i] + (1.0 - beta2) * g * g;
                    let m_hat = self.m[i] / c1;
                    let v_hat = self.v[i] / c2;
                    params[i] -= lr * (m_hat / (v_hat.sqrt() + epsilon) + weight_decay * params[i]);
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_nll: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Checkpoint with the lowest validation loss.
    pub model: CrfModel,
    pub best_epoch: usize,
    pub epochs_run: usize,
    pub history: Vec<EpochStats>,
}

/// Mini-batch training from zero weights with early stopping on mean
/// validation NLL. The seed only controls batch order.
pub fn train(
    dictionary: FeatureDictionary,
    scheme: Scheme,
    train_set: &[LabeledSequence],
    val_set: &[LabeledSequence],
    config: &TrainConfig,
) -> Result<TrainOutcome> {
    config.validate()?;
    if !dictionary.is_frozen() {
        return Err(Error::InvalidArgument("feature dictionary must be frozen before training".into()));
    }
    if train_set.is_empty() || val_set.is_empty() {
        return Err(Error::InvalidArgument("training and validation sets must be non-empty".into()));
    }

    let mut weights = Weights::zeros(dictionary.len(), scheme.num_labels());
    let mut state = OptimizerState::new(weights.params.len());
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..train_set.len()).collect();

    let mut best: Option<(f64, usize, Weights)> = None;
    let mut stale = 0;
    let mut history = Vec::new();
    for epoch in 1..=config.max_epochs {
        order.shuffle(&mut rng);
        let mut train_loss = 0.0;
        for chunk in order.chunks(config.batch_size) {
            let batch: Vec<LabeledSequence> = chunk.iter().map(|&i| train_set[i].clone()).collect();
            let obj = nll_gradient(&weights, &batch, config.l2).map_err(|e| match e {
                Error::NonFinite { .. } => Error::Diverged { epoch },
                other => other,
            })?;
            train_loss += obj.loss;
            state.apply(config.optimizer, config.learning_rate, &mut weights.params, &obj.gradient);
            if !weights.is_finite() {
                return Err(Error::Diverged { epoch });
            }
        }
        let val_nll = mean_nll(&weights, val_set).map_err(|e| match e {
            Error::NonFinite { .. } => Error::Diverged { epoch },
            other => other,
        })?;
        history.push(EpochStats {
            epoch,
            train_loss,
            val_nll,
        });

        match &best {
            Some((b, _, _)) if val_nll >= *b => {
                stale += 1;
                if stale >= config.patience {
                    break;
                }
            }
            _ => {
                best = Some((val_nll, epoch, weights.clone()));
                stale = 0;
            }
        }
    }

    let (_, best_epoch, weights) = best.expect("at least one epoch runs");
    Ok(TrainOutcome {
        model: CrfModel {
            scheme,
            dictionary,
            weights,
            l2: config.l2,
            config: Some(config.clone()),
        },
        best_epoch,
        epochs_run: history.len(),
        history,
    })
}

/// A trained tagger: label scheme, frozen feature dictionary and weights.
#[derive(Debug, Clone, PartialEq)]
pub struct CrfModel {
    pub scheme: Scheme,
    pub dictionary: FeatureDictionary,
    pub weights: Weights,
    pub l2: f64,
    pub config: Option<TrainConfig>,
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    version: u32,
    scheme: Scheme,
    labels: Vec<String>,
    dictionary_hash: String,
    features: Vec<String>,
    weights: Weights,
    l2: f64,
    config: Option<TrainConfig>,
}

impl CrfModel {
    /// Feature ids of each token, computing POS tags when none are given.
    /// Features unknown to the dictionary are dropped.
    pub fn featurize<S: AsRef<str>>(&self, tokens: &[S], pos: Option<&[PosTag]>) -> Result<Vec<FeatureVector>> {
        featurize(&self.dictionary, tokens, pos)
    }

    pub fn tag<S: AsRef<str>>(&self, tokens: &[S], pos: Option<&[PosTag]>) -> Result<LabelSequence> {
        if tokens.is_empty() {
            return Ok(LabelSequence::outside(self.scheme, 0));
        }
        let feats = self.featurize(tokens, pos)?;
        let (path, _) = viterbi(&self.weights, &feats)?;
        LabelSequence::from_ids(self.scheme, &path)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let file = ModelFile {
            version: MODEL_FILE_VERSION,
            scheme: self.scheme,
            labels: self.scheme.labels().iter().map(ToString::to_string).collect(),
            dictionary_hash: self.dictionary.content_hash(),
            features: self.dictionary.names().to_vec(),
            weights: self.weights.clone(),
            l2: self.l2,
            config: self.config.clone(),
        };
        let mut out = BufWriter::new(File::create(path)?);
        serde_json::to_writer(&mut out, &file)?;
        out.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let file: ModelFile = serde_json::from_reader(BufReader::new(File::open(path)?))?;
        if file.version != MODEL_FILE_VERSION {
            return Err(Error::Version {
                expected: MODEL_FILE_VERSION,
                found: file.version,
            });
        }
        let dictionary = FeatureDictionary::from_names(file.features)?;
        if dictionary.content_hash() != file.dictionary_hash {
            return Err(Error::InvalidArgument("model dictionary hash does not match its features".into()));
        }
        let expected = Weights::zeros(dictionary.len(), file.scheme.num_labels());
        if file.weights.n_features != expected.n_features
            || file.weights.n_labels != expected.n_labels
            || file.weights.params.len() != expected.params.len()
        {
            return Err(Error::Dimension {
                expected: expected.params.len(),
                found: file.weights.params.len(),
                line: None,
            });
        }
        if !file.weights.is_finite() {
            return Err(Error::InvalidArgument("model contains non-finite weights".into()));
        }
        Ok(Self {
            scheme: file.scheme,
            dictionary,
            weights: file.weights,
            l2: file.l2,
            config: file.config,
        })
    }
}

/// Feature ids for each token under `dictionary`.
pub fn featurize<S: AsRef<str>>(
    dictionary: &FeatureDictionary,
    tokens: &[S],
    pos: Option<&[PosTag]>,
) -> Result<Vec<FeatureVector>> {
    let tags = features::pos_tag(tokens, pos)?;
    Ok(features::sequence_features(tokens, &tags)?
        .iter()
        .map(|f| dictionary.vectorize(f))
        .collect())
}
