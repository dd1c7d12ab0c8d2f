//! Multinomial logistic regression trained by mini-batch gradient descent.
//!
//! The objective is mean softmax cross-entropy plus `l2 * ||W||^2` (the bias
//! is not penalized). Weights start at zero, so the seed only controls the
//! per-epoch batch order.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::features::{featurize, SparseVector};
use crate::data::{LabeledDataset, ProbKind, ProbMatrix};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub feature_dims: usize,
    pub seed: u64,
    pub l2: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 5,
            learning_rate: 0.5,
            batch_size: 16,
            feature_dims: 1 << 14,
            seed: 0,
            l2: 1e-4,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidConfig(msg.to_string()));
        if self.epochs < 1 {
            return bad("epochs must be at least 1");
        }
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            return bad("learning_rate must be a non-negative finite number");
        }
        if self.batch_size < 1 {
            return bad("batch_size must be at least 1");
        }
        if self.feature_dims < 2 {
            return bad("feature_dims must be at least 2");
        }
        if !(self.l2.is_finite() && self.l2 >= 0.0) {
            return bad("l2 must be a non-negative finite number");
        }
        Ok(())
    }
}

/// C×D weights (row-major by class) and a C-vector of biases.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    n_classes: usize,
    dims: usize,
    weights: Vec<f64>,
    bias: Vec<f64>,
}

impl ModelParams {
    pub fn zeros(n_classes: usize, dims: usize) -> Self {
        Self {
            n_classes,
            dims,
            weights: vec![0.0; n_classes * dims],
            bias: vec![0.0; n_classes],
        }
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn dims(&self) -> usize {
        self.dims
    }

    pub fn weight(&self, class: usize, dim: usize) -> f64 {
        self.weights[class * self.dims + dim]
    }

    pub fn set_weight(&mut self, class: usize, dim: usize, value: f64) {
        self.weights[class * self.dims + dim] = value;
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    pub fn bias_mut(&mut self) -> &mut [f64] {
        &mut self.bias
    }

    pub fn is_finite(&self) -> bool {
        self.weights.iter().chain(&self.bias).all(|v| v.is_finite())
    }

    fn class_weights(&self, class: usize) -> &[f64] {
        &self.weights[class * self.dims..(class + 1) * self.dims]
    }

    pub fn logits(&self, x: &SparseVector) -> Vec<f64> {
        (0..self.n_classes)
            .map(|c| self.bias[c] + x.dot(self.class_weights(c)))
            .collect()
    }

    pub fn probabilities(&self, x: &SparseVector) -> Vec<f64> {
        let mut z = self.logits(x);
        softmax_in_place(&mut z);
        z
    }

    fn squared_norm(&self) -> f64 {
        self.weights.iter().map(|w| w * w).sum()
    }
}

/// Numerically stable softmax.
pub fn softmax_in_place(z: &mut [f64]) {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for v in z.iter_mut() {
        *v = (*v - max).exp();
        total += *v;
    }
    for v in z.iter_mut() {
        *v /= total;
    }
}

fn log_sum_exp(z: &[f64]) -> f64 {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    max + z.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Objective value and its dense gradient over a batch.
pub fn objective(
    params: &ModelParams,
    features: &[SparseVector],
    labels: &[usize],
    l2: f64,
) -> (f64, ModelParams) {
    let mut grad = ModelParams::zeros(params.n_classes, params.dims);
    let scale = 1.0 / features.len() as f64;
    let mut loss = 0.0;
    for (x, &y) in features.iter().zip(labels) {
        let z = params.logits(x);
        loss += log_sum_exp(&z) - z[y];
        accumulate_residual(&mut grad, x, &z, y, scale);
    }
    loss = loss * scale + l2 * params.squared_norm();
    for (g, w) in grad.weights.iter_mut().zip(&params.weights) {
        *g += 2.0 * l2 * w;
    }
    (loss, grad)
}

/// Adds `scale * (softmax(z) - onehot(y)) x^T` into `grad`.
fn accumulate_residual(grad: &mut ModelParams, x: &SparseVector, z: &[f64], y: usize, scale: f64) {
    let mut p = z.to_vec();
    softmax_in_place(&mut p);
    p[y] -= 1.0;
    let dims = grad.dims;
    for (c, residual) in p.iter().enumerate() {
        let r = residual * scale;
        grad.bias[c] += r;
        let row = &mut grad.weights[c * dims..(c + 1) * dims];
        for &(i, v) in x.entries() {
            row[i] += r * v;
        }
    }
}

/// Featurizes every example of `ds`.
pub fn featurize_dataset(ds: &LabeledDataset, dims: usize) -> Vec<SparseVector> {
    ds.examples()
        .iter()
        .map(|e| featurize(&e.text, dims))
        .collect()
}

/// Stateful mini-batch trainer; one call to [`Trainer::run_epoch`] is one
/// pass over the data.
pub(crate) struct Trainer<'a> {
    cfg: &'a TrainConfig,
    features: &'a [SparseVector],
    labels: Vec<usize>,
    params: ModelParams,
    rng: ChaCha8Rng,
    order: Vec<usize>,
    epoch: usize,
}

impl<'a> Trainer<'a> {
    pub(crate) fn new(
        cfg: &'a TrainConfig,
        features: &'a [SparseVector],
        labels: Vec<usize>,
        n_classes: usize,
    ) -> Self {
        Self {
            cfg,
            features,
            labels,
            params: ModelParams::zeros(n_classes, cfg.feature_dims),
            rng: ChaCha8Rng::seed_from_u64(cfg.seed),
            order: (0..features.len()).collect(),
            epoch: 0,
        }
    }

    pub(crate) fn params(&self) -> &ModelParams {
        &self.params
    }

    pub(crate) fn into_params(self) -> ModelParams {
        self.params
    }

    /// Returns the mean batch objective over the epoch.
    pub(crate) fn run_epoch(&mut self) -> Result<f64> {
        self.epoch += 1;
        self.order.shuffle(&mut self.rng);
        let lr = self.cfg.learning_rate;
        let decay = 1.0 - 2.0 * lr * self.cfg.l2;
        let mut grad = ModelParams::zeros(self.params.n_classes, self.params.dims);
        let mut total = 0.0;
        let mut batches = 0usize;

        let order = std::mem::take(&mut self.order);
        for batch in order.chunks(self.cfg.batch_size) {
            let scale = 1.0 / batch.len() as f64;
            let mut loss = 0.0;
            grad.bias.iter_mut().for_each(|b| *b = 0.0);
            for &i in batch {
                let x = &self.features[i];
                let y = self.labels[i];
                let z = self.params.logits(x);
                loss += log_sum_exp(&z) - z[y];
                accumulate_residual(&mut grad, x, &z, y, scale);
            }
            total += loss * scale + self.cfg.l2 * self.params.squared_norm();
            batches += 1;

            // W <- W - lr * (G + 2 l2 W); only touched coordinates of G are
            // non-zero, so apply the decay densely and the data term sparsely.
            if decay != 1.0 {
                self.params.weights.iter_mut().for_each(|w| *w *= decay);
            }
            let dims = self.params.dims;
            for &i in batch {
                for &(d, _) in self.features[i].entries() {
                    for c in 0..self.params.n_classes {
                        let g = &mut grad.weights[c * dims + d];
                        if *g != 0.0 {
                            self.params.weights[c * dims + d] -= lr * *g;
                            *g = 0.0;
                        }
                    }
                }
            }
            for (b, g) in self.params.bias.iter_mut().zip(&grad.bias) {
                *b -= lr * g;
            }
        }
        self.order = order;

        let mean = total / batches.max(1) as f64;
        if !mean.is_finite() || !self.params.is_finite() {
            return Err(Error::NonFiniteLoss { epoch: self.epoch });
        }
        Ok(mean)
    }
}

/// Trains a model on `ds` from zero initialization.
pub fn train(ds: &LabeledDataset, cfg: &TrainConfig) -> Result<ModelParams> {
    cfg.validate()?;
    if ds.is_empty() {
        return Err(Error::InvalidConfig(
            "cannot train on an empty dataset".into(),
        ));
    }
    ds.require_class_counts(1)?;
    let features = featurize_dataset(ds, cfg.feature_dims);
    train_features(&features, ds.labels(), ds.n_classes(), cfg)
}

pub(crate) fn train_features(
    features: &[SparseVector],
    labels: Vec<usize>,
    n_classes: usize,
    cfg: &TrainConfig,
) -> Result<ModelParams> {
    let mut trainer = Trainer::new(cfg, features, labels, n_classes);
    for _ in 0..cfg.epochs {
        let loss = trainer.run_epoch()?;
        log::trace!("epoch {} loss {loss:.6}", trainer.epoch);
    }
    Ok(trainer.into_params())
}

/// In-sample class probabilities for every example of `ds`.
pub fn predict_proba(params: &ModelParams, ds: &LabeledDataset) -> ProbMatrix {
    let features = featurize_dataset(ds, params.dims);
    predict_features(params, ds, &features)
}

pub(crate) fn predict_features(
    params: &ModelParams,
    ds: &LabeledDataset,
    features: &[SparseVector],
) -> ProbMatrix {
    let values = features
        .iter()
        .flat_map(|x| params.probabilities(x))
        .collect();
    ProbMatrix::from_flat(
        ds.ids().map(String::from).collect(),
        params.n_classes,
        values,
        ProbKind::InSample,
    )
}
