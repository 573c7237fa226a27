//! SGD with momentum, cosine learning-rate annealing and the epoch loop.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{argmax, sample_gradient, ClipInput, ModelConfig, ModelWeights};
use crate::params::decays;

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub lr: f64,
    pub min_lr: f64,
    pub weight_decay: f64,
    pub momentum: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
}

impl TrainConfig {
    /// Default hyperparameters (lr 1e-3, weight decay 1e-4, momentum 0.9,
    /// batch 4, min lr 0) for the given epoch count.
    pub fn with_epochs(epochs: usize) -> Self {
        TrainConfig {
            lr: 1e-3,
            min_lr: 0.0,
            weight_decay: 1e-4,
            momentum: 0.9,
            batch_size: 4,
            epochs,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let rates = [
            ("lr", self.lr),
            ("min_lr", self.min_lr),
            ("weight_decay", self.weight_decay),
            ("momentum", self.momentum),
        ];
        for (name, v) in rates {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be a finite value ≥ 0, got {v}")));
            }
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        Ok(())
    }
}

/// `lr_min + ½(lr_max − lr_min)(1 + cos(π·step/total))`.
pub fn cosine_lr(step: usize, total_steps: usize, lr_max: f64, lr_min: f64) -> Result<f64> {
    if total_steps == 0 || step > total_steps {
        return Err(Error::InvalidArgument(format!(
            "step {step} outside schedule of {total_steps} steps"
        )));
    }
    if step == total_steps {
        return Ok(lr_min);
    }
    let phase = std::f64::consts::PI * step as f64 / total_steps as f64;
    Ok(lr_min + 0.5 * (lr_max - lr_min) * (1.0 + phase.cos()))
}

/// In-place update of one tensor: `g ← grad + wd·p`, `v ← μv + g`,
/// `p ← p − lr·v`.
pub fn sgd_update(param: &mut [f64], grad: &[f64], velocity: &mut [f64], lr: f64, momentum: f64, weight_decay: f64) {
    for ((p, g), v) in param.iter_mut().zip(grad).zip(velocity.iter_mut()) {
        let g = g + weight_decay * *p;
        *v = momentum * *v + g;
        *p -= lr * *v;
    }
}

/// One velocity buffer per parameter tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct OptimizerState {
    pub velocity: ModelWeights,
}

impl OptimizerState {
    pub fn new(params: &ModelWeights) -> Self {
        OptimizerState {
            velocity: params.map(|_, t| crate::numerics::Tensor::zeros(t.shape())),
        }
    }
}

/// Applies [`sgd_update`] to every tensor; weight decay is used only for
/// parameters named `*weight`.
pub fn sgd_momentum_step(
    params: &mut ModelWeights,
    grads: &ModelWeights,
    state: &mut OptimizerState,
    lr: f64,
    momentum: f64,
    weight_decay: f64,
) -> Result<()> {
    let mut grad_list = Vec::new();
    grads.for_each(|n, t| grad_list.push((n.to_string(), t)));
    let mut vel_list = Vec::new();
    state.velocity.for_each_mut(|_, t| vel_list.push(t));
    if grad_list.len() != vel_list.len() {
        return Err(Error::shape("sgd", "gradient and velocity layouts differ"));
    }
    for (name, g) in &grad_list {
        if !g.is_finite() {
            return Err(Error::NonFinite(format!("gradient of {name}")));
        }
    }
    let mut i = 0;
    let mut err = None;
    params.for_each_mut(|name, p| {
        let (gname, g) = &grad_list[i];
        let v = &mut vel_list[i];
        i += 1;
        if err.is_some() {
            return;
        }
        if name != gname || p.shape() != g.shape() || p.shape() != v.shape() {
            err = Some(Error::shape("sgd", format!("{name} does not match gradient {gname}")));
            return;
        }
        let wd = if decays(name) { weight_decay } else { 0.0 };
        sgd_update(p.data_mut(), g.data(), v.data_mut(), lr, momentum, wd);
    });
    if i != grad_list.len() {
        return Err(Error::shape("sgd", "parameter and gradient layouts differ"));
    }
    err.map_or(Ok(()), Err)
}

/// A labelled, preprocessed clip.
#[derive(Clone, Debug)]
pub struct TrainSample {
    pub id: String,
    pub clip: ClipInput,
    pub label: usize,
}

/// One line of the training log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    /// 1-based epoch number.
    pub epoch: usize,
    /// Optimizer steps taken so far.
    pub step: usize,
    /// Learning rate of the epoch's last step.
    pub lr: f64,
    /// Mean per-sample loss over the epoch, measured before each update.
    pub loss: f64,
    /// Fraction of samples classified correctly during the epoch's passes.
    pub train_accuracy: f64,
}

impl EpochLog {
    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("log record serializes")
    }
}

/// Loss and correctness of one batch, with its averaged gradient.
pub struct BatchResult {
    pub losses: Vec<f64>,
    pub correct: usize,
    pub grads: ModelWeights,
}

/// Forward and backward for a batch. Samples run in parallel; gradients
/// are summed in batch order and divided by the batch size, so the result
/// does not depend on the thread count.
pub fn batch_gradient(weights: &ModelWeights, cfg: &ModelConfig, batch: &[&TrainSample]) -> Result<BatchResult> {
    if batch.is_empty() {
        return Err(Error::InvalidArgument("empty batch".into()));
    }
    let results: Vec<_> = batch
        .par_iter()
        .map(|s| {
            sample_gradient(weights, cfg, &s.clip, s.label).map_err(|e| Error::Sample {
                sample_id: s.id.clone(),
                detail: format!("training step failed: {e}"),
            })
        })
        .collect::<Result<_>>()?;

    let mut grads = results[0].grads.clone();
    let mut losses = Vec::with_capacity(batch.len());
    let mut correct = 0;
    for (k, (r, s)) in results.iter().zip(batch).enumerate() {
        if !r.loss.is_finite() {
            return Err(Error::Sample {
                sample_id: s.id.clone(),
                detail: format!("non-finite loss {}", r.loss),
            });
        }
        losses.push(r.loss);
        correct += usize::from(argmax(&r.probs) == s.label);
        if k > 0 {
            let mut acc = Vec::new();
            grads.for_each_mut(|_, t| acc.push(t));
            let mut i = 0;
            r.grads.for_each(|_, t| {
                acc[i].data_mut().iter_mut().zip(t.data()).for_each(|(a, b)| *a += b);
                i += 1;
            });
        }
    }
    let n = batch.len() as f64;
    grads.for_each_mut(|_, t| t.data_mut().iter_mut().for_each(|v| *v /= n));
    Ok(BatchResult { losses, correct, grads })
}

/// Sample order for an epoch: a permutation drawn from a ChaCha stream
/// keyed by `(seed, epoch)`.
pub fn epoch_order(n: usize, seed: u64, epoch: usize) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(epoch as u64);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    order
}

pub fn steps_per_epoch(samples: usize, batch_size: usize) -> usize {
    samples.div_ceil(batch_size)
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub weights: ModelWeights,
    pub log: Vec<EpochLog>,
}

/// Trains `weights` in place of a copy and returns the result with the
/// per-epoch log. `on_epoch` sees each record as it is produced.
pub fn train(
    weights: &ModelWeights,
    cfg: &ModelConfig,
    samples: &[TrainSample],
    tc: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochLog),
) -> Result<TrainOutcome> {
    tc.validate()?;
    if samples.is_empty() {
        return Err(Error::InvalidArgument("training set is empty".into()));
    }
    for s in samples {
        if s.label >= cfg.classes {
            return Err(Error::Sample {
                sample_id: s.id.clone(),
                detail: format!("label {} out of range for {} classes", s.label, cfg.classes),
            });
        }
        s.clip.check(cfg).map_err(|e| Error::Sample {
            sample_id: s.id.clone(),
            detail: e.to_string(),
        })?;
    }
    let mut params = weights.clone();
    let mut state = OptimizerState::new(&params);
    let per_epoch = steps_per_epoch(samples.len(), tc.batch_size);
    let total = tc.epochs * per_epoch;
    let mut step = 0;
    let mut log = Vec::with_capacity(tc.epochs);
    for epoch in 0..tc.epochs {
        let order = epoch_order(samples.len(), tc.seed, epoch);
        let mut loss_sum = 0.0;
        let mut correct = 0;
        let mut lr = tc.lr;
        for chunk in order.chunks(tc.batch_size) {
            let batch: Vec<&TrainSample> = chunk.iter().map(|&i| &samples[i]).collect();
            let result = batch_gradient(&params, cfg, &batch)?;
            loss_sum += result.losses.iter().sum::<f64>();
            correct += result.correct;
            lr = cosine_lr(step, total, tc.lr, tc.min_lr)?;
            sgd_momentum_step(&mut params, &result.grads, &mut state, lr, tc.momentum, tc.weight_decay)?;
            step += 1;
        }
        let record = EpochLog {
            epoch: epoch + 1,
            step,
            lr,
            loss: loss_sum / samples.len() as f64,
            train_accuracy: correct as f64 / samples.len() as f64,
        };
        on_epoch(&record);
        log.push(record);
    }
    Ok(TrainOutcome { weights: params, log })
}
