//! The full clip classifier: per-frame encoder, temporal aggregator and
//! head, with named parameters.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::encoder::{encode_frame, AttentionScale, EmbedConfig, EmbedWeights, EncoderConfig, EncoderLayerWeights};
use crate::error::{Error, Result};
use crate::numerics::{Graph, NodeId, Tensor, LN_EPS};
use crate::temporal::{aggregate, classify, Aggregator, HeadWeights, LstmLayerWeights, CE_EPS, LSTM_LAYERS};

/// Standard deviation of the truncated-normal class-token init.
pub const INIT_STD: f64 = 0.02;

/// Half-width of the uniform LSTM matrix init.
pub const LSTM_INIT_RANGE: f64 = 1.0;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ModelConfig {
    pub embed: EmbedConfig,
    pub encoder: EncoderConfig,
    pub aggregator: Aggregator,
    /// Head hidden width `D_h`.
    pub head_hidden: usize,
    pub classes: usize,
}

impl ModelConfig {
    /// Small CPU configuration: 32×32×3 input, 8×8 patches (N = 16),
    /// D = 16, two layers of four heads.
    pub fn desk(aggregator: Aggregator, classes: usize) -> Self {
        ModelConfig {
            embed: EmbedConfig {
                image_side: 32,
                patch: 8,
                channels: 3,
                dim: 16,
            },
            encoder: EncoderConfig {
                layers: 2,
                heads: 4,
                dim: 16,
                ff_mult: 4,
                scale: AttentionScale::Model,
                ln_eps: LN_EPS,
            },
            aggregator,
            head_hidden: 16,
            classes,
        }
    }

    pub fn dim(&self) -> usize {
        self.embed.dim
    }

    pub fn validate(&self) -> Result<()> {
        self.embed.validate()?;
        self.encoder.validate()?;
        if self.embed.dim != self.encoder.dim {
            return Err(Error::Config(format!(
                "embedding width {} differs from encoder width {}",
                self.embed.dim, self.encoder.dim
            )));
        }
        if self.classes < 2 {
            return Err(Error::Config(format!("need at least 2 classes, got {}", self.classes)));
        }
        if self.head_hidden == 0 {
            return Err(Error::Config("head_hidden must be positive".into()));
        }
        Ok(())
    }
}

type Filler<'a> = Box<dyn FnMut(&mut ChaCha8Rng) -> f64 + 'a>;

/// Every trainable tensor of the model. Names are `embed.*`,
/// `encoder.{i}.*`, `lstm.{i}.*` and `head.*`.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelWeights<T = Tensor> {
    pub embed: EmbedWeights<T>,
    pub encoder: Vec<EncoderLayerWeights<T>>,
    /// Empty for the mean aggregator.
    pub lstm: Vec<LstmLayerWeights<T>>,
    pub head: HeadWeights<T>,
}

impl<T> ModelWeights<T> {
    pub fn for_each<'a>(&'a self, mut f: impl FnMut(&str, &'a T)) {
        self.embed.for_each(|n, t| f(&format!("embed.{n}"), t));
        for (i, layer) in self.encoder.iter().enumerate() {
            layer.for_each(|n, t| f(&format!("encoder.{i}.{n}"), t));
        }
        for (i, layer) in self.lstm.iter().enumerate() {
            layer.for_each(|n, t| f(&format!("lstm.{i}.{n}"), t));
        }
        self.head.for_each(|n, t| f(&format!("head.{n}"), t));
    }

    pub fn for_each_mut<'a>(&'a mut self, mut f: impl FnMut(&str, &'a mut T)) {
        self.embed.for_each_mut(|n, t| f(&format!("embed.{n}"), t));
        for (i, layer) in self.encoder.iter_mut().enumerate() {
            layer.for_each_mut(|n, t| f(&format!("encoder.{i}.{n}"), t));
        }
        for (i, layer) in self.lstm.iter_mut().enumerate() {
            layer.for_each_mut(|n, t| f(&format!("lstm.{i}.{n}"), t));
        }
        self.head.for_each_mut(|n, t| f(&format!("head.{n}"), t));
    }

    pub fn try_map<U, E>(&self, mut f: impl FnMut(&str, &T) -> Result<U, E>) -> Result<ModelWeights<U>, E> {
        let embed = self.embed.try_map(|n, t| f(&format!("embed.{n}"), t))?;
        let encoder = self
            .encoder
            .iter()
            .enumerate()
            .map(|(i, l)| l.try_map(|n, t| f(&format!("encoder.{i}.{n}"), t)))
            .collect::<Result<_, E>>()?;
        let lstm = self
            .lstm
            .iter()
            .enumerate()
            .map(|(i, l)| l.try_map(|n, t| f(&format!("lstm.{i}.{n}"), t)))
            .collect::<Result<_, E>>()?;
        let head = self.head.try_map(|n, t| f(&format!("head.{n}"), t))?;
        Ok(ModelWeights {
            embed,
            encoder,
            lstm,
            head,
        })
    }

    pub fn map<U>(&self, mut f: impl FnMut(&str, &T) -> U) -> ModelWeights<U> {
        self.try_map(|n, t| Ok::<U, std::convert::Infallible>(f(n, t)))
            .unwrap_or_else(|e| match e {})
    }

    pub fn names(&self) -> Vec<String> {
        let mut out = Vec::new();
        self.for_each(|n, _| out.push(n.to_string()));
        out
    }

    pub fn tensor_count(&self) -> usize {
        let mut n = 0;
        self.for_each(|_, _| n += 1);
        n
    }
}

impl ModelWeights {
    /// All-zero weights with layer-norm gains of 1.
    pub fn zeros(cfg: &ModelConfig) -> Self {
        let d = cfg.dim();
        let mut encoder = vec![EncoderLayerWeights::zeros(&cfg.encoder); cfg.encoder.layers];
        for layer in &mut encoder {
            layer.ln1_gamma = Tensor::filled(&[d], 1.0);
            layer.ln2_gamma = Tensor::filled(&[d], 1.0);
        }
        let lstm = match cfg.aggregator {
            Aggregator::Mean => Vec::new(),
            Aggregator::Lstm => vec![LstmLayerWeights::zeros(d); LSTM_LAYERS],
        };
        ModelWeights {
            embed: EmbedWeights::zeros(&cfg.embed),
            encoder,
            lstm,
            head: HeadWeights::zeros(d, cfg.head_hidden, cfg.classes),
        }
    }

    /// Random initialization.
    ///
    /// Patch projection, attention, feed-forward and head matrices draw
    /// from the Glorot uniform range ±√(6 / (fan_in + fan_out)); the class
    /// token from N(0, 0.02²) truncated at 2σ; LSTM matrices from
    /// U(±[`LSTM_INIT_RANGE`]). The position embedding, biases and
    /// layer-norm shifts start at zero and layer-norm gains at one.
    ///
    /// A zero class token would reach the first layer norm as a
    /// zero-variance row, where the normalization scales perturbations by
    /// 1/√eps. With 0.02-scale encoder matrices, or U(±1/√D) in the
    /// three stacked LSTM layers, the clip feature barely depends on the
    /// input and SGD at lr 1e-3 stalls at the class prior.
    pub fn init(cfg: &ModelConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, INIT_STD).expect("valid std");
        let mut w = ModelWeights::zeros(cfg);
        w.for_each_mut(|name, t| {
            let fill: Option<Filler> = if name == "embed.class_token" {
                Some(Box::new(|r| loop {
                    let x: f64 = normal.sample(r);
                    if x.abs() <= 2.0 * INIT_STD {
                        break x;
                    }
                }))
            } else if name.starts_with("lstm.") && name.ends_with("weight") {
                Some(Box::new(|r| r.random_range(-LSTM_INIT_RANGE..LSTM_INIT_RANGE)))
            } else if name.ends_with("weight") {
                let (fan_in, fan_out) = t.rows_cols();
                let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
                Some(Box::new(move |r| r.random_range(-a..a)))
            } else {
                None
            };
            if let Some(mut fill) = fill {
                t.data_mut().iter_mut().for_each(|x| *x = fill(&mut rng));
            }
        });
        Ok(w)
    }

    /// Checks every tensor's shape against `cfg`.
    pub fn check_shapes(&self, cfg: &ModelConfig) -> Result<()> {
        let reference = ModelWeights::zeros(cfg);
        if self.encoder.len() != reference.encoder.len() || self.lstm.len() != reference.lstm.len() {
            return Err(Error::WeightFormat(format!(
                "weights have {} encoder / {} LSTM layers, config expects {} / {}",
                self.encoder.len(),
                self.lstm.len(),
                reference.encoder.len(),
                reference.lstm.len()
            )));
        }
        let mut expected = Vec::new();
        reference.for_each(|n, t| expected.push((n.to_string(), t.shape().to_vec())));
        let mut i = 0;
        let mut err = None;
        self.for_each(|n, t| {
            let (en, es) = &expected[i];
            if err.is_none() && (n != en || t.shape() != es.as_slice()) {
                err = Some(Error::WeightFormat(format!("{n}: shape {:?}, expected {es:?}", t.shape())));
            }
            i += 1;
        });
        err.map_or(Ok(()), Err)
    }

    /// Builds weights for `cfg` from named tensors, as read from a weight
    /// file. Every expected name must be present with the right shape.
    pub fn from_named(cfg: &ModelConfig, tensors: Vec<(String, Tensor)>) -> Result<Self> {
        let mut by_name: BTreeMap<String, Tensor> = BTreeMap::new();
        for (name, t) in tensors {
            if by_name.insert(name.clone(), t).is_some() {
                return Err(Error::WeightFormat(format!("duplicate tensor {name}")));
            }
        }
        let w = ModelWeights::zeros(cfg).try_map(|name, expected| {
            let t = by_name
                .remove(name)
                .ok_or_else(|| Error::WeightFormat(format!("missing tensor {name}")))?;
            if t.shape() != expected.shape() {
                return Err(Error::WeightFormat(format!(
                    "{name}: shape {:?}, expected {:?}",
                    t.shape(),
                    expected.shape()
                )));
            }
            Ok(t)
        })?;
        if let Some(extra) = by_name.keys().next() {
            return Err(Error::WeightFormat(format!("unexpected tensor {extra}")));
        }
        Ok(w)
    }

    pub fn named(&self) -> Vec<(String, &Tensor)> {
        let mut out = Vec::new();
        self.for_each(|n, t| out.push((n.to_string(), t)));
        out
    }

    pub fn scalar_count(&self) -> usize {
        let mut n = 0;
        self.for_each(|_, t| n += t.numel());
        n
    }

    /// All values concatenated in parameter order.
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.scalar_count());
        self.for_each(|_, t| out.extend_from_slice(t.data()));
        out
    }

    /// Inverse of [`flatten`](Self::flatten) using `self` for the layout.
    pub fn unflatten(&self, values: &[f64]) -> Result<Self> {
        if values.len() != self.scalar_count() {
            return Err(Error::InvalidArgument(format!(
                "{} values for {} parameters",
                values.len(),
                self.scalar_count()
            )));
        }
        let mut offset = 0;
        self.try_map(|_, t| {
            let n = t.numel();
            let out = Tensor::new(t.shape().to_vec(), values[offset..offset + n].to_vec());
            offset += n;
            out
        })
    }

    pub fn bind_params(&self, g: &mut Graph) -> ModelWeights<NodeId> {
        self.map(|_, t| g.param(t.clone()))
    }

    pub fn bind_constants(&self, g: &mut Graph) -> ModelWeights<NodeId> {
        self.map(|_, t| g.constant(t.clone()))
    }

    pub fn is_finite(&self) -> bool {
        let mut ok = true;
        self.for_each(|_, t| ok &= t.is_finite());
        ok
    }
}

/// One clip as model input: `F` patch matrices of shape `N × (P²·C)`.
#[derive(Clone, Debug, PartialEq)]
pub struct ClipInput {
    pub frames: Vec<Tensor>,
}

impl ClipInput {
    pub fn check(&self, cfg: &ModelConfig) -> Result<()> {
        if self.frames.is_empty() {
            return Err(Error::InvalidArgument("clip has no frames".into()));
        }
        let want = [cfg.embed.num_patches(), cfg.embed.patch_len()];
        for (t, f) in self.frames.iter().enumerate() {
            if f.shape() != want {
                return Err(Error::shape(
                    "clip",
                    format!("frame {t} has patch matrix {:?}, expected {want:?}", f.shape()),
                ));
            }
        }
        Ok(())
    }
}

/// Nodes produced by [`forward`].
#[derive(Clone, Debug)]
pub struct Forward {
    /// Per-frame `1 × D` class features.
    pub frame_features: Vec<NodeId>,
    pub clip_feature: NodeId,
    /// `1 × C` class probabilities.
    pub probs: NodeId,
    /// Per frame, per layer, per head attention matrices.
    pub attention: Vec<Vec<Vec<NodeId>>>,
}

/// Builds the forward pass for one clip on `g`.
pub fn forward(g: &mut Graph, w: &ModelWeights<NodeId>, cfg: &ModelConfig, clip: &ClipInput) -> Result<Forward> {
    clip.check(cfg)?;
    let mut frame_features = Vec::with_capacity(clip.frames.len());
    let mut attention = Vec::with_capacity(clip.frames.len());
    for frame in &clip.frames {
        let patches = g.constant(frame.clone());
        let enc = encode_frame(g, patches, &w.embed, &w.encoder, &cfg.encoder)?;
        frame_features.push(enc.class_feature);
        attention.push(enc.attention);
    }
    let lstm = (cfg.aggregator == Aggregator::Lstm).then_some(w.lstm.as_slice());
    let clip_feature = aggregate(g, &frame_features, cfg.aggregator, lstm)?;
    let probs = classify(g, clip_feature, &w.head)?;
    Ok(Forward {
        frame_features,
        clip_feature,
        probs,
        attention,
    })
}

/// Loss, probabilities and parameter gradients for one labelled clip.
#[derive(Clone, Debug)]
pub struct SampleGrad {
    pub loss: f64,
    pub probs: Vec<f64>,
    pub grads: ModelWeights,
}

pub fn sample_gradient(weights: &ModelWeights, cfg: &ModelConfig, clip: &ClipInput, label: usize) -> Result<SampleGrad> {
    if label >= cfg.classes {
        return Err(Error::InvalidArgument(format!("label {label} out of range for {} classes", cfg.classes)));
    }
    let mut g = Graph::new();
    let bound = weights.bind_params(&mut g);
    let fwd = forward(&mut g, &bound, cfg, clip)?;
    let loss = g.nll(fwd.probs, &[label], CE_EPS)?;
    let grads = g.backward(loss)?;
    let grads = bound.try_map(|name, id| {
        grads
            .get(*id)
            .cloned()
            .ok_or_else(|| Error::InvalidArgument(format!("no gradient for {name}")))
    })?;
    Ok(SampleGrad {
        loss: g.value(loss).data()[0],
        probs: g.value(fwd.probs).data().to_vec(),
        grads,
    })
}

/// Loss for one labelled clip without building gradients.
pub fn sample_loss(weights: &ModelWeights, cfg: &ModelConfig, clip: &ClipInput, label: usize) -> Result<f64> {
    let probs = predict_proba(weights, cfg, clip)?;
    crate::temporal::cross_entropy(&[probs], &[label])
}

pub fn predict_proba(weights: &ModelWeights, cfg: &ModelConfig, clip: &ClipInput) -> Result<Vec<f64>> {
    let mut g = Graph::new();
    let bound = weights.bind_constants(&mut g);
    let fwd = forward(&mut g, &bound, cfg, clip)?;
    Ok(g.value(fwd.probs).data().to_vec())
}

/// Index of the largest probability; ties go to the lower index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

pub fn predict(weights: &ModelWeights, cfg: &ModelConfig, clip: &ClipInput) -> Result<usize> {
    predict_proba(weights, cfg, clip).map(|p| argmax(&p))
}
