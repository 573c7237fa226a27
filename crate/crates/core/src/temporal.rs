//! Temporal aggregation of per-frame class features, the classification
//! head and the cross-entropy objective.

use crate::error::{Error, Result};
use crate::numerics::{Graph, NodeId, Tensor};
use crate::params::param_group;

/// Number of stacked LSTM layers in the recurrent aggregator.
pub const LSTM_LAYERS: usize = 3;

/// Floor applied to probabilities inside the log of the loss.
pub const CE_EPS: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Aggregator {
    Mean,
    Lstm,
}

impl Aggregator {
    pub fn name(self) -> &'static str {
        match self {
            Aggregator::Mean => "mean",
            Aggregator::Lstm => "lstm",
        }
    }
}

impl std::str::FromStr for Aggregator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mean" => Ok(Aggregator::Mean),
            "lstm" => Ok(Aggregator::Lstm),
            other => Err(Error::Config(format!("unknown aggregator {other:?} (expected mean or lstm)"))),
        }
    }
}

param_group!(
    /// One LSTM layer. Every weight maps `[h_{t−1}, x_t]` (`2D`) to `D`.
    LstmLayerWeights {
        forget_weight,
        forget_bias,
        input_weight,
        input_bias,
        output_weight,
        output_bias,
        cell_weight,
        cell_bias,
    }
);

param_group!(
    /// `FC1: D → D_h`, GELU, `FC2: D_h → C`.
    HeadWeights {
        fc1_weight,
        fc1_bias,
        fc2_weight,
        fc2_bias,
    }
);

impl LstmLayerWeights {
    pub fn zeros(dim: usize) -> Self {
        LstmLayerWeights {
            forget_weight: Tensor::zeros(&[2 * dim, dim]),
            forget_bias: Tensor::zeros(&[dim]),
            input_weight: Tensor::zeros(&[2 * dim, dim]),
            input_bias: Tensor::zeros(&[dim]),
            output_weight: Tensor::zeros(&[2 * dim, dim]),
            output_bias: Tensor::zeros(&[dim]),
            cell_weight: Tensor::zeros(&[2 * dim, dim]),
            cell_bias: Tensor::zeros(&[dim]),
        }
    }
}

impl HeadWeights {
    pub fn zeros(dim: usize, hidden: usize, classes: usize) -> Self {
        HeadWeights {
            fc1_weight: Tensor::zeros(&[dim, hidden]),
            fc1_bias: Tensor::zeros(&[hidden]),
            fc2_weight: Tensor::zeros(&[hidden, classes]),
            fc2_bias: Tensor::zeros(&[classes]),
        }
    }
}

/// Hidden and cell state of one LSTM layer, each `1 × D`.
#[derive(Clone, Copy, Debug)]
pub struct LstmState {
    pub hidden: NodeId,
    pub cell: NodeId,
}

impl LstmState {
    pub fn zeros(g: &mut Graph, dim: usize) -> Self {
        LstmState {
            hidden: g.constant(Tensor::zeros(&[1, dim])),
            cell: g.constant(Tensor::zeros(&[1, dim])),
        }
    }
}

/// Running mean `Z^t = ((t−1)/t)·Z^{t−1} + (1/t)·x_t`. Returns every
/// intermediate value; the last one is the aggregate.
pub fn mean_aggregate_running(g: &mut Graph, features: &[NodeId]) -> Result<Vec<NodeId>> {
    let (&first, rest) = features
        .split_first()
        .ok_or_else(|| Error::InvalidArgument("aggregation needs at least one frame".into()))?;
    let mut out = Vec::with_capacity(features.len());
    let mut z = first;
    out.push(z);
    for (i, &x) in rest.iter().enumerate() {
        let t = (i + 2) as f64;
        let kept = g.scale(z, (t - 1.0) / t)?;
        let new = g.scale(x, 1.0 / t)?;
        z = g.add(kept, new)?;
        out.push(z);
    }
    Ok(out)
}

pub fn mean_aggregate(g: &mut Graph, features: &[NodeId]) -> Result<NodeId> {
    Ok(*mean_aggregate_running(g, features)?.last().expect("nonempty"))
}

/// One LSTM time step on a `1 × D` input.
pub fn lstm_step(g: &mut Graph, input: NodeId, state: LstmState, w: &LstmLayerWeights<NodeId>) -> Result<LstmState> {
    let joined = g.concat_cols(&[state.hidden, input])?;
    let f = g.linear(joined, w.forget_weight, w.forget_bias)?;
    let f = g.sigmoid(f)?;
    let i = g.linear(joined, w.input_weight, w.input_bias)?;
    let i = g.sigmoid(i)?;
    let o = g.linear(joined, w.output_weight, w.output_bias)?;
    let o = g.sigmoid(o)?;
    let candidate = g.linear(joined, w.cell_weight, w.cell_bias)?;
    let candidate = g.tanh(candidate)?;
    let kept = g.mul(f, state.cell)?;
    let written = g.mul(i, candidate)?;
    let cell = g.add(kept, written)?;
    let squashed = g.tanh(cell)?;
    let hidden = g.mul(o, squashed)?;
    Ok(LstmState { hidden, cell })
}

/// Runs the stacked LSTM over the sequence from zero state and returns the
/// top layer's final hidden state.
pub fn lstm_aggregate(g: &mut Graph, features: &[NodeId], layers: &[LstmLayerWeights<NodeId>]) -> Result<NodeId> {
    if features.is_empty() {
        return Err(Error::InvalidArgument("aggregation needs at least one frame".into()));
    }
    if layers.is_empty() {
        return Err(Error::InvalidArgument("LSTM aggregation requires layer weights".into()));
    }
    let (_, dim) = g.value(features[0]).dims2("lstm_aggregate")?;
    let mut states: Vec<LstmState> = (0..layers.len()).map(|_| LstmState::zeros(g, dim)).collect();
    for &x in features {
        let mut input = x;
        for (state, w) in states.iter_mut().zip(layers) {
            *state = lstm_step(g, input, *state, w)?;
            input = state.hidden;
        }
    }
    Ok(states.last().expect("nonempty").hidden)
}

pub fn aggregate(
    g: &mut Graph,
    features: &[NodeId],
    kind: Aggregator,
    lstm: Option<&[LstmLayerWeights<NodeId>]>,
) -> Result<NodeId> {
    match kind {
        Aggregator::Mean => mean_aggregate(g, features),
        Aggregator::Lstm => {
            let layers = lstm.ok_or_else(|| Error::InvalidArgument("LSTM aggregation requires layer weights".into()))?;
            lstm_aggregate(g, features, layers)
        }
    }
}

/// Class logits `FC2(GELU(FC1(x)))` for a batch of row features.
pub fn head_logits(g: &mut Graph, feature: NodeId, w: &HeadWeights<NodeId>) -> Result<NodeId> {
    let hidden = g.linear(feature, w.fc1_weight, w.fc1_bias)?;
    let hidden = g.gelu(hidden)?;
    g.linear(hidden, w.fc2_weight, w.fc2_bias)
}

/// Class probabilities, one row per feature row.
pub fn classify(g: &mut Graph, feature: NodeId, w: &HeadWeights<NodeId>) -> Result<NodeId> {
    let logits = head_logits(g, feature, w)?;
    g.softmax_rows(logits)
}

/// `−(1/N)·Σᵢ log max(pᵢ,yᵢ, eps)` over a batch of probability rows.
pub fn cross_entropy(probs: &[Vec<f64>], labels: &[usize]) -> Result<f64> {
    if probs.is_empty() || probs.len() != labels.len() {
        return Err(Error::InvalidArgument(format!(
            "{} probability rows for {} labels",
            probs.len(),
            labels.len()
        )));
    }
    let mut total = 0.0;
    for (i, (p, &y)) in probs.iter().zip(labels).enumerate() {
        let py = *p
            .get(y)
            .ok_or_else(|| Error::InvalidArgument(format!("label {y} out of range for sample {i}")))?;
        total -= py.max(CE_EPS).ln();
    }
    Ok(total / probs.len() as f64)
}
