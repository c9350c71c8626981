use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::Tensor;
use crate::{Error, Result};

pub const BN_EPS: f64 = 1e-5;
/// Fraction of the old running statistic kept on each update.
pub const BN_MOMENTUM: f64 = 0.9;
/// Probabilities are clamped to `[BCE_CLAMP, 1 − BCE_CLAMP]` before the log.
pub const BCE_CLAMP: f64 = 1e-7;

/// Handle to a node on a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Padding {
    /// No padding; output length `L − K + 1`.
    Valid,
    /// Zero padding of `(K−1)/2` on each side; output length `L`. Odd `K` only.
    Same,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Infer,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OpTag {
    Input,
    Param,
    CrossCorrelate,
    ReverseTime,
    Mirror,
    Channel,
    ConcatFlatten,
    Dense,
    Relu,
    Sigmoid,
    MaxPool,
    BatchNorm,
    Dropout,
    WeightedBce,
    SumSquares,
    Sum,
    Add,
    Scale,
}

/// Per-channel running mean and (unbiased) variance of a batchnorm layer.
#[derive(Debug, Clone, PartialEq)]
pub struct RunningStats {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

impl RunningStats {
    pub fn new(channels: usize) -> Self {
        Self {
            mean: vec![0.0; channels],
            var: vec![1.0; channels],
        }
    }
}

enum Op {
    Leaf,
    CrossCorr { x: usize, k: usize, offset: usize, depthwise: bool },
    ReverseTime { x: usize },
    Mirror { x: usize },
    Channel { x: usize, c: usize },
    ConcatFlatten { xs: Vec<usize> },
    Dense { x: usize, w: usize, b: usize },
    Relu { x: usize },
    Sigmoid { x: usize },
    MaxPool { x: usize, argmax: Vec<usize> },
    BatchNorm { x: usize, gamma: usize, beta: usize, xhat: Vec<f64>, inv_std: Vec<f64>, train: bool },
    Dropout { x: usize, mask: Vec<f64> },
    WeightedBce { pred: usize, labels: Vec<f64>, weights: Vec<f64> },
    SumSquares { x: usize },
    Sum { x: usize },
    Add { a: usize, b: usize },
    Scale { x: usize, c: f64 },
}

impl Op {
    fn parents(&self) -> Vec<usize> {
        match self {
            Op::Leaf => vec![],
            Op::CrossCorr { x, k, .. } => vec![*x, *k],
            Op::Dense { x, w, b } => vec![*x, *w, *b],
            Op::BatchNorm { x, gamma, beta, .. } => vec![*x, *gamma, *beta],
            Op::ConcatFlatten { xs } => xs.clone(),
            Op::Add { a, b } => vec![*a, *b],
            Op::WeightedBce { pred, .. } => vec![*pred],
            Op::ReverseTime { x }
            | Op::Mirror { x }
            | Op::Channel { x, .. }
            | Op::Relu { x }
            | Op::Sigmoid { x }
            | Op::MaxPool { x, .. }
            | Op::Dropout { x, .. }
            | Op::SumSquares { x }
            | Op::Sum { x }
            | Op::Scale { x, .. } => vec![*x],
        }
    }
}

struct Node {
    value: Tensor,
    op: Op,
    tag: OpTag,
    needs_grad: bool,
}

/// Append-only computation tape.
#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

/// Gradients of the leaves that required them, indexed by [`NodeId`].
#[derive(Debug, Clone)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, id: NodeId) -> Option<&Tensor> {
        self.grads.get(id.0).and_then(Option::as_ref)
    }

    pub fn take(&mut self, id: NodeId) -> Option<Tensor> {
        self.grads.get_mut(id.0).and_then(Option::take)
    }
}

fn dims3(t: &Tensor, op: &'static str) -> Result<(usize, usize, usize)> {
    match *t.shape() {
        [a, b, c] => Ok((a, b, c)),
        ref s => Err(Error::shape(op, format!("expected rank-3 [batch, channels, length], got {s:?}"))),
    }
}

/// `(output channel, input channel, kernel row)` triples of a correlation.
fn channel_pairs(c_out: usize, c_in: usize, depthwise: bool) -> impl Iterator<Item = (usize, usize, usize)> {
    let per_out = if depthwise { 1 } else { c_in };
    (0..c_out * per_out).map(move |r| {
        let o = r / per_out;
        let c = if depthwise { o } else { r % per_out };
        (o, c, r)
    })
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op, tag: OpTag) -> NodeId {
        let needs_grad = op.parents().iter().any(|&p| self.nodes[p].needs_grad);
        self.nodes.push(Node {
            value,
            op,
            tag,
            needs_grad,
        });
        NodeId(self.nodes.len() - 1)
    }

    fn node(&self, id: NodeId) -> Result<&Node> {
        self.nodes
            .get(id.0)
            .ok_or_else(|| Error::Graph(format!("node {} does not belong to this graph", id.0)))
    }

    /// A constant leaf; no gradient is tracked.
    pub fn input(&mut self, value: Tensor) -> NodeId {
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            tag: OpTag::Input,
            needs_grad: false,
        });
        NodeId(self.nodes.len() - 1)
    }

    /// A leaf whose gradient [`Graph::backward`] reports.
    pub fn param(&mut self, value: Tensor) -> NodeId {
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            tag: OpTag::Param,
            needs_grad: true,
        });
        NodeId(self.nodes.len() - 1)
    }

    /// Leaf that is a parameter only when `trainable`.
    pub fn leaf(&mut self, value: Tensor, trainable: bool) -> NodeId {
        if trainable {
            self.param(value)
        } else {
            self.input(value)
        }
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].value
    }

    pub fn op_tag(&self, id: NodeId) -> OpTag {
        self.nodes[id.0].tag
    }

    pub fn parents(&self, id: NodeId) -> Vec<NodeId> {
        self.nodes[id.0].op.parents().into_iter().map(NodeId).collect()
    }

    /// `y[b,o,n] = Σ_c Σ_i k[o,c,i]·x[b,c,n + i − off]`, with `off = 0` for
    /// valid padding and `(K−1)/2` for same padding; zeros outside the input.
    pub fn cross_correlate_1d(&mut self, x: NodeId, kernel: NodeId, padding: Padding) -> Result<NodeId> {
        self.correlate(x, kernel, padding, false)
    }

    /// Channel-wise variant: `y[b,c,n] = Σ_i k[c,0,i]·x[b,c,n + i − off]`.
    /// The kernel is `[channels, 1, K]`.
    pub fn depthwise_correlate_1d(&mut self, x: NodeId, kernel: NodeId, padding: Padding) -> Result<NodeId> {
        self.correlate(x, kernel, padding, true)
    }

    fn correlate(&mut self, x: NodeId, kernel: NodeId, padding: Padding, depthwise: bool) -> Result<NodeId> {
        let (batch, c_in, len) = dims3(&self.node(x)?.value, "cross_correlate_1d")?;
        let (c_out, k_in, k_len) = dims3(&self.node(kernel)?.value, "cross_correlate_1d kernel")?;
        if depthwise && (k_in != 1 || c_out != c_in) {
            return Err(Error::shape(
                "depthwise_correlate_1d",
                format!("input has {c_in} channels, kernel is [{c_out}, {k_in}, {k_len}]"),
            ));
        }
        if !depthwise && k_in != c_in {
            return Err(Error::shape(
                "cross_correlate_1d",
                format!("input has {c_in} channels, kernel expects {k_in}"),
            ));
        }
        let (offset, out_len) = match padding {
            Padding::Same => {
                if k_len % 2 == 0 {
                    return Err(Error::arg("kernel", format!("same padding needs an odd kernel, got {k_len}")));
                }
                ((k_len - 1) / 2, len)
            }
            Padding::Valid => {
                if k_len > len {
                    return Err(Error::shape(
                        "cross_correlate_1d",
                        format!("kernel length {k_len} exceeds input length {len}"),
                    ));
                }
                (0, len - k_len + 1)
            }
        };
        let xv = self.nodes[x.0].value.data();
        let kv = self.nodes[kernel.0].value.data();
        let mut out = vec![0.0; batch * c_out * out_len];
        for b in 0..batch {
            for (o, c, kr) in channel_pairs(c_out, c_in, depthwise) {
                let y = &mut out[(b * c_out + o) * out_len..][..out_len];
                let xs = &xv[(b * c_in + c) * len..][..len];
                let ks = &kv[kr * k_len..][..k_len];
                for (i, &w) in ks.iter().enumerate() {
                    let (n0, n1, shift) = tap_range(i, offset, len, out_len);
                    if n0 >= n1 {
                        continue;
                    }
                    let src = &xs[(n0 as isize + shift) as usize..][..n1 - n0];
                    for (yv, &xv) in y[n0..n1].iter_mut().zip(src) {
                        *yv += w * xv;
                    }
                }
            }
        }
        let value = Tensor::from_parts(vec![batch, c_out, out_len], out);
        Ok(self.push(
            value,
            Op::CrossCorr {
                x: x.0,
                k: kernel.0,
                offset,
                depthwise,
            },
            OpTag::CrossCorrelate,
        ))
    }

    /// Reverses the last axis.
    pub fn reverse_time(&mut self, x: NodeId) -> Result<NodeId> {
        let t = &self.node(x)?.value;
        let last = *t.shape().last().expect("tensor rank >= 1");
        let mut data = t.data().to_vec();
        for row in data.chunks_mut(last) {
            row.reverse();
        }
        let value = Tensor::from_parts(t.shape().to_vec(), data);
        Ok(self.push(value, Op::ReverseTime { x: x.0 }, OpTag::ReverseTime))
    }

    /// Mirrors the last axis of length `H` into a symmetric axis of length
    /// `2H − 1`: `out[i] = in[min(i, 2H − 2 − i)]`.
    pub fn mirror_symmetric(&mut self, x: NodeId) -> Result<NodeId> {
        let t = &self.node(x)?.value;
        let half = *t.shape().last().expect("tensor rank >= 1");
        let full = 2 * half - 1;
        let mut data = Vec::with_capacity(t.len() / half * full);
        for row in t.data().chunks(half) {
            data.extend_from_slice(row);
            data.extend(row[..half - 1].iter().rev());
        }
        let mut shape = t.shape().to_vec();
        *shape.last_mut().unwrap() = full;
        Ok(self.push(Tensor::from_parts(shape, data), Op::Mirror { x: x.0 }, OpTag::Mirror))
    }

    /// Selects channel `c` of a `[batch, channels, length]` tensor, keeping a
    /// unit channel axis.
    pub fn channel(&mut self, x: NodeId, c: usize) -> Result<NodeId> {
        let t = &self.node(x)?.value;
        let (batch, chans, len) = dims3(t, "channel")?;
        if c >= chans {
            return Err(Error::shape("channel", format!("channel {c} of {chans}")));
        }
        let mut data = Vec::with_capacity(batch * len);
        for b in 0..batch {
            data.extend_from_slice(&t.data()[(b * chans + c) * len..][..len]);
        }
        let value = Tensor::from_parts(vec![batch, 1, len], data);
        Ok(self.push(value, Op::Channel { x: x.0, c }, OpTag::Channel))
    }

    /// Flattens each `[batch, ...]` input per sample and concatenates along
    /// the feature axis.
    pub fn concat_flatten(&mut self, xs: &[NodeId]) -> Result<NodeId> {
        if xs.is_empty() {
            return Err(Error::arg("xs", "nothing to concatenate"));
        }
        let batch = self.node(xs[0])?.value.shape()[0];
        let mut widths = Vec::with_capacity(xs.len());
        for &x in xs {
            let t = &self.node(x)?.value;
            if t.shape()[0] != batch {
                return Err(Error::shape("concat_flatten", "inputs disagree on batch size"));
            }
            widths.push(t.len() / batch);
        }
        let total: usize = widths.iter().sum();
        let mut data = Vec::with_capacity(batch * total);
        for b in 0..batch {
            for (&x, &w) in xs.iter().zip(&widths) {
                data.extend_from_slice(&self.nodes[x.0].value.data()[b * w..][..w]);
            }
        }
        let value = Tensor::from_parts(vec![batch, total], data);
        Ok(self.push(
            value,
            Op::ConcatFlatten {
                xs: xs.iter().map(|n| n.0).collect(),
            },
            OpTag::ConcatFlatten,
        ))
    }

    /// `y = x·w + b` for `x: [batch, in]`, `w: [in, out]`, `b: [out]`.
    pub fn dense(&mut self, x: NodeId, w: NodeId, b: NodeId) -> Result<NodeId> {
        let xt = &self.node(x)?.value;
        let wt = &self.node(w)?.value;
        let bt = &self.node(b)?.value;
        let (batch, fan_in) = match *xt.shape() {
            [a, b] => (a, b),
            ref s => return Err(Error::shape("dense", format!("input must be [batch, in], got {s:?}"))),
        };
        let fan_out = match *wt.shape() {
            [i, o] if i == fan_in => o,
            ref s => return Err(Error::shape("dense", format!("weight {s:?} does not accept {fan_in} inputs"))),
        };
        if bt.shape() != [fan_out] {
            return Err(Error::shape("dense", format!("bias {:?} for {fan_out} outputs", bt.shape())));
        }
        let mut out = Vec::with_capacity(batch * fan_out);
        for row in xt.data().chunks(fan_in) {
            let mut y = bt.data().to_vec();
            for (&xi, wrow) in row.iter().zip(wt.data().chunks(fan_out)) {
                if xi != 0.0 {
                    for (yj, &wj) in y.iter_mut().zip(wrow) {
                        *yj += xi * wj;
                    }
                }
            }
            out.extend(y);
        }
        let value = Tensor::from_parts(vec![batch, fan_out], out);
        Ok(self.push(value, Op::Dense { x: x.0, w: w.0, b: b.0 }, OpTag::Dense))
    }

    pub fn relu(&mut self, x: NodeId) -> Result<NodeId> {
        let t = &self.node(x)?.value;
        let data = t.data().iter().map(|&v| v.max(0.0)).collect();
        let value = Tensor::from_parts(t.shape().to_vec(), data);
        Ok(self.push(value, Op::Relu { x: x.0 }, OpTag::Relu))
    }

    pub fn sigmoid(&mut self, x: NodeId) -> Result<NodeId> {
        let t = &self.node(x)?.value;
        let data = t.data().iter().map(|&v| stable_sigmoid(v)).collect();
        let value = Tensor::from_parts(t.shape().to_vec(), data);
        Ok(self.push(value, Op::Sigmoid { x: x.0 }, OpTag::Sigmoid))
    }

    /// Non-overlapping max pooling over the last axis; a trailing remainder is
    /// dropped and ties go to the first maximal element.
    pub fn maxpool_1d(&mut self, x: NodeId, pool: usize) -> Result<NodeId> {
        if pool == 0 {
            return Err(Error::arg("pool", "must be at least 1"));
        }
        let t = &self.node(x)?.value;
        let (batch, chans, len) = dims3(t, "maxpool_1d")?;
        let out_len = len / pool;
        if out_len == 0 {
            return Err(Error::shape("maxpool_1d", format!("length {len} shorter than pool {pool}")));
        }
        let mut data = Vec::with_capacity(batch * chans * out_len);
        let mut argmax = Vec::with_capacity(batch * chans * out_len);
        for (r, row) in t.data().chunks(len).enumerate() {
            for w in 0..out_len {
                let start = w * pool;
                let mut best = start;
                for j in start + 1..start + pool {
                    if row[j] > row[best] {
                        best = j;
                    }
                }
                data.push(row[best]);
                argmax.push(r * len + best);
            }
        }
        let value = Tensor::from_parts(vec![batch, chans, out_len], data);
        Ok(self.push(value, Op::MaxPool { x: x.0, argmax }, OpTag::MaxPool))
    }

    /// Per-channel batch normalisation of `[batch, channels, length]`.
    ///
    /// Train mode normalises with the biased batch variance over
    /// batch × length and folds the batch mean and unbiased variance into
    /// `stats`. Infer mode normalises with `stats` and leaves it untouched.
    pub fn batchnorm_1d(
        &mut self,
        x: NodeId,
        gamma: NodeId,
        beta: NodeId,
        stats: &mut RunningStats,
        mode: Mode,
    ) -> Result<NodeId> {
        let t = &self.node(x)?.value;
        let (batch, chans, len) = dims3(t, "batchnorm_1d")?;
        for (name, id) in [("gamma", gamma), ("beta", beta)] {
            if self.node(id)?.value.shape() != [chans] {
                return Err(Error::shape("batchnorm_1d", format!("{name} must have shape [{chans}]")));
            }
        }
        if stats.mean.len() != chans || stats.var.len() != chans {
            return Err(Error::shape("batchnorm_1d", "running stats have the wrong channel count"));
        }
        let train = mode == Mode::Train;
        if train && batch < 2 {
            return Err(Error::arg("x", "train-mode batchnorm needs a batch of at least 2"));
        }
        let xv = t.data();
        let count = (batch * len) as f64;
        let mut inv_std = vec![0.0; chans];
        let mut mean = vec![0.0; chans];
        for c in 0..chans {
            if train {
                let mut s = 0.0;
                for b in 0..batch {
                    s += xv[(b * chans + c) * len..][..len].iter().sum::<f64>();
                }
                let m = s / count;
                let mut ss = 0.0;
                for b in 0..batch {
                    ss += xv[(b * chans + c) * len..][..len].iter().map(|v| (v - m) * (v - m)).sum::<f64>();
                }
                let var = ss / count;
                mean[c] = m;
                inv_std[c] = 1.0 / (var + BN_EPS).sqrt();
                let unbiased = ss / (count - 1.0).max(1.0);
                stats.mean[c] = BN_MOMENTUM * stats.mean[c] + (1.0 - BN_MOMENTUM) * m;
                stats.var[c] = BN_MOMENTUM * stats.var[c] + (1.0 - BN_MOMENTUM) * unbiased;
            } else {
                mean[c] = stats.mean[c];
                inv_std[c] = 1.0 / (stats.var[c] + BN_EPS).sqrt();
            }
        }
        let g = self.nodes[gamma.0].value.data();
        let be = self.nodes[beta.0].value.data();
        let mut xhat = vec![0.0; xv.len()];
        let mut out = vec![0.0; xv.len()];
        for b in 0..batch {
            for c in 0..chans {
                let base = (b * chans + c) * len;
                for n in base..base + len {
                    let h = (xv[n] - mean[c]) * inv_std[c];
                    xhat[n] = h;
                    out[n] = g[c] * h + be[c];
                }
            }
        }
        let value = Tensor::from_parts(vec![batch, chans, len], out);
        Ok(self.push(
            value,
            Op::BatchNorm {
                x: x.0,
                gamma: gamma.0,
                beta: beta.0,
                xhat,
                inv_std,
                train,
            },
            OpTag::BatchNorm,
        ))
    }

    /// Inverted dropout: in train mode each element is zeroed with
    /// probability `rate` and survivors are scaled by `1/(1 − rate)`. The mask
    /// is drawn from a ChaCha stream seeded with `seed`. Infer mode is the
    /// identity.
    pub fn dropout(&mut self, x: NodeId, rate: f64, mode: Mode, seed: u64) -> Result<NodeId> {
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::arg("rate", format!("must lie in [0, 1), got {rate}")));
        }
        let t = &self.node(x)?.value;
        let mask: Vec<f64> = if mode == Mode::Infer || rate == 0.0 {
            vec![1.0; t.len()]
        } else {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let scale = 1.0 / (1.0 - rate);
            (0..t.len())
                .map(|_| if rng.random::<f64>() < rate { 0.0 } else { scale })
                .collect()
        };
        let data = t.data().iter().zip(&mask).map(|(v, m)| v * m).collect();
        let value = Tensor::from_parts(t.shape().to_vec(), data);
        Ok(self.push(value, Op::Dropout { x: x.0, mask }, OpTag::Dropout))
    }

    /// Mean over the batch of `−w·[y·ln p + (1−y)·ln(1−p)]`, with `p`
    /// clamped to `[BCE_CLAMP, 1 − BCE_CLAMP]`.
    pub fn weighted_bce(&mut self, pred: NodeId, labels: &[f64], weights: &[f64]) -> Result<NodeId> {
        let p = &self.node(pred)?.value;
        if p.len() != labels.len() || p.len() != weights.len() {
            return Err(Error::shape(
                "weighted_bce",
                format!("{} predictions, {} labels, {} weights", p.len(), labels.len(), weights.len()),
            ));
        }
        if labels.iter().any(|&y| y != 0.0 && y != 1.0) {
            return Err(Error::arg("labels", "labels must be 0 or 1"));
        }
        let n = p.len() as f64;
        let loss: f64 = p
            .data()
            .iter()
            .zip(labels)
            .zip(weights)
            .map(|((&pv, &y), &w)| {
                let pc = pv.clamp(BCE_CLAMP, 1.0 - BCE_CLAMP);
                -w * (y * pc.ln() + (1.0 - y) * (1.0 - pc).ln())
            })
            .sum::<f64>()
            / n;
        Ok(self.push(
            Tensor::scalar(loss),
            Op::WeightedBce {
                pred: pred.0,
                labels: labels.to_vec(),
                weights: weights.to_vec(),
            },
            OpTag::WeightedBce,
        ))
    }

    pub fn sum_squares(&mut self, x: NodeId) -> Result<NodeId> {
        let s = self.node(x)?.value.data().iter().map(|v| v * v).sum();
        Ok(self.push(Tensor::scalar(s), Op::SumSquares { x: x.0 }, OpTag::SumSquares))
    }

    pub fn sum(&mut self, x: NodeId) -> Result<NodeId> {
        let s = self.node(x)?.value.data().iter().sum();
        Ok(self.push(Tensor::scalar(s), Op::Sum { x: x.0 }, OpTag::Sum))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (ta, tb) = (&self.node(a)?.value, &self.node(b)?.value);
        if ta.shape() != tb.shape() {
            return Err(Error::shape("add", format!("{:?} vs {:?}", ta.shape(), tb.shape())));
        }
        let data = ta.data().iter().zip(tb.data()).map(|(x, y)| x + y).collect();
        let value = Tensor::from_parts(ta.shape().to_vec(), data);
        Ok(self.push(value, Op::Add { a: a.0, b: b.0 }, OpTag::Add))
    }

    pub fn scale(&mut self, x: NodeId, c: f64) -> Result<NodeId> {
        let t = &self.node(x)?.value;
        let data = t.data().iter().map(|v| v * c).collect();
        let value = Tensor::from_parts(t.shape().to_vec(), data);
        Ok(self.push(value, Op::Scale { x: x.0, c }, OpTag::Scale))
    }

    /// Reverse sweep from a scalar `loss`. Returns gradients for every
    /// [`Graph::param`] leaf reachable from it.
    pub fn backward(&self, loss: NodeId) -> Result<Gradients> {
        let root = self.node(loss)?;
        if root.value.len() != 1 {
            return Err(Error::shape("backward", format!("loss must be scalar, got {:?}", root.value.shape())));
        }
        let mut grads: Vec<Option<Vec<f64>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(vec![1.0]);
        for id in (0..=loss.0).rev() {
            let node = &self.nodes[id];
            if !node.needs_grad {
                continue;
            }
            if matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(dy) = grads[id].take() else { continue };
            for p in node.op.parents() {
                if p >= id {
                    return Err(Error::Graph(format!("node {id} depends on later node {p}: cycle")));
                }
            }
            self.backprop_node(id, &dy, &mut grads);
        }
        let grads = grads
            .into_iter()
            .zip(&self.nodes)
            .map(|(g, n)| match (g, n.tag) {
                (Some(g), OpTag::Param) => Some(Tensor::from_parts(n.value.shape().to_vec(), g)),
                _ => None,
            })
            .collect();
        Ok(Gradients { grads })
    }

    fn backprop_node(&self, id: usize, dy: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let node = &self.nodes[id];
        let wants = |p: usize| self.nodes[p].needs_grad;
        // Accumulates into the gradient slot of `p`, allocating zeros first.
        fn slot<'a>(grads: &'a mut [Option<Vec<f64>>], nodes: &[Node], p: usize) -> &'a mut Vec<f64> {
            grads[p].get_or_insert_with(|| vec![0.0; nodes[p].value.len()])
        }
        match &node.op {
            Op::Leaf => {}
            &Op::CrossCorr { x, k, offset, depthwise } => {
                let xt = &self.nodes[x].value;
                let kt = &self.nodes[k].value;
                let (batch, c_in, len) = (xt.shape()[0], xt.shape()[1], xt.shape()[2]);
                let (c_out, k_len) = (kt.shape()[0], kt.shape()[2]);
                let out_len = node.value.shape()[2];
                if wants(x) {
                    let dx = slot(grads, &self.nodes, x);
                    for b in 0..batch {
                        for (o, c, kr) in channel_pairs(c_out, c_in, depthwise) {
                            let g = &dy[(b * c_out + o) * out_len..][..out_len];
                            let dxs = &mut dx[(b * c_in + c) * len..][..len];
                            let ks = &kt.data()[kr * k_len..][..k_len];
                            for (i, &w) in ks.iter().enumerate() {
                                let (n0, n1, shift) = tap_range(i, offset, len, out_len);
                                if n0 >= n1 {
                                    continue;
                                }
                                let dst = &mut dxs[(n0 as isize + shift) as usize..][..n1 - n0];
                                for (d, &gv) in dst.iter_mut().zip(&g[n0..n1]) {
                                    *d += w * gv;
                                }
                            }
                        }
                    }
                }
                if wants(k) {
                    let dk = slot(grads, &self.nodes, k);
                    for b in 0..batch {
                        for (o, c, kr) in channel_pairs(c_out, c_in, depthwise) {
                            let g = &dy[(b * c_out + o) * out_len..][..out_len];
                            let xs = &xt.data()[(b * c_in + c) * len..][..len];
                            let dks = &mut dk[kr * k_len..][..k_len];
                            for (i, d) in dks.iter_mut().enumerate() {
                                let (n0, n1, shift) = tap_range(i, offset, len, out_len);
                                if n0 >= n1 {
                                    continue;
                                }
                                let src = &xs[(n0 as isize + shift) as usize..][..n1 - n0];
                                *d += g[n0..n1].iter().zip(src).map(|(a, b)| a * b).sum::<f64>();
                            }
                        }
                    }
                }
            }
            &Op::ReverseTime { x } => {
                let last = *node.value.shape().last().unwrap();
                let dx = slot(grads, &self.nodes, x);
                for (drow, grow) in dx.chunks_mut(last).zip(dy.chunks(last)) {
                    for (d, g) in drow.iter_mut().zip(grow.iter().rev()) {
                        *d += g;
                    }
                }
            }
            &Op::Mirror { x } => {
                let half = *self.nodes[x].value.shape().last().unwrap();
                let full = 2 * half - 1;
                let dx = slot(grads, &self.nodes, x);
                for (drow, grow) in dx.chunks_mut(half).zip(dy.chunks(full)) {
                    for (j, d) in drow.iter_mut().enumerate() {
                        *d += grow[j];
                        if j + 1 < half {
                            *d += grow[full - 1 - j];
                        }
                    }
                }
            }
            &Op::Channel { x, c } => {
                let s = self.nodes[x].value.shape();
                let (batch, chans, len) = (s[0], s[1], s[2]);
                let dx = slot(grads, &self.nodes, x);
                for b in 0..batch {
                    let dst = &mut dx[(b * chans + c) * len..][..len];
                    for (d, g) in dst.iter_mut().zip(&dy[b * len..][..len]) {
                        *d += g;
                    }
                }
            }
            Op::ConcatFlatten { xs } => {
                let batch = node.value.shape()[0];
                let total = node.value.shape()[1];
                let mut col = 0;
                for &x in xs {
                    let w = self.nodes[x].value.len() / batch;
                    if wants(x) {
                        let dx = slot(grads, &self.nodes, x);
                        for b in 0..batch {
                            for (d, g) in dx[b * w..][..w].iter_mut().zip(&dy[b * total + col..][..w]) {
                                *d += g;
                            }
                        }
                    }
                    col += w;
                }
            }
            &Op::Dense { x, w, b } => {
                let xt = &self.nodes[x].value;
                let wt = &self.nodes[w].value;
                let (batch, fan_in) = (xt.shape()[0], xt.shape()[1]);
                let fan_out = wt.shape()[1];
                if wants(w) {
                    let dw = slot(grads, &self.nodes, w);
                    for (row, g) in xt.data().chunks(fan_in).zip(dy.chunks(fan_out)) {
                        for (&xi, drow) in row.iter().zip(dw.chunks_mut(fan_out)) {
                            if xi != 0.0 {
                                for (d, &gj) in drow.iter_mut().zip(g) {
                                    *d += xi * gj;
                                }
                            }
                        }
                    }
                }
                if wants(b) {
                    let db = slot(grads, &self.nodes, b);
                    for g in dy.chunks(fan_out) {
                        for (d, gj) in db.iter_mut().zip(g) {
                            *d += gj;
                        }
                    }
                }
                if wants(x) {
                    let dx = slot(grads, &self.nodes, x);
                    for bi in 0..batch {
                        let g = &dy[bi * fan_out..][..fan_out];
                        for (d, wrow) in dx[bi * fan_in..][..fan_in].iter_mut().zip(wt.data().chunks(fan_out)) {
                            *d += wrow.iter().zip(g).map(|(a, b)| a * b).sum::<f64>();
                        }
                    }
                }
            }
            &Op::Relu { x } => {
                let xv = self.nodes[x].value.data();
                let dx = slot(grads, &self.nodes, x);
                for ((d, &v), g) in dx.iter_mut().zip(xv).zip(dy) {
                    if v > 0.0 {
                        *d += g;
                    }
                }
            }
            &Op::Sigmoid { x } => {
                let yv = node.value.data();
                let dx = slot(grads, &self.nodes, x);
                for ((d, &s), g) in dx.iter_mut().zip(yv).zip(dy) {
                    *d += g * s * (1.0 - s);
                }
            }
            Op::MaxPool { x, argmax } => {
                let dx = slot(grads, &self.nodes, *x);
                for (&src, g) in argmax.iter().zip(dy) {
                    dx[src] += g;
                }
            }
            Op::BatchNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
                train,
            } => {
                let s = node.value.shape();
                let (batch, chans, len) = (s[0], s[1], s[2]);
                let count = (batch * len) as f64;
                let gv = self.nodes[*gamma].value.data().to_vec();
                let mut sum_dy = vec![0.0; chans];
                let mut sum_dy_xhat = vec![0.0; chans];
                for b in 0..batch {
                    for c in 0..chans {
                        let base = (b * chans + c) * len;
                        for n in base..base + len {
                            sum_dy[c] += dy[n];
                            sum_dy_xhat[c] += dy[n] * xhat[n];
                        }
                    }
                }
                if wants(*gamma) {
                    let dg = slot(grads, &self.nodes, *gamma);
                    for (d, v) in dg.iter_mut().zip(&sum_dy_xhat) {
                        *d += v;
                    }
                }
                if wants(*beta) {
                    let db = slot(grads, &self.nodes, *beta);
                    for (d, v) in db.iter_mut().zip(&sum_dy) {
                        *d += v;
                    }
                }
                if wants(*x) {
                    let dx = slot(grads, &self.nodes, *x);
                    for b in 0..batch {
                        for c in 0..chans {
                            let base = (b * chans + c) * len;
                            let k = gv[c] * inv_std[c];
                            if *train {
                                let m1 = sum_dy[c] / count;
                                let m2 = sum_dy_xhat[c] / count;
                                for n in base..base + len {
                                    dx[n] += k * (dy[n] - m1 - xhat[n] * m2);
                                }
                            } else {
                                for n in base..base + len {
                                    dx[n] += k * dy[n];
                                }
                            }
                        }
                    }
                }
            }
            Op::Dropout { x, mask } => {
                let dx = slot(grads, &self.nodes, *x);
                for ((d, m), g) in dx.iter_mut().zip(mask).zip(dy) {
                    *d += m * g;
                }
            }
            Op::WeightedBce { pred, labels, weights } => {
                let pv = self.nodes[*pred].value.data();
                let n = pv.len() as f64;
                let dx = slot(grads, &self.nodes, *pred);
                for (((d, &p), &y), &w) in dx.iter_mut().zip(pv).zip(labels).zip(weights) {
                    if p > BCE_CLAMP && p < 1.0 - BCE_CLAMP {
                        *d += dy[0] * -w * (y / p - (1.0 - y) / (1.0 - p)) / n;
                    }
                }
            }
            &Op::SumSquares { x } => {
                let xv = self.nodes[x].value.data();
                let dx = slot(grads, &self.nodes, x);
                for (d, &v) in dx.iter_mut().zip(xv) {
                    *d += 2.0 * v * dy[0];
                }
            }
            &Op::Sum { x } => {
                let dx = slot(grads, &self.nodes, x);
                for d in dx.iter_mut() {
                    *d += dy[0];
                }
            }
            &Op::Add { a, b } => {
                for p in [a, b] {
                    if wants(p) {
                        let dp = slot(grads, &self.nodes, p);
                        for (d, g) in dp.iter_mut().zip(dy) {
                            *d += g;
                        }
                    }
                }
            }
            &Op::Scale { x, c } => {
                let dx = slot(grads, &self.nodes, x);
                for (d, g) in dx.iter_mut().zip(dy) {
                    *d += c * g;
                }
            }
        }
    }
}

/// Output range `[n0, n1)` touched by tap `i`, and the input shift `i − off`.
fn tap_range(i: usize, offset: usize, len: usize, out_len: usize) -> (usize, usize, isize) {
    let shift = i as isize - offset as isize;
    let n0 = (-shift).max(0) as usize;
    let n1 = ((len as isize - shift).min(out_len as isize)).max(0) as usize;
    (n0, n1, shift)
}

fn stable_sigmoid(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}
