//! The classifier: a front-end (fixed FIR decomposition or a tConv layer)
//! feeding four CNN branches, one per band, and a two-layer MLP head.
//!
//! Each branch is
//! `conv(8, k=5) → BN → ReLU → dropout → pool → conv(4, k=5) → BN → ReLU → dropout → pool`
//! with valid padding. Branch outputs are flattened, concatenated and passed
//! through `dense(→20, ReLU) → dense(→1, sigmoid)`.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Graph, Mode, NodeId, Padding, RunningStats, Tensor};
use crate::fir::{default_bank, fir_aligned, FilterBank};
use crate::layers::{he_normal, init_kernel, tconv_forward, InitKind, InitScheme, TConvLayer, TConvVariant, BANDS};
use crate::{Error, Result, CYCLE_LEN, PIPELINE_RATE_HZ};

pub const BRANCHES: usize = BANDS;
pub const CONV_KERNEL: usize = 5;
pub const CONV1_FILTERS: usize = 8;
pub const CONV2_FILTERS: usize = 4;
pub const HIDDEN: usize = 20;

const FRONTEND: &str = "frontend.kernel";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Frontend {
    /// Cycles are decomposed by a fixed filter bank before the network.
    ExternalFir,
    TconvFree,
    TconvLp,
    TconvZp,
}

impl Frontend {
    pub fn variant(self) -> Option<TConvVariant> {
        match self {
            Frontend::ExternalFir => None,
            Frontend::TconvFree => Some(TConvVariant::Free),
            Frontend::TconvLp => Some(TConvVariant::LinearPhase),
            Frontend::TconvZp => Some(TConvVariant::ZeroPhase),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkConfig {
    pub frontend: Frontend,
    pub init: InitKind,
    pub trainable_frontend: bool,
    pub input_len: usize,
    /// Order of the front-end filters; kernels have `order + 1` taps.
    pub filter_order: usize,
    pub dropout: f64,
    pub pool: usize,
    pub l2_conv: f64,
    pub seed: u64,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        Self {
            frontend: Frontend::TconvLp,
            init: InitKind::FirBank,
            trainable_frontend: true,
            input_len: CYCLE_LEN,
            filter_order: crate::fir::DEFAULT_ORDER,
            dropout: 0.5,
            pool: 2,
            l2_conv: 0.0486,
            seed: 0,
        }
    }
}

impl NetworkConfig {
    /// The fixed-bank baseline.
    pub fn baseline(seed: u64) -> Self {
        Self {
            frontend: Frontend::ExternalFir,
            init: InitKind::FirBank,
            trainable_frontend: false,
            seed,
            ..Self::default()
        }
    }

    pub fn tconv(frontend: Frontend, init: InitKind, trainable: bool, seed: u64) -> Self {
        Self {
            frontend,
            init,
            trainable_frontend: trainable,
            seed,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.frontend == Frontend::ExternalFir {
            if self.init != InitKind::FirBank {
                return Err(Error::arg("init", "the external FIR front-end only takes a designed bank"));
            }
            if self.trainable_frontend {
                return Err(Error::arg("trainable_frontend", "the external FIR front-end is fixed"));
            }
        }
        if self.filter_order < 2 || self.filter_order % 2 != 0 {
            return Err(Error::arg("filter_order", format!("must be even and at least 2, got {}", self.filter_order)));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::arg("dropout", format!("must lie in [0, 1), got {}", self.dropout)));
        }
        if !(self.l2_conv.is_finite() && self.l2_conv >= 0.0) {
            return Err(Error::arg("l2_conv", format!("must be finite and non-negative, got {}", self.l2_conv)));
        }
        if self.pool == 0 {
            return Err(Error::arg("pool", "must be at least 1"));
        }
        if self.input_len < 20 {
            return Err(Error::arg("input_len", format!("must be at least 20, got {}", self.input_len)));
        }
        self.branch_lengths().map(|_| ())
    }

    /// Lengths after conv1, pool1, conv2, pool2.
    pub fn branch_lengths(&self) -> Result<[usize; 4]> {
        let too_short = || Error::arg("input_len", format!("{} is too short for the branch stack", self.input_len));
        let c1 = self.input_len.checked_sub(CONV_KERNEL - 1).ok_or_else(too_short)?;
        let p1 = c1 / self.pool;
        let c2 = p1.checked_sub(CONV_KERNEL - 1).filter(|&v| v > 0).ok_or_else(too_short)?;
        let p2 = c2 / self.pool;
        if p2 == 0 {
            return Err(too_short());
        }
        Ok([c1, p1, c2, p2])
    }

    /// Width of the concatenated branch features.
    pub fn feature_len(&self) -> Result<usize> {
        Ok(BRANCHES * CONV2_FILTERS * self.branch_lengths()?[3])
    }

    pub fn kernel_taps(&self) -> usize {
        self.filter_order + 1
    }

    pub fn to_canonical_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Parameter {
    pub value: Tensor,
    pub trainable: bool,
}

/// A built network: named parameters, batchnorm running statistics and the
/// number of optimiser steps taken so far.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    config: NetworkConfig,
    params: BTreeMap<String, Parameter>,
    stats: BTreeMap<String, RunningStats>,
    pub step: u64,
}

/// Node handles from one forward pass.
pub struct Trace {
    pub probs: NodeId,
    /// `(parameter name, leaf)` for every parameter placed on the graph.
    pub leaves: Vec<(String, NodeId)>,
}

impl Network {
    /// Builds with the default filter bank at the pipeline rate.
    pub fn build(config: NetworkConfig) -> Result<Self> {
        Self::build_with_bank(config, None)
    }

    /// Builds with a caller-supplied bank for FIR initialisation or the
    /// external front-end.
    pub fn build_with_bank(config: NetworkConfig, bank: Option<FilterBank>) -> Result<Self> {
        config.validate()?;
        let taps = config.kernel_taps();
        let mut params = BTreeMap::new();
        let mut stats = BTreeMap::new();

        let scheme = match config.init {
            InitKind::FirBank => {
                let bank = match bank {
                    Some(b) => b,
                    None => default_bank(PIPELINE_RATE_HZ, config.filter_order)?,
                };
                InitScheme::fir(bank)
            }
            kind => InitScheme::seeded(kind, param_seed(config.seed, FRONTEND)),
        };
        let kernel = match config.frontend.variant() {
            None => init_kernel(&scheme, &[BANDS, 1, taps])?,
            Some(v) => TConvLayer::new(v, &scheme, taps, config.trainable_frontend)?.params,
        };
        params.insert(
            FRONTEND.to_string(),
            Parameter {
                value: kernel,
                trainable: config.trainable_frontend,
            },
        );

        let mut add = |name: String, value: Tensor| {
            params.insert(name, Parameter { value, trainable: true });
        };
        for b in 0..BRANCHES {
            for (layer, c_in, c_out) in [(1, 1, CONV1_FILTERS), (2, CONV1_FILTERS, CONV2_FILTERS)] {
                let name = format!("branch{b}.conv{layer}.kernel");
                let w = he_normal(&[c_out, c_in, CONV_KERNEL], c_in * CONV_KERNEL, param_seed(config.seed, &name));
                add(name, w);
                add(format!("branch{b}.bn{layer}.gamma"), Tensor::filled(&[c_out], 1.0));
                add(format!("branch{b}.bn{layer}.beta"), Tensor::zeros(&[c_out]));
                stats.insert(format!("branch{b}.bn{layer}"), RunningStats::new(c_out));
            }
        }
        let features = config.feature_len()?;
        for (layer, fan_in, fan_out) in [(1, features, HIDDEN), (2, HIDDEN, 1)] {
            let name = format!("head.dense{layer}.weight");
            let w = he_normal(&[fan_in, fan_out], fan_in, param_seed(config.seed, &name));
            add(name, w);
            add(format!("head.dense{layer}.bias"), Tensor::zeros(&[fan_out]));
        }
        Ok(Self {
            config,
            params,
            stats,
            step: 0,
        })
    }

    pub fn config(&self) -> &NetworkConfig {
        &self.config
    }

    pub fn params(&self) -> &BTreeMap<String, Parameter> {
        &self.params
    }

    pub fn param(&self, name: &str) -> Option<&Parameter> {
        self.params.get(name)
    }

    pub fn running_stats(&self) -> &BTreeMap<String, RunningStats> {
        &self.stats
    }

    pub fn set_running_stats(&mut self, stats: BTreeMap<String, RunningStats>) -> Result<()> {
        if stats.len() != self.stats.len()
            || stats.iter().any(|(k, v)| self.stats.get(k).is_none_or(|o| o.mean.len() != v.mean.len()))
        {
            return Err(Error::arg("stats", "running statistics do not match the network"));
        }
        self.stats = stats;
        Ok(())
    }

    /// Replaces a parameter value, keeping its shape.
    pub fn set_param(&mut self, name: &str, value: Tensor) -> Result<()> {
        let p = self
            .params
            .get_mut(name)
            .ok_or_else(|| Error::arg("name", format!("no parameter named {name}")))?;
        if p.value.shape() != value.shape() {
            return Err(Error::shape(
                "set_param",
                format!("{name} has shape {:?}, got {:?}", p.value.shape(), value.shape()),
            ));
        }
        p.value = value;
        Ok(())
    }

    pub fn trainable_param_count(&self) -> usize {
        self.params.values().filter(|p| p.trainable).map(|p| p.value.len()).sum()
    }

    pub fn head_param_count(&self) -> usize {
        self.params.iter().filter(|(k, _)| k.starts_with("head.")).map(|(_, p)| p.value.len()).sum()
    }

    /// The front-end as a tConv layer (`None` for the external front-end).
    pub fn frontend_layer(&self) -> Option<TConvLayer> {
        let variant = self.config.frontend.variant()?;
        let p = &self.params[FRONTEND];
        Some(TConvLayer {
            variant,
            params: p.value.clone(),
            trainable: p.trainable,
        })
    }

    /// The kernel the front-end applies, `[4, 1, taps]`.
    pub fn frontend_kernel(&self) -> Tensor {
        match self.frontend_layer() {
            Some(layer) => layer.materialized_kernel(),
            None => self.params[FRONTEND].value.clone(),
        }
    }

    /// Causal FIR coefficients equivalent to each band of the front-end,
    /// up to a centring delay of `(len - 1) / 2`. For zero-phase layers this
    /// is the autocorrelation of the kernel, `2·taps − 1` long.
    pub fn equivalent_fir(&self) -> Vec<Vec<f64>> {
        let kernel = self.frontend_kernel();
        let taps = *kernel.shape().last().expect("rank-3 kernel");
        kernel
            .data()
            .chunks(taps)
            .map(|h| match self.config.frontend {
                Frontend::TconvZp => (0..2 * taps - 1)
                    .map(|lag| {
                        let shift = lag as isize - (taps as isize - 1);
                        (0..taps)
                            .filter_map(|i| {
                                let j = i as isize + shift;
                                (0..taps as isize).contains(&j).then(|| h[i] * h[j as usize])
                            })
                            .sum()
                    })
                    .collect(),
                _ => h.iter().rev().copied().collect(),
            })
            .collect()
    }

    /// Stacks cycles into the tensor `forward` expects: `[batch, 1, len]` for
    /// tConv front-ends, `[batch, 4, len]` band decompositions otherwise.
    pub fn prepare_input(&self, cycles: &[&[f64]]) -> Result<Tensor> {
        let len = self.config.input_len;
        if cycles.is_empty() {
            return Err(Error::arg("cycles", "empty batch"));
        }
        if let Some(c) = cycles.iter().find(|c| c.len() != len) {
            return Err(Error::shape("prepare_input", format!("cycle of {} samples, expected {len}", c.len())));
        }
        match self.config.frontend {
            Frontend::ExternalFir => {
                let kernel = &self.params[FRONTEND].value;
                let taps = self.config.kernel_taps();
                let coeffs: Vec<Vec<f64>> = kernel
                    .data()
                    .chunks(taps)
                    .map(|k| k.iter().rev().copied().collect())
                    .collect();
                let mut data = Vec::with_capacity(cycles.len() * BANDS * len);
                for c in cycles {
                    for b in &coeffs {
                        data.extend(fir_aligned(b, c));
                    }
                }
                Tensor::new(vec![cycles.len(), BANDS, len], data)
            }
            _ => Tensor::new(vec![cycles.len(), 1, len], cycles.concat()),
        }
    }

    /// Builds the forward pass on `g`. Train-mode batchnorm updates `stats`;
    /// dropout masks derive from `dropout_seed`.
    pub fn trace(
        &self,
        g: &mut Graph,
        input: Tensor,
        mode: Mode,
        dropout_seed: u64,
        stats: &mut BTreeMap<String, RunningStats>,
    ) -> Result<Trace> {
        let input = self.check_input(input)?;
        let mut leaves = Vec::new();
        let mut leaf = |g: &mut Graph, name: &str| {
            let p = &self.params[name];
            let id = g.leaf(p.value.clone(), p.trainable);
            leaves.push((name.to_string(), id));
            id
        };
        let x = g.input(input);
        let bands = match self.config.frontend.variant() {
            None => x,
            Some(v) => {
                let k = leaf(g, FRONTEND);
                tconv_forward(g, v, k, x)?
            }
        };

        let mut branch_out = Vec::with_capacity(BRANCHES);
        for b in 0..BRANCHES {
            let mut h = g.channel(bands, b)?;
            for layer in 1..=2 {
                let k = leaf(g, &format!("branch{b}.conv{layer}.kernel"));
                h = g.cross_correlate_1d(h, k, Padding::Valid)?;
                let gamma = leaf(g, &format!("branch{b}.bn{layer}.gamma"));
                let beta = leaf(g, &format!("branch{b}.bn{layer}.beta"));
                let key = format!("branch{b}.bn{layer}");
                let st = stats
                    .get_mut(&key)
                    .ok_or_else(|| Error::Graph(format!("missing running stats {key}")))?;
                h = g.batchnorm_1d(h, gamma, beta, st, mode)?;
                h = g.relu(h)?;
                let seed = mix(dropout_seed, (b * 2 + layer) as u64);
                h = g.dropout(h, self.config.dropout, mode, seed)?;
                h = g.maxpool_1d(h, self.config.pool)?;
            }
            branch_out.push(h);
        }
        let mut h = g.concat_flatten(&branch_out)?;
        for layer in 1..=2 {
            let w = leaf(g, &format!("head.dense{layer}.weight"));
            let bias = leaf(g, &format!("head.dense{layer}.bias"));
            h = g.dense(h, w, bias)?;
            h = if layer == 1 { g.relu(h)? } else { g.sigmoid(h)? };
        }
        Ok(Trace { probs: h, leaves })
    }

    /// `λ·Σ w²` over the branch conv kernels.
    pub fn l2_penalty(&self, g: &mut Graph, trace: &Trace) -> Result<Option<NodeId>> {
        if self.config.l2_conv == 0.0 {
            return Ok(None);
        }
        let mut total = None;
        for (name, id) in &trace.leaves {
            if name.starts_with("branch") && name.ends_with(".kernel") {
                let s = g.sum_squares(*id)?;
                total = Some(match total {
                    None => s,
                    Some(t) => g.add(t, s)?,
                });
            }
        }
        total.map(|t| g.scale(t, self.config.l2_conv)).transpose()
    }

    /// Per-cycle probabilities. Running statistics are never modified; train
    /// mode normalises with batch statistics and applies dropout from `seed`.
    pub fn forward(&self, input: Tensor, mode: Mode, seed: u64) -> Result<Vec<f64>> {
        let mut g = Graph::new();
        let mut stats = self.stats.clone();
        let trace = self.trace(&mut g, input, mode, seed, &mut stats)?;
        Ok(g.value(trace.probs).data().to_vec())
    }

    /// Inference on raw cycles, in chunks of `chunk` cycles.
    pub fn predict(&self, cycles: &[&[f64]], chunk: usize) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(cycles.len());
        for part in cycles.chunks(chunk.max(1)) {
            out.extend(self.forward(self.prepare_input(part)?, Mode::Infer, 0)?);
        }
        Ok(out)
    }

    fn check_input(&self, input: Tensor) -> Result<Tensor> {
        let len = self.config.input_len;
        let channels = if self.config.frontend == Frontend::ExternalFir { BANDS } else { 1 };
        let shape = input.shape().to_vec();
        match shape[..] {
            [batch, l] if channels == 1 && l == len => input.reshape(vec![batch, 1, len]),
            [_, c, l] if c == channels && l == len => Ok(input),
            _ => Err(Error::shape("forward", format!("expected [batch, {channels}, {len}], got {shape:?}"))),
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let bytes = self.to_bytes()?;
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(&bytes).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }

    /// Checkpoint layout, little-endian throughout:
    ///
    /// ```text
    /// magic "TCNVCKPT" | version u32 | config_len u64 | config JSON | step u64
    /// | blob_count u32 | blobs...
    /// blob: kind u8 (0 param, 1 running mean, 2 running var) | trainable u8
    ///       | name_len u32 | name | rank u32 | dims u64... | data f64...
    /// ```
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        let config = self.config.to_canonical_json()?;
        out.extend_from_slice(&(config.len() as u64).to_le_bytes());
        out.extend_from_slice(config.as_bytes());
        out.extend_from_slice(&self.step.to_le_bytes());
        let count = self.params.len() + 2 * self.stats.len();
        out.extend_from_slice(&(count as u32).to_le_bytes());
        let mut blob = |kind: u8, trainable: bool, name: &str, shape: &[usize], data: &[f64]| {
            out.push(kind);
            out.push(trainable as u8);
            out.extend_from_slice(&(name.len() as u32).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.extend_from_slice(&(shape.len() as u32).to_le_bytes());
            for &d in shape {
                out.extend_from_slice(&(d as u64).to_le_bytes());
            }
            for v in data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        };
        for (name, p) in &self.params {
            blob(0, p.trainable, name, p.value.shape(), p.value.data());
        }
        for (name, s) in &self.stats {
            blob(1, false, name, &[s.mean.len()], &s.mean);
            blob(2, false, name, &[s.var.len()], &s.var);
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader(bytes);
        if r.take(MAGIC.len())? != MAGIC {
            return Err(bad("not a checkpoint (bad magic)"));
        }
        let version = r.u32()?;
        if version != FORMAT_VERSION {
            return Err(bad(format!("unsupported checkpoint version {version}")));
        }
        let config_len = r.len_u64()?;
        let config: NetworkConfig = serde_json::from_slice(r.take(config_len)?)?;
        // Structure and names come from the config; blobs must fill it exactly.
        let mut net = Network::build(config)?;
        net.step = r.u64()?;
        let count = r.u32()? as usize;
        if count != net.params.len() + 2 * net.stats.len() {
            return Err(bad(format!("checkpoint has {count} blobs")));
        }
        let mut seen = std::collections::BTreeSet::new();
        for _ in 0..count {
            let kind = r.u8()?;
            let trainable = r.u8()? != 0;
            let name_len = r.u32()? as usize;
            let name = std::str::from_utf8(r.take(name_len)?)
                .map_err(|_| bad("blob name is not UTF-8"))?
                .to_string();
            let rank = r.u32()? as usize;
            let shape = (0..rank).map(|_| r.len_u64()).collect::<Result<Vec<_>>>()?;
            let n = shape.iter().try_fold(1usize, |a, &d| a.checked_mul(d)).ok_or_else(|| bad("blob too large"))?;
            let raw = r.take(n.checked_mul(8).ok_or_else(|| bad("blob too large"))?)?;
            let data: Vec<f64> = raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
            if !seen.insert((kind, name.clone())) {
                return Err(bad(format!("duplicate blob {name}")));
            }
            match kind {
                0 => {
                    let p = net.params.get_mut(&name).ok_or_else(|| bad(format!("unknown parameter {name}")))?;
                    if p.trainable != trainable {
                        return Err(bad(format!("trainable flag of {name} disagrees with the config")));
                    }
                    if p.value.shape() != shape.as_slice() {
                        return Err(bad(format!("parameter {name} has shape {shape:?}")));
                    }
                    p.value = Tensor::new(shape, data)?;
                }
                1 | 2 => {
                    let s = net.stats.get_mut(&name).ok_or_else(|| bad(format!("unknown statistics {name}")))?;
                    let slot = if kind == 1 { &mut s.mean } else { &mut s.var };
                    if shape != [slot.len()] {
                        return Err(bad(format!("statistics {name} have shape {shape:?}")));
                    }
                    *slot = data;
                }
                k => return Err(bad(format!("unknown blob kind {k}"))),
            }
        }
        if !r.0.is_empty() {
            return Err(bad(format!("{} trailing bytes", r.0.len())));
        }
        Ok(net)
    }
}

const MAGIC: &[u8; 8] = b"TCNVCKPT";
const FORMAT_VERSION: u32 = 1;

fn bad(reason: impl Into<String>) -> Error {
    Error::Format {
        what: "checkpoint",
        reason: reason.into(),
    }
}

struct Reader<'a>(&'a [u8]);

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.0.len() < n {
            return Err(bad("truncated"));
        }
        let (head, tail) = self.0.split_at(n);
        self.0 = tail;
        Ok(head)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn len_u64(&mut self) -> Result<usize> {
        usize::try_from(self.u64()?).map_err(|_| bad("length overflows usize"))
    }
}

/// Mean of the cycle probabilities and its rounded label (`0.5` → 1).
pub fn aggregate_recording(cycle_probs: &[f64]) -> Result<(f64, u8)> {
    if cycle_probs.is_empty() {
        return Err(Error::arg("cycle_probs", "recording has no cycles"));
    }
    let mean = cycle_probs.iter().sum::<f64>() / cycle_probs.len() as f64;
    Ok((mean, u8::from(mean >= 0.5)))
}

/// Seed for parameter `name`, independent of which other parameters exist.
/// Front-ends that share branch and head names therefore share their values.
pub fn param_seed(seed: u64, name: &str) -> u64 {
    // FNV-1a keeps the name hash stable across builds and platforms.
    let h = name
        .bytes()
        .fold(0xcbf2_9ce4_8422_2325u64, |h, b| (h ^ b as u64).wrapping_mul(0x0100_0000_01b3));
    mix(seed, h)
}

/// SplitMix64 finaliser over `a ⊕ rotated b`.
pub fn mix(a: u64, b: u64) -> u64 {
    let mut z = a ^ b.rotate_left(32) ^ 0x9e37_79b9_7f4a_7c15;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seeded stream for data-order decisions.
pub fn rng_for(seed: u64, purpose: &str) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(param_seed(seed, purpose))
}
