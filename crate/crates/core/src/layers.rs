//! Time-convolution (tConv) front-ends: a same-padded, bias-free, linear
//! cross-correlation layer whose kernels act as a learnable FIR filter bank.
//!
//! Three variants share the same `[bands, 1, taps]` kernel layout:
//!
//! * [`TConvVariant::Free`] learns every tap.
//! * [`TConvVariant::LinearPhase`] stores `(taps + 1)/2` values per band and
//!   mirrors them into a symmetric kernel, so the realised filter has exactly
//!   linear phase.
//! * [`TConvVariant::ZeroPhase`] runs the kernel forward, then over the
//!   time-reversed result, giving a response of `|H|²` with no phase.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::autodiff::{Graph, NodeId, Padding, Tensor};
use crate::fir::FilterBank;
use crate::{Error, Result};

/// Number of front-end bands.
pub const BANDS: usize = 4;
/// Taps per tConv kernel.
pub const KERNEL_TAPS: usize = 61;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TConvVariant {
    Free,
    LinearPhase,
    ZeroPhase,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitKind {
    /// Copy of a designed filter bank.
    FirBank,
    /// Gaussian with the He standard deviation (same draw as `He`).
    Random,
    Zeros,
    He,
}

#[derive(Debug, Clone)]
pub struct InitScheme {
    pub kind: InitKind,
    pub rng_seed: u64,
    pub source_bank: Option<FilterBank>,
}

impl InitScheme {
    pub fn fir(bank: FilterBank) -> Self {
        Self {
            kind: InitKind::FirBank,
            rng_seed: 0,
            source_bank: Some(bank),
        }
    }

    pub fn seeded(kind: InitKind, rng_seed: u64) -> Self {
        Self {
            kind,
            rng_seed,
            source_bank: None,
        }
    }
}

/// Initial kernel of `shape = [bands, 1, taps]`.
///
/// `FirBank` loads each filter index-reversed, so that the cross-correlation
/// layer computes the filter's convolution `Σ b_i·x[n − i]` (advanced by
/// `taps/2`). `Random`/`He` draw `N(0, 2/fan_in)` with `fan_in = taps`.
pub fn init_kernel(scheme: &InitScheme, shape: &[usize]) -> Result<Tensor> {
    let &[bands, c_in, taps] = shape else {
        return Err(Error::shape("init_kernel", format!("expected [bands, 1, taps], got {shape:?}")));
    };
    match scheme.kind {
        InitKind::Zeros => Ok(Tensor::zeros(shape)),
        InitKind::Random | InitKind::He => Ok(he_normal(shape, c_in * taps, scheme.rng_seed)),
        InitKind::FirBank => {
            let bank = scheme
                .source_bank
                .as_ref()
                .ok_or_else(|| Error::arg("source_bank", "FIR initialisation needs a filter bank"))?;
            if bank.filters().len() != bands || c_in != 1 {
                return Err(Error::shape(
                    "init_kernel",
                    format!("bank of {} filters for kernel {shape:?}", bank.filters().len()),
                ));
            }
            let mut data = Vec::with_capacity(bands * taps);
            for f in bank.filters() {
                if f.coeffs().len() != taps {
                    return Err(Error::shape(
                        "init_kernel",
                        format!("filter has {} taps, kernel expects {taps}", f.coeffs().len()),
                    ));
                }
                data.extend(f.coeffs().iter().rev());
            }
            Tensor::new(shape.to_vec(), data)
        }
    }
}

/// `N(0, 2/fan_in)` draws from a ChaCha stream seeded with `seed`.
pub fn he_normal(shape: &[usize], fan_in: usize, seed: u64) -> Tensor {
    let std = (2.0 / fan_in as f64).sqrt();
    let normal = Normal::new(0.0, std).expect("positive std");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = shape.iter().product();
    Tensor::from_parts(shape.to_vec(), (0..n).map(|_| normal.sample(&mut rng)).collect())
}

/// A tConv front-end. `params` holds the stored (free) values: the full
/// kernel for `Free`/`ZeroPhase`, the left half plus centre for `LinearPhase`.
#[derive(Debug, Clone, PartialEq)]
pub struct TConvLayer {
    pub variant: TConvVariant,
    pub params: Tensor,
    pub trainable: bool,
}

impl TConvLayer {
    /// Builds a layer of `BANDS` kernels with `taps` (odd) taps each.
    pub fn new(variant: TConvVariant, scheme: &InitScheme, taps: usize, trainable: bool) -> Result<Self> {
        if taps % 2 == 0 {
            return Err(Error::arg("taps", format!("kernel length must be odd, got {taps}")));
        }
        let full = init_kernel(scheme, &[BANDS, 1, taps])?;
        let params = match variant {
            TConvVariant::LinearPhase => left_half(&full),
            TConvVariant::Free | TConvVariant::ZeroPhase => full,
        };
        Ok(Self {
            variant,
            params,
            trainable,
        })
    }

    pub fn stored_shape(variant: TConvVariant, taps: usize) -> [usize; 3] {
        match variant {
            TConvVariant::LinearPhase => [BANDS, 1, taps.div_ceil(2)],
            TConvVariant::Free | TConvVariant::ZeroPhase => [BANDS, 1, taps],
        }
    }

    /// Number of independent learnable values.
    pub fn free_param_count(&self) -> usize {
        self.params.len()
    }

    /// The kernel the layer actually applies, `[bands, 1, taps]`.
    pub fn materialized_kernel(&self) -> Tensor {
        match self.variant {
            TConvVariant::LinearPhase => mirror(&self.params),
            TConvVariant::Free | TConvVariant::ZeroPhase => self.params.clone(),
        }
    }

    /// Places the stored parameters on `g` and applies the layer to `x`.
    /// Returns `(output, parameter leaf)`.
    pub fn forward(&self, g: &mut Graph, x: NodeId) -> Result<(NodeId, NodeId)> {
        let leaf = g.leaf(self.params.clone(), self.trainable);
        let y = tconv_forward(g, self.variant, leaf, x)?;
        Ok((y, leaf))
    }
}

fn left_half(full: &Tensor) -> Tensor {
    let taps = *full.shape().last().unwrap();
    let half = taps.div_ceil(2);
    let mut shape = full.shape().to_vec();
    *shape.last_mut().unwrap() = half;
    let data = full.data().chunks(taps).flat_map(|row| row[..half].iter().copied()).collect();
    Tensor::from_parts(shape, data)
}

fn mirror(half: &Tensor) -> Tensor {
    let mut g = Graph::new();
    let h = g.input(half.clone());
    let m = g.mirror_symmetric(h).expect("rank >= 1");
    g.value(m).clone()
}

/// Applies a tConv variant given its stored-parameter node.
///
/// Input is `[batch, 1, length]`; output is `[batch, bands, length]`.
pub fn tconv_forward(g: &mut Graph, variant: TConvVariant, params: NodeId, x: NodeId) -> Result<NodeId> {
    let shape = g.value(x).shape().to_vec();
    if shape.len() != 3 || shape[1] != 1 {
        return Err(Error::shape("tconv_forward", format!("expected [batch, 1, length], got {shape:?}")));
    }
    match variant {
        TConvVariant::Free => g.cross_correlate_1d(x, params, Padding::Same),
        TConvVariant::LinearPhase => {
            let kernel = g.mirror_symmetric(params)?;
            g.cross_correlate_1d(x, kernel, Padding::Same)
        }
        TConvVariant::ZeroPhase => zp_forward(g, params, x),
    }
}

/// Forward-reverse filtering: `z = xcorr(x, h)`, then
/// `y = reverse(xcorr(reverse(z), h))`, both same-padded. The second pass is
/// channel-wise, so band `b` of `z` only meets kernel `b`.
pub fn zp_forward(g: &mut Graph, kernel: NodeId, x: NodeId) -> Result<NodeId> {
    let z = g.cross_correlate_1d(x, kernel, Padding::Same)?;
    let zr = g.reverse_time(z)?;
    let second = g.depthwise_correlate_1d(zr, kernel, Padding::Same)?;
    g.reverse_time(second)
}
