//! Minimal reverse-mode automatic differentiation over dense `f64` tensors.
//!
//! A [`Graph`] is an append-only tape: every operation pushes a node whose
//! parents already exist, so the tape order is a topological order and
//! [`Graph::backward`] is a single reverse sweep. Parameters used more than
//! once receive the sum of their per-use gradients.
//!
//! ```
//! use tconv_core::autodiff::{Graph, Tensor};
//!
//! let mut g = Graph::new();
//! let x = g.param(Tensor::new(vec![3], vec![1.0, -2.0, 3.0]).unwrap());
//! let y = g.relu(x).unwrap();
//! let loss = g.sum(y).unwrap();
//! let grads = g.backward(loss).unwrap();
//! assert_eq!(grads.get(x).unwrap().data(), &[1.0, 0.0, 1.0]);
//! ```

mod graph;
mod tensor;

pub use graph::{Gradients, Graph, Mode, NodeId, OpTag, Padding, RunningStats, BN_EPS, BN_MOMENTUM, BCE_CLAMP};
pub use tensor::Tensor;

use crate::{Error, Result};

/// Same-padded cross-correlation of `x` with the index-reversed `b`.
///
/// For an odd-length `b` of order `N`, `out[m]` equals the causal filter
/// output `Σ b_i·x[m + N/2 − i]`, i.e. sample `m + N/2` of the convolution.
pub fn causal_fir_equivalence(x: &[f64], b: &[f64]) -> Result<Vec<f64>> {
    if b.len() % 2 == 0 {
        return Err(Error::arg("b", format!("expected an odd number of taps, got {}", b.len())));
    }
    if x.is_empty() {
        return Err(Error::arg("x", "empty signal"));
    }
    let mut g = Graph::new();
    let xs = g.input(Tensor::new(vec![1, 1, x.len()], x.to_vec())?);
    let k = g.input(Tensor::new(vec![1, 1, b.len()], b.to_vec())?);
    let kr = g.reverse_time(k)?;
    let y = g.cross_correlate_1d(xs, kr, Padding::Same)?;
    Ok(g.value(y).data().to_vec())
}
