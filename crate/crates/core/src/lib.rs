//! Learnable FIR filter-bank front-ends (tConv, linear-phase tConv and
//! zero-phase tConv) fused with a four-branch 1D-CNN for abnormal heart sound
//! detection.
//!
//! The crate is organised bottom-up:
//!
//! * [`dsp`] - waveforms, real FFT, resampling, phase unwrapping and long-term
//!   spectral averages.
//! * [`fir`] - windowed-sinc band-pass design and the fixed four-band bank.
//! * [`autodiff`] - a small tape-based reverse-mode engine over dense tensors.
//! * [`layers`] - the tConv front-end variants and their initialisers.
//! * [`model`] - the full network plus checkpoint IO.
//! * [`data`] - WAV ingestion, cycle segmentation, folds and synthetic PCG.
//! * [`train`] - Adam, class-weighted training and the evaluation protocol.

pub mod autodiff;
pub mod data;
pub mod dsp;
mod error;
pub mod fir;
pub mod layers;
pub mod model;
pub mod train;

pub use error::{Error, Result};

/// Sample rate every recording is brought to on ingestion.
pub const PIPELINE_RATE_HZ: f64 = 1000.0;

/// Length of one zero-padded cardiac cycle (2.5 s at [`PIPELINE_RATE_HZ`]).
pub const CYCLE_LEN: usize = 2500;
