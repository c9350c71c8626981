//! Signal containers and spectral helpers shared by the rest of the crate.

use std::f64::consts::PI;

use num_complex::Complex64;
use rustfft::FftPlanner;

use crate::{Error, Result};

/// Floor applied to every magnitude expressed in decibels.
pub const DB_FLOOR: f64 = -120.0;

/// Default long-term spectral average window, in samples.
pub const LTSA_WINDOW: usize = 1024;
/// Default long-term spectral average hop, in samples.
pub const LTSA_HOP: usize = 512;

/// Uniformly sampled real signal.
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    samples: Vec<f64>,
    sample_rate_hz: f64,
}

impl Waveform {
    pub fn new(samples: Vec<f64>, sample_rate_hz: f64) -> Result<Self> {
        if !(sample_rate_hz > 0.0 && sample_rate_hz.is_finite()) {
            return Err(Error::arg("sample_rate_hz", format!("must be positive, got {sample_rate_hz}")));
        }
        if let Some(i) = samples.iter().position(|v| !v.is_finite()) {
            return Err(Error::arg("samples", format!("non-finite value at index {i}")));
        }
        Ok(Self {
            samples,
            sample_rate_hz,
        })
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }

    pub fn sample_rate_hz(&self) -> f64 {
        self.sample_rate_hz
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate_hz
    }
}

/// One-sided spectrum of a real signal.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    pub bins: Vec<Complex64>,
    pub bin_freq_hz: Vec<f64>,
    pub n_fft: usize,
}

impl Spectrum {
    pub fn magnitude_db(&self) -> Vec<f64> {
        self.bins.iter().map(|c| to_db(c.norm())).collect()
    }
}

/// `20·log10(mag)` clamped at [`DB_FLOOR`].
pub fn to_db(mag: f64) -> f64 {
    if mag > 0.0 {
        (20.0 * mag.log10()).max(DB_FLOOR)
    } else {
        DB_FLOOR
    }
}

fn check_fft_len(n_fft: usize, signal_len: usize) -> Result<()> {
    if n_fft == 0 || !n_fft.is_power_of_two() {
        return Err(Error::arg("n_fft", format!("{n_fft} is not a power of two")));
    }
    if n_fft < signal_len {
        return Err(Error::arg(
            "n_fft",
            format!("{n_fft} is shorter than the signal ({signal_len} samples)"),
        ));
    }
    Ok(())
}

/// One-sided DFT of `x`, zero-padded to `n_fft` (a power of two).
pub fn fft_real(x: &Waveform, n_fft: usize) -> Result<Spectrum> {
    let bins = rfft(x.samples(), n_fft)?;
    let df = x.sample_rate_hz() / n_fft as f64;
    let bin_freq_hz = (0..bins.len()).map(|k| k as f64 * df).collect();
    Ok(Spectrum {
        bins,
        bin_freq_hz,
        n_fft,
    })
}

/// One-sided DFT on a raw slice; returns `n_fft/2 + 1` bins.
pub fn rfft(x: &[f64], n_fft: usize) -> Result<Vec<Complex64>> {
    check_fft_len(n_fft, x.len())?;
    let mut buf: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    buf.resize(n_fft, Complex64::new(0.0, 0.0));
    FftPlanner::new().plan_fft_forward(n_fft).process(&mut buf);
    buf.truncate(n_fft / 2 + 1);
    Ok(buf)
}

/// Inverse of [`fft_real`]; returns all `n_fft` time samples.
pub fn ifft_real(spectrum: &Spectrum) -> Result<Vec<f64>> {
    let n = spectrum.n_fft;
    check_fft_len(n, 0)?;
    if spectrum.bins.len() != n / 2 + 1 {
        return Err(Error::arg(
            "spectrum",
            format!("expected {} bins, got {}", n / 2 + 1, spectrum.bins.len()),
        ));
    }
    let mut buf = vec![Complex64::new(0.0, 0.0); n];
    buf[..=n / 2].copy_from_slice(&spectrum.bins);
    for k in 1..n.div_ceil(2) {
        buf[n - k] = spectrum.bins[k].conj();
    }
    FftPlanner::new().plan_fft_inverse(n).process(&mut buf);
    let scale = 1.0 / n as f64;
    Ok(buf.into_iter().map(|c| c.re * scale).collect())
}

/// Symmetric Hamming window of length `len`.
pub fn hamming(len: usize) -> Vec<f64> {
    match len {
        0 => Vec::new(),
        1 => vec![1.0],
        _ => {
            let m = (len - 1) as f64;
            (0..len)
                .map(|n| 0.54 - 0.46 * (2.0 * PI * n as f64 / m).cos())
                .collect()
        }
    }
}

fn sinc(x: f64) -> f64 {
    if x == 0.0 {
        1.0
    } else {
        let px = PI * x;
        px.sin() / px
    }
}

/// Zero crossings of the interpolation kernel on each side.
const RESAMPLE_ZERO_CROSSINGS: f64 = 24.0;

/// Band-limited resampling by windowed-sinc interpolation.
///
/// The kernel is a Blackman-windowed sinc whose cutoff sits just below the
/// lower of the two Nyquist rates. Weights are renormalised per output
/// sample, so DC is preserved exactly (edges included).
pub fn resample(x: &Waveform, target_hz: f64) -> Result<Waveform> {
    if !(target_hz > 0.0 && target_hz.is_finite()) {
        return Err(Error::arg("target_hz", format!("must be positive, got {target_hz}")));
    }
    if x.is_empty() {
        return Err(Error::arg("x", "cannot resample an empty waveform"));
    }
    let source_hz = x.sample_rate_hz();
    if target_hz == source_hz {
        return Ok(x.clone());
    }
    let ratio = target_hz / source_hz;
    // Cutoff relative to the input Nyquist.
    let cutoff = if ratio < 1.0 { 0.95 * ratio } else { 1.0 };
    let half_width = RESAMPLE_ZERO_CROSSINGS / cutoff;
    let src = x.samples();
    let out_len = ((src.len() as f64 * ratio).round() as usize).max(1);

    let out = (0..out_len)
        .map(|m| {
            let t = m as f64 / ratio;
            let lo = ((t - half_width).ceil().max(0.0)) as usize;
            let hi = ((t + half_width).floor() as usize).min(src.len() - 1);
            let mut acc = 0.0;
            let mut norm = 0.0;
            for (n, &v) in src.iter().enumerate().take(hi + 1).skip(lo) {
                let d = t - n as f64;
                let u = d / half_width;
                let w = 0.42 + 0.5 * (PI * u).cos() + 0.08 * (2.0 * PI * u).cos();
                let k = cutoff * sinc(cutoff * d) * w;
                acc += k * v;
                norm += k;
            }
            if norm.abs() > 1e-12 {
                acc / norm
            } else {
                0.0
            }
        })
        .collect();
    Waveform::new(out, target_hz)
}

/// Time-averaged log-magnitude spectrum.
#[derive(Debug, Clone, PartialEq)]
pub struct LtsaProfile {
    pub freq_hz: Vec<f64>,
    pub avg_log_magnitude_db: Vec<f64>,
    pub window_len: usize,
    pub hop: usize,
    /// Number of windows averaged.
    pub frames: usize,
}

/// Long-term spectral average: mean over all full Hamming-windowed frames of
/// the frame's dB magnitude spectrum. The FFT size is the next power of two at
/// or above `window_len`.
pub fn ltsa(x: &Waveform, window_len: usize, hop: usize) -> Result<LtsaProfile> {
    if window_len == 0 {
        return Err(Error::arg("window_len", "must be at least 1"));
    }
    if hop == 0 {
        return Err(Error::arg("hop", "must be at least 1"));
    }
    if x.len() < window_len {
        return Err(Error::arg(
            "x",
            format!("signal of {} samples is shorter than one window ({window_len})", x.len()),
        ));
    }
    let n_fft = window_len.next_power_of_two();
    let window = hamming(window_len);
    let n_bins = n_fft / 2 + 1;
    let mut acc = vec![0.0; n_bins];
    let mut frames = 0usize;
    let plan = FftPlanner::new().plan_fft_forward(n_fft);
    let mut buf = vec![Complex64::new(0.0, 0.0); n_fft];
    let samples = x.samples();
    let mut start = 0;
    while start + window_len <= samples.len() {
        for (slot, (&s, &w)) in buf.iter_mut().zip(samples[start..start + window_len].iter().zip(&window)) {
            *slot = Complex64::new(s * w, 0.0);
        }
        for slot in buf.iter_mut().skip(window_len) {
            *slot = Complex64::new(0.0, 0.0);
        }
        plan.process(&mut buf);
        for (a, c) in acc.iter_mut().zip(&buf) {
            *a += to_db(c.norm());
        }
        frames += 1;
        start += hop;
    }
    let df = x.sample_rate_hz() / n_fft as f64;
    Ok(LtsaProfile {
        freq_hz: (0..n_bins).map(|k| k as f64 * df).collect(),
        avg_log_magnitude_db: acc.into_iter().map(|a| a / frames as f64).collect(),
        window_len,
        hop,
        frames,
    })
}

/// Unwrapped phase plus a flag per bin whose magnitude was too small to carry
/// a phase of its own.
#[derive(Debug, Clone, PartialEq)]
pub struct UnwrappedPhase {
    pub radians: Vec<f64>,
    pub carried: Vec<bool>,
}

impl UnwrappedPhase {
    pub fn any_carried(&self) -> bool {
        self.carried.iter().any(|&c| c)
    }
}

pub fn unwrap_phase(spectrum: &Spectrum) -> Result<UnwrappedPhase> {
    unwrap_bins(&spectrum.bins)
}

/// Phase unwrapping on raw complex bins.
///
/// Bins whose magnitude is below `1e-12` of the largest bin take the phase of
/// the previous bin (or of the first resolvable bin, for a leading run).
pub fn unwrap_bins(bins: &[Complex64]) -> Result<UnwrappedPhase> {
    if bins.is_empty() {
        return Err(Error::arg("bins", "cannot unwrap an empty spectrum"));
    }
    let peak = bins.iter().map(|c| c.norm()).fold(0.0, f64::max);
    let tiny = peak * 1e-12;
    let carried: Vec<bool> = bins.iter().map(|c| !(c.norm() > tiny)).collect();
    let first = carried.iter().position(|&c| !c);
    let mut radians = vec![0.0; bins.len()];
    let Some(first) = first else {
        return Ok(UnwrappedPhase { radians, carried });
    };
    let mut prev_wrapped = bins[first].arg();
    let mut prev = prev_wrapped;
    for r in radians.iter_mut().take(first + 1) {
        *r = prev;
    }
    for k in first + 1..bins.len() {
        if carried[k] {
            radians[k] = prev;
            continue;
        }
        let wrapped = bins[k].arg();
        prev += wrap_to_pi(wrapped - prev_wrapped);
        prev_wrapped = wrapped;
        radians[k] = prev;
    }
    Ok(UnwrappedPhase { radians, carried })
}

/// Maps an angle into `(-π, π]`.
pub fn wrap_to_pi(a: f64) -> f64 {
    let mut w = a.rem_euclid(2.0 * PI);
    if w > PI {
        w -= 2.0 * PI;
    }
    w
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn naive_dft(x: &[f64], n: usize) -> Vec<Complex64> {
        (0..=n / 2)
            .map(|k| {
                x.iter()
                    .enumerate()
                    .map(|(i, &v)| Complex64::from_polar(v, -2.0 * PI * (k * i) as f64 / n as f64))
                    .sum()
            })
            .collect()
    }

    fn wf(x: &[f64]) -> Waveform {
        Waveform::new(x.to_vec(), 1000.0).unwrap()
    }

    #[test]
    fn waveform_rejects_bad_input() {
        assert!(Waveform::new(vec![1.0], 0.0).is_err());
        assert!(Waveform::new(vec![f64::NAN], 1000.0).is_err());
    }

    #[test]
    fn fft_of_impulse_is_flat() {
        let s = fft_real(&wf(&[1.0, 0.0, 0.0, 0.0]), 4).unwrap();
        assert_eq!(s.bins.len(), 3);
        for b in &s.bins {
            assert_eq!(*b, Complex64::new(1.0, 0.0));
        }
    }

    #[test]
    fn fft_of_constant_is_dc_only() {
        let s = fft_real(&wf(&[1.0; 4]), 4).unwrap();
        assert!((s.bins[0] - Complex64::new(4.0, 0.0)).norm() < 1e-15);
        assert!(s.bins[1].norm() < 1e-15);
        assert!(s.bins[2].norm() < 1e-15);
        assert_eq!(s.bin_freq_hz, vec![0.0, 250.0, 500.0]);
    }

    #[test]
    fn fft_matches_naive_dft() {
        let x = [1.0, 2.0, 3.0, 4.0];
        let s = fft_real(&wf(&x), 4).unwrap();
        for (a, b) in s.bins.iter().zip(naive_dft(&x, 4)) {
            assert!((a - b).norm() < 1e-12);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x: Vec<f64> = (0..50).map(|_| rng.random_range(-1.0..1.0)).collect();
        let s = fft_real(&wf(&x), 64).unwrap();
        for (a, b) in s.bins.iter().zip(naive_dft(&x, 64)) {
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn fft_rejects_bad_sizes() {
        assert!(fft_real(&wf(&[1.0; 5]), 4).is_err());
        assert!(fft_real(&wf(&[1.0; 5]), 6).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn fft_roundtrip_and_parseval(seed in any::<u64>(), log_n in 1u32..=14) {
            let n = 1usize << log_n;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let x: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            let s = fft_real(&wf(&x), n).unwrap();
            let back = ifft_real(&s).unwrap();
            let err = x.iter().zip(&back).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            prop_assert!(err < 1e-10);

            let time_energy: f64 = x.iter().map(|v| v * v).sum();
            let mut freq_energy = 0.0;
            for (k, b) in s.bins.iter().enumerate() {
                let twice = k != 0 && k != n / 2;
                freq_energy += b.norm_sqr() * if twice { 2.0 } else { 1.0 };
            }
            freq_energy /= n as f64;
            prop_assert!((time_energy - freq_energy).abs() <= 1e-9 * time_energy.max(1e-300));
        }

        #[test]
        fn unwrapped_differences_stay_in_range(seed in any::<u64>(), n in 2usize..200) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let bins: Vec<Complex64> = (0..n)
                .map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
                .collect();
            let u = unwrap_bins(&bins).unwrap();
            for w in u.radians.windows(2) {
                let d = w[1] - w[0];
                prop_assert!(d > -PI - 1e-12 && d <= PI + 1e-12);
            }
        }
    }

    fn correlation(a: &[f64], b: &[f64]) -> f64 {
        let n = a.len() as f64;
        let ma = a.iter().sum::<f64>() / n;
        let mb = b.iter().sum::<f64>() / n;
        let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
        let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
        let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
        cov / (va * vb).sqrt()
    }

    #[test]
    fn resample_sine_tracks_analytic_sine() {
        for f in [50.0, 200.0] {
            let src: Vec<f64> = (0..4000).map(|n| (2.0 * PI * f * n as f64 / 2000.0).sin()).collect();
            let out = resample(&Waveform::new(src, 2000.0).unwrap(), 1000.0).unwrap();
            assert_eq!(out.sample_rate_hz(), 1000.0);
            assert_eq!(out.len(), 2000);
            let analytic: Vec<f64> = (0..2000).map(|n| (2.0 * PI * f * n as f64 / 1000.0).sin()).collect();
            assert!(correlation(out.samples(), &analytic) > 0.999, "f={f}");
        }
    }

    #[test]
    fn resample_identity_and_dc() {
        let x = Waveform::new(vec![0.1, -0.3, 0.7], 1000.0).unwrap();
        assert_eq!(resample(&x, 1000.0).unwrap(), x);
        for len in [1, 7, 100, 1001] {
            let dc = Waveform::new(vec![0.37; len], 2000.0).unwrap();
            for target in [1000.0, 3000.0, 44100.0] {
                let out = resample(&dc, target).unwrap();
                assert!(out.samples().iter().all(|v| (v - 0.37).abs() < 1e-9));
            }
        }
        assert!(resample(&Waveform::new(vec![], 1000.0).unwrap(), 500.0).is_err());
        assert!(resample(&x, -1.0).is_err());
    }

    #[test]
    fn resample_suppresses_content_above_target_nyquist() {
        // 800 Hz cannot be represented at 1000 Hz and must not alias to 200 Hz.
        let src: Vec<f64> = (0..8000).map(|n| (2.0 * PI * 800.0 * n as f64 / 2000.0).sin()).collect();
        let out = resample(&Waveform::new(src, 2000.0).unwrap(), 1000.0).unwrap();
        let interior = &out.samples()[200..3800];
        let rms = (interior.iter().map(|v| v * v).sum::<f64>() / interior.len() as f64).sqrt();
        assert!(rms < 1e-3, "rms {rms}");
    }

    #[test]
    fn ltsa_peaks_at_sine_frequency() {
        let x: Vec<f64> = (0..8192).map(|n| (2.0 * PI * 50.0 * n as f64 / 1024.0).sin()).collect();
        let p = ltsa(&Waveform::new(x, 1024.0).unwrap(), 1024, 512).unwrap();
        let peak = p
            .avg_log_magnitude_db
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .unwrap()
            .0;
        assert_eq!(p.freq_hz[peak], 50.0);
    }

    #[test]
    fn ltsa_of_white_noise_is_flat() {
        use rand_distr::{Distribution, StandardNormal};
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let x: Vec<f64> = (0..256 * 100).map(|_| StandardNormal.sample(&mut rng)).collect();
        let p = ltsa(&Waveform::new(x, 1000.0).unwrap(), 256, 256).unwrap();
        assert_eq!(p.frames, 100);
        let band: Vec<f64> = p
            .freq_hz
            .iter()
            .zip(&p.avg_log_magnitude_db)
            .filter(|(f, _)| (10.0..=400.0).contains(*f))
            .map(|(_, v)| *v)
            .collect();
        let mean = band.iter().sum::<f64>() / band.len() as f64;
        assert!(band.iter().all(|v| (v - mean).abs() <= 3.0));
    }

    #[test]
    fn ltsa_single_window_is_one_periodogram() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x: Vec<f64> = (0..128).map(|_| rng.random_range(-1.0..1.0)).collect();
        let p1 = ltsa(&wf(&x), 128, 1).unwrap();
        let p2 = ltsa(&wf(&x), 128, 1000).unwrap();
        assert_eq!(p1, LtsaProfile { hop: 1, ..p2.clone() });
        let w = hamming(128);
        let windowed: Vec<f64> = x.iter().zip(&w).map(|(a, b)| a * b).collect();
        let direct = fft_real(&wf(&windowed), 128).unwrap().magnitude_db();
        assert_eq!(p2.avg_log_magnitude_db, direct);
    }

    #[test]
    fn ltsa_is_hop_invariant_for_tiling_windows() {
        // Period 16 divides both hops, so every frame sees the same samples.
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let period: Vec<f64> = (0..16).map(|_| rng.random_range(-1.0..1.0)).collect();
        let x: Vec<f64> = period.iter().copied().cycle().take(2048).collect();
        let a = ltsa(&wf(&x), 64, 16).unwrap();
        let b = ltsa(&wf(&x), 64, 32).unwrap();
        for (u, v) in a.avg_log_magnitude_db.iter().zip(&b.avg_log_magnitude_db) {
            assert!((u - v).abs() < 1e-12);
        }
    }

    #[test]
    fn ltsa_rejects_short_signal() {
        assert!(ltsa(&wf(&[1.0; 10]), 16, 4).is_err());
        assert!(ltsa(&wf(&[1.0; 10]), 8, 0).is_err());
    }

    fn dtft(h: &[f64], n_points: usize) -> Vec<Complex64> {
        (0..n_points)
            .map(|k| {
                let w = PI * k as f64 / (n_points - 1) as f64;
                h.iter()
                    .enumerate()
                    .map(|(i, &v)| Complex64::from_polar(v, -w * i as f64))
                    .sum()
            })
            .collect()
    }

    #[test]
    fn unwrap_positive_real_bins_is_zero() {
        let bins = vec![Complex64::new(2.0, 0.0); 8];
        let u = unwrap_bins(&bins).unwrap();
        assert!(u.radians.iter().all(|&p| p == 0.0));
        assert!(!u.any_carried());
    }

    #[test]
    fn unwrap_delay_is_linear() {
        let u = unwrap_bins(&dtft(&[0.0, 1.0, 0.0], 257)).unwrap();
        for (k, p) in u.radians.iter().enumerate() {
            let w = PI * k as f64 / 256.0;
            assert!((p + w).abs() < 1e-12);
        }
    }

    #[test]
    fn unwrap_symmetric_kernel_carries_nyquist_zero() {
        let u = unwrap_bins(&dtft(&[1.0, 2.0, 1.0], 257)).unwrap();
        // (2 + 2cos w) vanishes at Nyquist.
        assert!(u.carried[256]);
        assert!(u.carried[..256].iter().all(|&c| !c));
        for (k, p) in u.radians.iter().enumerate().take(256) {
            let w = PI * k as f64 / 256.0;
            assert!((p + w).abs() < 1e-9, "bin {k}");
        }
        assert!(unwrap_bins(&[]).is_err());
    }
}
