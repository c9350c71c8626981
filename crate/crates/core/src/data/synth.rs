//! Synthetic phonocardiograms with known generator parameters.
//!
//! A normal recording is a train of S1 bursts (Hann-windowed sine, 35–70 Hz,
//! 100 ms) and S2 bursts (45–95 Hz, 80 ms) at 50–120 bpm with mild
//! beat-to-beat jitter, plus white noise. Abnormal recordings add a
//! 150–400 Hz band-limited noise "murmur" spanning systole.

use std::f64::consts::PI;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::dsp::Waveform;
use crate::fir::{design_bandpass, fir_aligned};
use crate::model::rng_for;
use crate::{Error, Result, PIPELINE_RATE_HZ};

use super::{Label, RecordingMeta};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthConfig {
    pub n_recordings: usize,
    pub abnormal_fraction: f64,
    pub duration_s: f64,
    pub bpm_range: (f64, f64),
    pub noise_std_range: (f64, f64),
    pub murmur_amp_range: (f64, f64),
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_recordings: 200,
            abnormal_fraction: 0.21,
            duration_s: 8.0,
            bpm_range: (50.0, 120.0),
            noise_std_range: (0.02, 0.05),
            murmur_amp_range: (0.08, 0.3),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Murmur {
    pub lo_hz: f64,
    pub hi_hz: f64,
    /// RMS of the murmur relative to a unit-amplitude S1.
    pub amplitude: f64,
}

/// Everything drawn for one recording.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthParams {
    pub id: String,
    pub label: Label,
    pub bpm: f64,
    /// Centres of every S1 burst, in samples.
    pub s1_centres: Vec<usize>,
    pub systole_fraction: f64,
    pub s1_freq_hz: f64,
    pub s2_freq_hz: f64,
    pub s2_amp: f64,
    pub noise_std: f64,
    pub murmur: Option<Murmur>,
}

#[derive(Debug, Clone)]
pub struct SynthRecording {
    pub meta: RecordingMeta,
    pub waveform: Waveform,
    pub params: SynthParams,
}

const S1_HALF: usize = 50;
const S2_HALF: usize = 40;
pub const MURMUR_BAND: (f64, f64) = (150.0, 400.0);

pub fn synth_pcg(config: &SynthConfig) -> Result<Vec<SynthRecording>> {
    if !(0.0..=1.0).contains(&config.abnormal_fraction) {
        return Err(Error::arg("abnormal_fraction", format!("must lie in [0, 1], got {}", config.abnormal_fraction)));
    }
    if !(config.duration_s >= 3.0 && config.duration_s.is_finite()) {
        return Err(Error::arg("duration_s", format!("must be at least 3 s, got {}", config.duration_s)));
    }
    let (lo, hi) = config.bpm_range;
    if !(lo > 0.0 && lo <= hi && hi <= 159.0) {
        return Err(Error::arg("bpm_range", format!("{lo}..{hi} is not inside (0, 159]")));
    }
    let n_abnormal = (config.n_recordings as f64 * config.abnormal_fraction).round() as usize;
    let mut labels: Vec<Label> = (0..config.n_recordings)
        .map(|i| if i < n_abnormal { Label::Abnormal } else { Label::Normal })
        .collect();
    labels.shuffle(&mut rng_for(config.seed, "synth.labels"));
    let murmur_filter = design_bandpass(MURMUR_BAND.0, MURMUR_BAND.1, 60, PIPELINE_RATE_HZ)?;

    labels
        .iter()
        .enumerate()
        .map(|(i, &label)| {
            let id = format!("syn{i:04}");
            let mut rng = rng_for(config.seed, &id);
            let (params, samples) = one_recording(config, &id, label, murmur_filter.coeffs(), &mut rng);
            Ok(SynthRecording {
                meta: RecordingMeta::new(id, label),
                waveform: Waveform::new(samples, PIPELINE_RATE_HZ)?,
                params,
            })
        })
        .collect()
}

fn uniform(rng: &mut impl Rng, (lo, hi): (f64, f64)) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.random_range(lo..hi)
    }
}

fn add_burst(x: &mut [f64], centre: usize, half: usize, freq: f64, amp: f64, phase: f64) {
    for k in 0..2 * half {
        let Some(n) = (centre + k).checked_sub(half) else { continue };
        if n >= x.len() {
            break;
        }
        let w = 0.5 - 0.5 * (PI * k as f64 / half as f64).cos();
        x[n] += amp * w * (2.0 * PI * freq * k as f64 / PIPELINE_RATE_HZ + phase).sin();
    }
}

fn one_recording(
    config: &SynthConfig,
    id: &str,
    label: Label,
    murmur_taps: &[f64],
    rng: &mut impl Rng,
) -> (SynthParams, Vec<f64>) {
    let len = (config.duration_s * PIPELINE_RATE_HZ).round() as usize;
    let bpm = uniform(rng, config.bpm_range);
    let period = 60.0 * PIPELINE_RATE_HZ / bpm;
    let systole_fraction = rng.random_range(0.3..0.4);
    let s1_freq_hz = rng.random_range(35.0..70.0);
    let s2_freq_hz = rng.random_range(45.0..95.0);
    let s2_amp = rng.random_range(0.5..0.8);
    let noise_std = uniform(rng, config.noise_std_range);
    let murmur = (label == Label::Abnormal).then(|| Murmur {
        lo_hz: MURMUR_BAND.0,
        hi_hz: MURMUR_BAND.1,
        amplitude: uniform(rng, config.murmur_amp_range),
    });

    let mut s1_centres = Vec::new();
    let mut t = rng.random_range(0.1..0.8) * period;
    while (t as usize) + S1_HALF <= len {
        s1_centres.push(t as usize);
        t += period * rng.random_range(0.98..1.02);
    }

    let mut x = vec![0.0; len];
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let band_noise = murmur.as_ref().map(|_| {
        let white: Vec<f64> = (0..len).map(|_| normal.sample(rng)).collect();
        let band = fir_aligned(murmur_taps, &white);
        let rms = (band.iter().map(|v| v * v).sum::<f64>() / len as f64).sqrt();
        band.into_iter().map(|v| v / rms).collect::<Vec<_>>()
    });
    for &c in &s1_centres {
        let s2 = c + (systole_fraction * period) as usize;
        add_burst(&mut x, c, S1_HALF, s1_freq_hz, rng.random_range(0.85..1.0), rng.random_range(0.0..2.0 * PI));
        add_burst(&mut x, s2, S2_HALF, s2_freq_hz, s2_amp, rng.random_range(0.0..2.0 * PI));
        if let (Some(m), Some(noise)) = (&murmur, &band_noise) {
            // Tapered envelope from the end of S1 to the start of S2.
            let (a, b) = (c + S1_HALF / 2, s2.saturating_sub(S2_HALF / 2));
            let width = b.saturating_sub(a);
            for k in 0..width {
                let n = a + k;
                if n >= len {
                    break;
                }
                let w = (PI * k as f64 / width as f64).sin();
                x[n] += m.amplitude * w * noise[n];
            }
        }
    }
    for v in &mut x {
        *v += noise_std * normal.sample(rng);
    }
    let peak = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if peak > 0.0 {
        for v in &mut x {
            *v *= 0.9 / peak;
        }
    }
    let params = SynthParams {
        id: id.to_string(),
        label,
        bpm,
        s1_centres,
        systole_fraction,
        s1_freq_hz,
        s2_freq_hz,
        s2_amp,
        noise_std,
        murmur,
    };
    (params, x)
}
