//! Cardiac-cycle extraction from a Shannon-energy envelope.
//!
//! 1. Peak-normalise, take `−x²·ln x²`, smooth with a 40 ms moving average
//!    and block-average down to a 100 Hz envelope.
//! 2. Estimate the beat period from the largest normalised autocorrelation
//!    peak over lags of 35 to 159 bpm. If the peak at half that lag is nearly
//!    as strong, the half lag is taken instead.
//! 3. Fold the envelope at the period to get a one-beat template and locate
//!    its two sound bumps. S1 is the one followed by the shorter gap.
//! 4. Track S1 beat by beat, refining each predicted position to the local
//!    envelope maximum, and cut cycles from S1 onset to the next S1 onset.

use crate::dsp::Waveform;
use crate::{Error, Result, CYCLE_LEN, PIPELINE_RATE_HZ};

use super::{CycleRecord, RecordingMeta};

pub const MIN_BPM: f64 = 35.0;
pub const MAX_BPM: f64 = 159.0;
/// Cycles shorter than 0.4 s are discarded.
pub const MIN_VALID_LEN: usize = 400;

const DECIMATION: usize = 10;
const SMOOTH_MS: usize = 40;
/// Offset from the envelope peak of S1 back to its onset.
const ONSET_LEAD: usize = 50;
const MIN_PERIODICITY: f64 = 0.3;
const HALF_LAG_RATIO: f64 = 0.75;
/// Fraction of the median S1 envelope a tracked peak must reach.
const SOUND_FLOOR: f64 = 0.3;

/// Splits a recording into S1-to-S1 cycles of exactly `CYCLE_LEN` samples.
pub fn segment_cycles(x: &Waveform, meta: &RecordingMeta) -> Result<Vec<CycleRecord>> {
    if x.sample_rate_hz() != PIPELINE_RATE_HZ {
        return Err(Error::arg(
            "x",
            format!("expected {PIPELINE_RATE_HZ} Hz, got {} Hz", x.sample_rate_hz()),
        ));
    }
    let no_period = |detail: String| Error::NoPeriodicity {
        id: meta.id.clone(),
        detail,
    };
    if x.duration_s() < 3.0 {
        return Err(no_period(format!("{:.2} s is shorter than the 3 s minimum", x.duration_s())));
    }
    let fine = shannon_envelope(x.samples());
    let env = decimate(&fine, DECIMATION);
    let env_rate = PIPELINE_RATE_HZ / DECIMATION as f64;

    let period = estimate_period(&env, env_rate).ok_or_else(|| {
        no_period(format!("no autocorrelation peak above {MIN_PERIODICITY} between {MIN_BPM} and {MAX_BPM} bpm"))
    })?;
    let phase = s1_phase(&env, period).ok_or_else(|| no_period("beat template has no distinct sounds".into()))?;

    let peaks = track_s1(&env, &fine, period, phase);
    let cuts: Vec<usize> = peaks
        .iter()
        .filter_map(|&p| p.checked_sub(ONSET_LEAD))
        .collect();
    let mut cycles = Vec::new();
    for w in cuts.windows(2) {
        let (start, end) = (w[0], w[1]);
        if end > x.len() {
            break;
        }
        let valid_len = (end - start).min(CYCLE_LEN);
        if valid_len < MIN_VALID_LEN {
            continue;
        }
        let mut samples = vec![0.0; CYCLE_LEN];
        samples[..valid_len].copy_from_slice(&x.samples()[start..start + valid_len]);
        cycles.push(CycleRecord {
            recording_id: meta.id.clone(),
            label: meta.label,
            start,
            valid_len,
            samples,
        });
    }
    if cycles.is_empty() {
        return Err(no_period("no complete cycle between detected S1 sounds".into()));
    }
    Ok(cycles)
}

/// Smoothed Shannon energy at the input rate.
fn shannon_envelope(x: &[f64]) -> Vec<f64> {
    let peak = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let energy: Vec<f64> = x
        .iter()
        .map(|v| {
            let s = if peak > 0.0 { (v / peak).powi(2) } else { 0.0 };
            if s > 0.0 {
                -s * s.ln()
            } else {
                0.0
            }
        })
        .collect();
    moving_average(&energy, SMOOTH_MS * PIPELINE_RATE_HZ as usize / 1000)
}

/// Centred moving average, shrinking the window at the edges.
fn moving_average(x: &[f64], width: usize) -> Vec<f64> {
    let half = width / 2;
    let mut prefix = Vec::with_capacity(x.len() + 1);
    prefix.push(0.0);
    for v in x {
        prefix.push(prefix.last().unwrap() + v);
    }
    (0..x.len())
        .map(|i| {
            let lo = i.saturating_sub(half);
            let hi = (i + half + 1).min(x.len());
            (prefix[hi] - prefix[lo]) / (hi - lo) as f64
        })
        .collect()
}

fn decimate(x: &[f64], factor: usize) -> Vec<f64> {
    x.chunks(factor).map(|c| c.iter().sum::<f64>() / c.len() as f64).collect()
}

/// Beat period in envelope samples (fractional, by parabolic refinement).
fn estimate_period(env: &[f64], env_rate: f64) -> Option<f64> {
    let n = env.len();
    let mean = env.iter().sum::<f64>() / n as f64;
    let e: Vec<f64> = env.iter().map(|v| v - mean).collect();
    let r0: f64 = e.iter().map(|v| v * v).sum();
    if r0 <= 0.0 {
        return None;
    }
    let lag_min = (60.0 / MAX_BPM * env_rate).floor() as usize;
    let lag_max = ((60.0 / MIN_BPM * env_rate).ceil() as usize).min(n - 1);
    if lag_min + 2 > lag_max {
        return None;
    }
    // One extra lag either side so peaks at the range edge can be refined.
    let lo = lag_min.saturating_sub(1).max(1);
    let hi = (lag_max + 1).min(n - 1);
    let r: Vec<f64> = (0..=hi)
        .map(|lag| {
            if lag < lo {
                0.0
            } else {
                e[..n - lag].iter().zip(&e[lag..]).map(|(a, b)| a * b).sum::<f64>() / r0
            }
        })
        .collect();
    let is_peak = |l: usize| l > lo && l < hi && r[l] >= r[l - 1] && r[l] >= r[l + 1];
    let best = (lag_min..=lag_max).filter(|&l| is_peak(l)).max_by(|&a, &b| r[a].total_cmp(&r[b]))?;
    if r[best] < MIN_PERIODICITY {
        return None;
    }
    let mut chosen = best;
    let half = best / 2;
    if half >= lag_min {
        let window = half.saturating_sub(3).max(lag_min)..=(half + 3).min(lag_max);
        if let Some(h) = window.filter(|&l| is_peak(l)).max_by(|&a, &b| r[a].total_cmp(&r[b])) {
            if r[h] >= HALF_LAG_RATIO * r[best] {
                chosen = h;
            }
        }
    }
    let (a, b, c) = (r[chosen - 1], r[chosen], r[chosen + 1]);
    let denom = a - 2.0 * b + c;
    let delta = if denom < 0.0 { 0.5 * (a - c) / denom } else { 0.0 };
    Some(chosen as f64 + delta.clamp(-0.5, 0.5))
}

/// Envelope-sample phase in `[0, period)` of the S1 peak.
fn s1_phase(env: &[f64], period: f64) -> Option<f64> {
    let bins = period.round() as usize;
    let mut sum = vec![0.0; bins];
    let mut count = vec![0usize; bins];
    for (m, v) in env.iter().enumerate() {
        let b = ((m as f64 % period) / period * bins as f64) as usize % bins;
        sum[b] += v;
        count[b] += 1;
    }
    let template: Vec<f64> = sum.iter().zip(&count).map(|(s, &c)| s / c.max(1) as f64).collect();
    let at = |i: isize| template[i.rem_euclid(bins as isize) as usize];
    // Circular local maxima, strongest first.
    let mut peaks: Vec<usize> = (0..bins as isize)
        .filter(|&i| at(i) > at(i - 1) && at(i) >= at(i + 1))
        .map(|i| i as usize)
        .collect();
    peaks.sort_by(|&a, &b| template[b].total_cmp(&template[a]));
    let first = *peaks.first()?;
    let min_sep = (0.2 * bins as f64).ceil() as usize;
    let circ = |a: usize, b: usize| {
        let d = a.abs_diff(b);
        d.min(bins - d)
    };
    let to_phase = |b: usize| b as f64 * period / bins as f64;
    let Some(&second) = peaks.iter().find(|&&p| circ(p, first) >= min_sep) else {
        return Some(to_phase(first));
    };
    // S1 → S2 (systole) is shorter than S2 → S1 (diastole).
    let gap = (second + bins - first) % bins;
    let s1 = if gap < bins / 2 { first } else { second };
    Some(to_phase(s1))
}

/// S1 peak positions at the input rate.
fn track_s1(env: &[f64], fine: &[f64], period: f64, phase: f64) -> Vec<usize> {
    let search = 0.15 * period;
    let mut peaks = Vec::new();
    let mut predicted = phase;
    let last = env.len() as f64 - 1.0;
    while predicted <= last + search {
        let lo = (predicted - search).max(0.0).ceil() as usize;
        let hi = ((predicted + search).floor() as usize).min(env.len() - 1);
        if lo > hi {
            break;
        }
        let m = (lo..=hi).max_by(|&a, &b| env[a].total_cmp(&env[b])).unwrap();
        // Refine at the input rate within the chosen envelope block and its neighbours.
        let f_lo = m.saturating_sub(1) * DECIMATION;
        let f_hi = ((m + 2) * DECIMATION).min(fine.len());
        let p = (f_lo..f_hi).max_by(|&a, &b| fine[a].total_cmp(&fine[b])).unwrap();
        peaks.push(p);
        predicted = p as f64 / DECIMATION as f64 + period;
    }
    peaks.dedup();
    // Windows hanging over the signal edges can land on silence; keep only
    // peaks comparable to a typical S1.
    let mut strengths: Vec<f64> = peaks.iter().map(|&p| fine[p]).collect();
    strengths.sort_by(f64::total_cmp);
    let floor = SOUND_FLOOR * strengths.get(strengths.len() / 2).copied().unwrap_or(0.0);
    peaks.retain(|&p| fine[p] >= floor);
    peaks
}
