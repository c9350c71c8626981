use std::path::Path;

use crate::dsp::{resample, Waveform};
use crate::{Error, Result, PIPELINE_RATE_HZ};

use super::{Label, RecordingMeta};

/// Reads a 16-bit PCM mono WAV, scales to `[−1, 1)` by `1/32768` and
/// resamples to the pipeline rate. The record id is the file stem.
pub fn load_recording(path: &Path, label: Label) -> Result<(Waveform, RecordingMeta)> {
    let id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string());
    let audio = |reason: String| Error::Audio {
        id: id.clone(),
        reason,
    };
    let reader = hound::WavReader::open(path).map_err(|e| match e {
        hound::Error::IoError(io) => Error::io(path, io),
        other => audio(other.to_string()),
    })?;
    let spec = reader.spec();
    if spec.channels != 1 {
        return Err(audio(format!("{} channels, expected mono", spec.channels)));
    }
    if spec.sample_format != hound::SampleFormat::Int || spec.bits_per_sample != 16 {
        return Err(audio(format!(
            "{:?} {}-bit samples, expected 16-bit PCM",
            spec.sample_format, spec.bits_per_sample
        )));
    }
    let samples = reader
        .into_samples::<i16>()
        .map(|s| s.map(|v| f64::from(v) / 32768.0))
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(|e| audio(e.to_string()))?;
    if samples.is_empty() {
        return Err(audio("no samples".into()));
    }
    let wave = Waveform::new(samples, f64::from(spec.sample_rate))?;
    let wave = resample(&wave, PIPELINE_RATE_HZ)?;
    Ok((wave, RecordingMeta::new(id, label)))
}

/// Writes 16-bit PCM mono, clipping to the representable range.
pub fn write_wav(path: &Path, x: &Waveform) -> Result<()> {
    let rate = x.sample_rate_hz();
    if rate.fract() != 0.0 || rate > f64::from(u32::MAX) {
        return Err(Error::arg("sample_rate_hz", format!("{rate} Hz is not an integer WAV rate")));
    }
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: rate as u32,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let wav_err = |e: hound::Error| match e {
        hound::Error::IoError(io) => Error::io(path, io),
        other => Error::Format {
            what: "wav",
            reason: other.to_string(),
        },
    };
    let mut w = hound::WavWriter::create(path, spec).map_err(wav_err)?;
    for &v in x.samples() {
        let q = (v * 32768.0).round().clamp(-32768.0, 32767.0) as i16;
        w.write_sample(q).map_err(wav_err)?;
    }
    w.finalize().map_err(wav_err)
}
