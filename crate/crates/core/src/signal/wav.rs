//! Mono WAV ingestion and 16-bit PCM output.

use std::path::Path;

use super::AudioTrace;
use crate::error::{Error, Result};

/// Reads a WAV file into a normalized trace.
///
/// 16-bit PCM is scaled by 1/32768; 32-bit float is taken as is (clamped to
/// full scale). For multi-channel input only channel 0 is kept.
pub fn read_wav(path: impl AsRef<Path>, start_time: f64) -> Result<AudioTrace> {
    let path = path.as_ref();
    let mut reader = hound::WavReader::open(path).map_err(|e| wav_error(path, e))?;
    let spec = reader.spec();
    let channels = spec.channels.max(1) as usize;
    if channels > 1 {
        log::warn!("{}: {channels} channels, using channel 0", path.display());
    }
    let samples: Vec<f64> = match (spec.sample_format, spec.bits_per_sample) {
        (hound::SampleFormat::Int, 16) => reader
            .samples::<i16>()
            .step_by(channels)
            .map(|s| s.map(|v| v as f64 / 32768.0))
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| wav_error(path, e))?,
        (hound::SampleFormat::Float, 32) => reader
            .samples::<f32>()
            .step_by(channels)
            .map(|s| s.map(|v| (v as f64).clamp(-1.0, 1.0)))
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| wav_error(path, e))?,
        (format, bits) => {
            return Err(Error::format(
                path,
                format!("unsupported sample format {format:?} with {bits} bits"),
            ))
        }
    };
    if samples.is_empty() {
        return Err(Error::format(path, "WAV file contains no samples"));
    }
    AudioTrace::new(samples, spec.sample_rate as f64, start_time)
}

/// Writes a mono 16-bit PCM WAV. Samples are rounded to the nearest code.
pub fn write_wav_pcm16(path: impl AsRef<Path>, trace: &AudioTrace) -> Result<()> {
    let path = path.as_ref();
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: trace.sample_rate().round() as u32,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut writer = hound::WavWriter::create(path, spec).map_err(|e| wav_error(path, e))?;
    for &s in trace.samples() {
        let code = (s * 32768.0).round().clamp(-32768.0, 32767.0) as i16;
        writer.write_sample(code).map_err(|e| wav_error(path, e))?;
    }
    writer.finalize().map_err(|e| wav_error(path, e))
}

/// Writes a mono 32-bit float WAV.
pub fn write_wav_f32(path: impl AsRef<Path>, trace: &AudioTrace) -> Result<()> {
    let path = path.as_ref();
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: trace.sample_rate().round() as u32,
        bits_per_sample: 32,
        sample_format: hound::SampleFormat::Float,
    };
    let mut writer = hound::WavWriter::create(path, spec).map_err(|e| wav_error(path, e))?;
    for &s in trace.samples() {
        writer.write_sample(s as f32).map_err(|e| wav_error(path, e))?;
    }
    writer.finalize().map_err(|e| wav_error(path, e))
}

fn wav_error(path: &Path, e: hound::Error) -> Error {
    match e {
        hound::Error::IoError(io) => Error::io(path, io),
        other => Error::format(path, other.to_string()),
    }
}
