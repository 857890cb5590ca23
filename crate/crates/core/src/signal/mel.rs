use std::f64::consts::PI;

use rustfft::{num_complex::Complex64, FftPlanner};
use serde::{Deserialize, Serialize};

use super::SignalOfInterest;
use crate::error::{Error, Result};

/// HTK mel scale.
pub fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// Segmented log-mel spectrogram parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MelConfig {
    pub n_mels: usize,
    pub f_min: f64,
    pub f_max: f64,
    /// Hann window length in samples.
    pub frame_len: usize,
    pub hop: usize,
    /// FFT size; frames are zero-padded up to it.
    pub n_fft: usize,
    pub frames_per_segment: usize,
    /// Frame offset between consecutive segments.
    pub segment_hop: usize,
    /// Values are dB relative to the segment maximum, floored here.
    pub floor_db: f64,
}

impl Default for MelConfig {
    fn default() -> Self {
        Self {
            n_mels: 60,
            f_min: 0.0,
            f_max: 2000.0,
            frame_len: 1024,
            hop: 256,
            n_fft: 4096,
            frames_per_segment: 41,
            segment_hop: 20,
            floor_db: -80.0,
        }
    }
}

impl MelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_mels == 0 || self.frames_per_segment == 0 || self.hop == 0 || self.segment_hop == 0 {
            return Err(Error::InvalidParameter("mel dimensions must be nonzero".into()));
        }
        if self.frame_len == 0 || self.n_fft < self.frame_len {
            return Err(Error::InvalidParameter("n_fft must be at least the frame length".into()));
        }
        if !(self.f_max > self.f_min && self.f_min >= 0.0) {
            return Err(Error::InvalidParameter("mel band edges must satisfy 0 <= f_min < f_max".into()));
        }
        if !(self.floor_db < 0.0) {
            return Err(Error::InvalidParameter("log floor must be negative".into()));
        }
        Ok(())
    }

    /// Number of STFT frames that fit in `samples`.
    pub fn frame_count(&self, samples: usize) -> usize {
        if samples < self.frame_len {
            0
        } else {
            1 + (samples - self.frame_len) / self.hop
        }
    }

    /// Centre frequency of every mel band, Hz.
    pub fn band_centers(&self) -> Vec<f64> {
        let points = self.mel_points();
        points[1..=self.n_mels].iter().map(|&m| mel_to_hz(m)).collect()
    }

    fn mel_points(&self) -> Vec<f64> {
        let (lo, hi) = (hz_to_mel(self.f_min), hz_to_mel(self.f_max));
        (0..self.n_mels + 2)
            .map(|i| lo + (hi - lo) * i as f64 / (self.n_mels + 1) as f64)
            .collect()
    }

    /// Triangular filters sampled at the FFT bin frequencies.
    fn filterbank(&self, sample_rate: f64) -> Vec<Vec<(usize, f64)>> {
        let edges: Vec<f64> = self.mel_points().into_iter().map(mel_to_hz).collect();
        let bin_hz = sample_rate / self.n_fft as f64;
        (0..self.n_mels)
            .map(|b| {
                let (l, c, r) = (edges[b], edges[b + 1], edges[b + 2]);
                (0..=self.n_fft / 2)
                    .filter_map(|k| {
                        let f = k as f64 * bin_hz;
                        let w = if f > l && f <= c {
                            (f - l) / (c - l)
                        } else if f > c && f < r {
                            (r - f) / (r - c)
                        } else {
                            0.0
                        };
                        (w > 0.0).then_some((k, w))
                    })
                    .collect()
            })
            .collect()
    }
}

/// A fixed-size log-mel patch: `rows()` mel bands by `cols()` frames.
#[derive(Debug, Clone, PartialEq)]
pub struct MelSegment {
    /// Row-major, one row per mel band.
    pub values: Vec<f64>,
    pub source_soi_index: usize,
}

impl MelSegment {
    pub const ROWS: usize = 60;
    pub const COLS: usize = 41;

    pub fn new(values: Vec<f64>, source_soi_index: usize) -> Result<Self> {
        if values.len() != Self::ROWS * Self::COLS {
            return Err(Error::InvalidShape {
                expected: format!("{}x{}", Self::ROWS, Self::COLS),
                actual: format!("{} values", values.len()),
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("mel segment contains non-finite values".into()));
        }
        Ok(Self {
            values,
            source_soi_index,
        })
    }

    pub fn rows(&self) -> usize {
        Self::ROWS
    }

    pub fn cols(&self) -> usize {
        Self::COLS
    }

    pub fn get(&self, band: usize, frame: usize) -> f64 {
        self.values[band * Self::COLS + frame]
    }
}

/// Cuts an SOI into log-mel segments.
///
/// Segments start every `segment_hop` frames and span `frames_per_segment`
/// frames; an SOI too short for a single segment yields an empty list. The
/// shape is fixed at 60x41, so the configuration must match it.
pub fn mel_segments(soi: &SignalOfInterest, soi_index: usize, config: &MelConfig) -> Result<Vec<MelSegment>> {
    config.validate()?;
    if config.n_mels != MelSegment::ROWS || config.frames_per_segment != MelSegment::COLS {
        return Err(Error::InvalidShape {
            expected: format!("{}x{}", MelSegment::ROWS, MelSegment::COLS),
            actual: format!("{}x{}", config.n_mels, config.frames_per_segment),
        });
    }
    let energies = mel_energies(&soi.magnitudes, soi.sample_rate, config);
    let frames = energies.len();
    let mut out = Vec::new();
    let mut start = 0;
    while start + config.frames_per_segment <= frames {
        let window = &energies[start..start + config.frames_per_segment];
        out.push(MelSegment::new(log_segment(window, config), soi_index)?);
        start += config.segment_hop;
    }
    Ok(out)
}

/// Mel energies per frame, `[frame][band]`.
fn mel_energies(samples: &[f64], sample_rate: f64, config: &MelConfig) -> Vec<Vec<f64>> {
    let frames = config.frame_count(samples.len());
    if frames == 0 {
        return Vec::new();
    }
    let bank = config.filterbank(sample_rate);
    let window: Vec<f64> = (0..config.frame_len)
        .map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / config.frame_len as f64).cos())
        .collect();
    let fft = FftPlanner::<f64>::new().plan_fft_forward(config.n_fft);
    let mut buf = vec![Complex64::new(0.0, 0.0); config.n_fft];
    (0..frames)
        .map(|t| {
            let frame = &samples[t * config.hop..t * config.hop + config.frame_len];
            buf.iter_mut().for_each(|c| *c = Complex64::new(0.0, 0.0));
            for ((dst, s), w) in buf.iter_mut().zip(frame).zip(&window) {
                dst.re = s * w;
            }
            fft.process(&mut buf);
            bank.iter()
                .map(|filter| filter.iter().map(|&(k, w)| w * buf[k].norm_sqr()).sum())
                .collect()
        })
        .collect()
}

fn log_segment(window: &[Vec<f64>], config: &MelConfig) -> Vec<f64> {
    let bands = config.n_mels;
    let cols = window.len();
    let peak = window.iter().flatten().fold(0.0_f64, |m, &e| m.max(e));
    let mut values = vec![config.floor_db; bands * cols];
    if peak <= 0.0 {
        return values;
    }
    let peak_db = 10.0 * peak.log10();
    for (t, frame) in window.iter().enumerate() {
        for (b, &e) in frame.iter().enumerate() {
            if e > 0.0 {
                values[b * cols + t] = (10.0 * e.log10() - peak_db).max(config.floor_db);
            }
        }
    }
    values
}

#[cfg(test)]
mod tests {
    use super::*;

    fn soi_of(samples: Vec<f64>, sr: f64) -> SignalOfInterest {
        SignalOfInterest::from_samples(samples, sr, 0.0, 0.01)
    }

    fn standard_len(sr: f64) -> usize {
        (0.31 * sr).round() as usize + 1
    }

    #[test]
    fn mel_scale_round_trips() {
        for hz in [0.0, 100.0, 440.0, 2000.0, 8000.0] {
            assert!((mel_to_hz(hz_to_mel(hz)) - hz).abs() < 1e-9);
        }
        assert!((hz_to_mel(700.0) - 2595.0 * 2f64.log10()).abs() < 1e-12);
    }

    #[test]
    fn standard_soi_yields_a_60_by_41_segment() {
        for sr in [44100.0, 48000.0] {
            let n = standard_len(sr);
            let x: Vec<f64> = (0..n).map(|i| ((i * 7919) % 104_729) as f64 / 104_729.0 - 0.5).collect();
            let segs = mel_segments(&soi_of(x, sr), 3, &MelConfig::default()).unwrap();
            assert!(!segs.is_empty());
            for s in &segs {
                assert_eq!(s.values.len(), 60 * 41);
                assert_eq!(s.source_soi_index, 3);
                assert!(s.values.iter().all(|v| v.is_finite() && *v <= 0.0 && *v >= -80.0));
            }
        }
    }

    #[test]
    fn silent_soi_is_all_floor() {
        let segs = mel_segments(&soi_of(vec![0.0; standard_len(44100.0)], 44100.0), 0, &MelConfig::default()).unwrap();
        assert!(!segs.is_empty());
        assert!(segs.iter().all(|s| s.values.iter().all(|&v| v == -80.0)));
    }

    #[test]
    fn too_short_soi_gives_no_segments() {
        let segs = mel_segments(&soi_of(vec![0.1; 1000], 44100.0), 0, &MelConfig::default()).unwrap();
        assert!(segs.is_empty());
    }

    #[test]
    fn tone_peaks_in_its_mel_band() {
        let sr = 44100.0;
        let x: Vec<f64> = (0..standard_len(sr)).map(|i| 0.5 * (2.0 * PI * 440.0 * i as f64 / sr).sin()).collect();
        let segs = mel_segments(&soi_of(x, sr), 0, &MelConfig::default()).unwrap();
        // Band whose centre is nearest 440 Hz on the mel axis, from the scale formula.
        let step = hz_to_mel(2000.0) / 61.0;
        let expected = (hz_to_mel(440.0) / step).round() as usize - 1;
        for s in &segs {
            for t in 0..41 {
                let best = (0..60).max_by(|&a, &b| s.get(a, t).total_cmp(&s.get(b, t))).unwrap();
                assert_eq!(best, expected, "frame {t}");
            }
        }
    }

    #[test]
    fn wrong_shape_config_is_rejected() {
        let cfg = MelConfig { n_mels: 40, ..MelConfig::default() };
        assert!(mel_segments(&soi_of(vec![0.0; 20_000], 44100.0), 0, &cfg).is_err());
        assert!(MelSegment::new(vec![0.0; 10], 0).is_err());
    }
}
