//! Time-domain conditioning and frequency-domain analysis of impact sounds.
//!
//! A recording enters as an [`AudioTrace`], is low-pass filtered, cut into
//! relevant regions by [`segment_intervals`], and each impact is cropped into a
//! [`SignalOfInterest`]. Every SOI is then transformed into a one-sided
//! magnitude [`Spectrum`] from which the PSD and Frequency Density scalars are
//! computed.

mod export;
mod filter;
mod mel;
mod segment;
mod soi;
mod spectrum;
pub mod wav;

pub use export::{write_soi_report, write_spectrum_csv, SoiReportRow};
pub use filter::{low_pass_filter, lowpass_kernel, DEFAULT_CUTOFF_HZ};
pub use mel::{hz_to_mel, mel_segments, mel_to_hz, MelConfig, MelSegment};
pub use segment::{
    segment_intervals, IntervalRange, IntervalSegmentation, RejectedInterval, RejectionReason,
    SegmentConfig,
};
pub use soi::{detect_soi, detect_soi_in, SoiConfig};
pub use spectrum::{complex_spectrum, dft, fd, psd};

use crate::error::{Error, Result};

/// Raw microphone samples, normalized to full scale.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioTrace {
    samples: Vec<f64>,
    sample_rate: f64,
    start_time: f64,
}

impl AudioTrace {
    /// Wraps samples that are already in `[-1, 1]`.
    pub fn new(samples: Vec<f64>, sample_rate: f64, start_time: f64) -> Result<Self> {
        if !(sample_rate > 0.0 && sample_rate.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "sample rate must be positive, got {sample_rate}"
            )));
        }
        if samples.is_empty() {
            return Err(Error::InvalidInput("audio trace has no samples".into()));
        }
        if let Some((i, s)) = samples
            .iter()
            .enumerate()
            .find(|(_, s)| !s.is_finite() || s.abs() > 1.0)
        {
            return Err(Error::InvalidInput(format!(
                "sample {i} = {s} is outside the normalized range [-1, 1]"
            )));
        }
        Ok(Self {
            samples,
            sample_rate,
            start_time,
        })
    }

    /// Scales arbitrary samples by their peak magnitude so the loudest sample
    /// sits at full scale. A silent input is kept as zeros.
    pub fn from_unnormalized(samples: Vec<f64>, sample_rate: f64, start_time: f64) -> Result<Self> {
        let peak = samples.iter().fold(0.0_f64, |m, s| m.max(s.abs()));
        let samples = if peak > 0.0 {
            samples.into_iter().map(|s| (s / peak).clamp(-1.0, 1.0)).collect()
        } else {
            samples
        };
        Self::new(samples, sample_rate, start_time)
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }

    pub fn sample_rate(&self) -> f64 {
        self.sample_rate
    }

    pub fn start_time(&self) -> f64 {
        self.start_time
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Duration in seconds.
    pub fn duration(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate
    }

    /// Absolute time of sample `index`.
    pub fn time_at(&self, index: usize) -> f64 {
        self.start_time + index as f64 / self.sample_rate
    }

    pub fn peak(&self) -> f64 {
        self.samples.iter().fold(0.0_f64, |m, s| m.max(s.abs()))
    }
}

/// The cropped window `S = (t, m)` around one impact.
#[derive(Debug, Clone, PartialEq)]
pub struct SignalOfInterest {
    pub times: Vec<f64>,
    pub magnitudes: Vec<f64>,
    /// Absolute time of the first sample over the detection threshold.
    pub t_start: f64,
    pub sample_rate: f64,
    /// Set when the nominal window ran past either end of the trace.
    pub clipped: bool,
}

impl SignalOfInterest {
    /// Builds an SOI from uniformly spaced samples beginning at `first_time`.
    pub fn from_samples(magnitudes: Vec<f64>, sample_rate: f64, first_time: f64, t_start: f64) -> Self {
        let times = (0..magnitudes.len())
            .map(|i| first_time + i as f64 / sample_rate)
            .collect();
        Self {
            times,
            magnitudes,
            t_start,
            sample_rate,
            clipped: false,
        }
    }

    pub fn len(&self) -> usize {
        self.magnitudes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.magnitudes.is_empty()
    }

    /// Time span covered, first to last sample.
    pub fn duration(&self) -> f64 {
        match (self.times.first(), self.times.last()) {
            (Some(a), Some(b)) => b - a,
            _ => 0.0,
        }
    }
}

/// One-sided magnitude spectrum `{f_k, x_k}`.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    frequencies: Vec<f64>,
    magnitudes: Vec<f64>,
    bin_width: f64,
}

impl Spectrum {
    /// Builds a spectrum on the uniform grid `f_k = k * bin_width`.
    pub fn uniform(magnitudes: Vec<f64>, bin_width: f64) -> Result<Self> {
        let frequencies = (0..magnitudes.len()).map(|k| k as f64 * bin_width).collect();
        Self::new(frequencies, magnitudes)
    }

    pub fn new(frequencies: Vec<f64>, magnitudes: Vec<f64>) -> Result<Self> {
        if frequencies.len() != magnitudes.len() {
            return Err(Error::InvalidInput(format!(
                "{} frequencies but {} magnitudes",
                frequencies.len(),
                magnitudes.len()
            )));
        }
        if frequencies.len() < 2 {
            return Err(Error::InvalidInput("a spectrum needs at least two bins".into()));
        }
        if let Some(m) = magnitudes.iter().find(|m| !(m.is_finite() && **m >= 0.0)) {
            return Err(Error::InvalidInput(format!("magnitude {m} is not a finite nonnegative value")));
        }
        let bin_width = frequencies[1] - frequencies[0];
        if !(bin_width > 0.0) {
            return Err(Error::InvalidInput("frequencies must increase".into()));
        }
        let tol = 1e-9 * bin_width.max(frequencies[frequencies.len() - 1].abs());
        for w in frequencies.windows(2) {
            if ((w[1] - w[0]) - bin_width).abs() > tol {
                return Err(Error::InvalidInput("frequency bins are not uniformly spaced".into()));
            }
        }
        Ok(Self {
            frequencies,
            magnitudes,
            bin_width,
        })
    }

    pub fn frequencies(&self) -> &[f64] {
        &self.frequencies
    }

    pub fn magnitudes(&self) -> &[f64] {
        &self.magnitudes
    }

    /// Constant spacing `δf` between adjacent bins.
    pub fn bin_width(&self) -> f64 {
        self.bin_width
    }

    pub fn len(&self) -> usize {
        self.magnitudes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.magnitudes.is_empty()
    }

    /// Multiplies every magnitude by `factor` (must be nonnegative).
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        Self::new(
            self.frequencies.clone(),
            self.magnitudes.iter().map(|m| m * factor).collect(),
        )
    }

    /// Sum of magnitudes over bins whose frequency falls in `[low, high]`.
    pub fn band_sum(&self, low: f64, high: f64) -> f64 {
        self.frequencies
            .iter()
            .zip(&self.magnitudes)
            .filter(|(f, _)| **f >= low && **f <= high)
            .map(|(_, m)| m)
            .sum()
    }
}

/// Region label derived from the Frequency Density of a tap.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RegionLabel {
    Normal,
    SubsurfaceObject,
}

impl RegionLabel {
    pub fn as_str(&self) -> &'static str {
        match self {
            RegionLabel::Normal => "NORMAL",
            RegionLabel::SubsurfaceObject => "SUBSURFACE_OBJECT",
        }
    }
}

impl std::fmt::Display for RegionLabel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for RegionLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "NORMAL" => Ok(RegionLabel::Normal),
            "SUBSURFACE_OBJECT" => Ok(RegionLabel::SubsurfaceObject),
            other => Err(Error::InvalidInput(format!("unknown region label {other:?}"))),
        }
    }
}

/// Pipes absorb low-band energy, so a tap whose FD falls below `threshold` is
/// flagged. A value exactly at the threshold is `Normal`.
pub fn classify_region(fd_value: f64, threshold: f64) -> RegionLabel {
    debug_assert!(threshold > 0.0, "classification threshold must be positive");
    if fd_value < threshold {
        RegionLabel::SubsurfaceObject
    } else {
        RegionLabel::Normal
    }
}
