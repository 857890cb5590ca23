use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use super::Measurement;
use crate::error::{Error, Result};
use crate::signal::{classify_region, RegionLabel, Spectrum};

#[derive(Debug, Clone, PartialEq)]
pub struct FdMapPoint {
    pub position: Vector3<f64>,
    pub fd: f64,
    /// Min-max normalized over the map, in `[0, 1]`.
    pub fd_normalized: f64,
    pub label: RegionLabel,
}

/// One map point per measurement, in order, at its tap point.
///
/// A single measurement, or a set whose FD values are all equal, normalizes
/// to 1.0.
pub fn register_fd_map(measurements: &[Measurement], fd_threshold: f64) -> Vec<FdMapPoint> {
    let (lo, hi) = measurements
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), m| (lo.min(m.fd_value), hi.max(m.fd_value)));
    measurements
        .iter()
        .map(|m| FdMapPoint {
            position: m.tap_point,
            fd: m.fd_value,
            fd_normalized: if hi > lo { ((m.fd_value - lo) / (hi - lo)).clamp(0.0, 1.0) } else { 1.0 },
            label: classify_region(m.fd_value, fd_threshold),
        })
        .collect()
}

/// Frequency band searched for the echo peak.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PeakBand {
    pub low_hz: f64,
    pub high_hz: f64,
}

impl Default for PeakBand {
    fn default() -> Self {
        Self {
            low_hz: 100.0,
            high_hz: 2000.0,
        }
    }
}

/// Frequency of the strongest bin inside `band`. The maximum must be
/// positive and unique.
pub fn peak_frequency(spectrum: &Spectrum, band: PeakBand) -> Result<f64> {
    if !(band.low_hz >= 0.0 && band.high_hz > band.low_hz) {
        return Err(Error::InvalidParameter("peak band must satisfy 0 <= low < high".into()));
    }
    let no_peak = Error::NoPeak {
        low_hz: band.low_hz,
        high_hz: band.high_hz,
    };
    let bins: Vec<(f64, f64)> = spectrum
        .frequencies()
        .iter()
        .zip(spectrum.magnitudes())
        .filter(|(f, _)| **f >= band.low_hz && **f <= band.high_hz)
        .map(|(f, m)| (*f, *m))
        .collect();
    let Some(&(f_peak, m_peak)) = bins.iter().max_by(|a, b| a.1.total_cmp(&b.1)) else {
        return Err(no_peak);
    };
    if !(m_peak > 0.0) || bins.iter().filter(|(_, m)| *m == m_peak).count() > 1 {
        return Err(no_peak);
    }
    Ok(f_peak)
}

/// Reflector depth from the echo peak, `r = wave_speed / (2 f_peak)`.
pub fn estimate_radius(spectrum: &Spectrum, wave_speed: f64, band: PeakBand) -> Result<f64> {
    if !(wave_speed > 0.0 && wave_speed.is_finite()) {
        return Err(Error::InvalidParameter(format!("wave speed must be positive, got {wave_speed}")));
    }
    let f = peak_frequency(spectrum, band)?;
    Ok(wave_speed / (2.0 * f))
}

/// Depth uncertainty caused by one spectral bin around `radius`.
pub fn radius_bin_tolerance(radius: f64, wave_speed: f64, bin_width: f64) -> f64 {
    let f = wave_speed / (2.0 * radius);
    (wave_speed / (2.0 * (f - bin_width).max(bin_width)) - radius).abs()
}
