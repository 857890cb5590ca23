use std::f64::consts::PI;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::AudioTrace;

/// Shape of one synthetic impact response.
///
/// The response is a saturating strike transient, a short-lived low-frequency
/// plate mode and a longer echo ringing at `wave_speed / (2 · depth)`. A pipe
/// absorbs energy below `absorption_band_hz` and reflects less than the slab
/// bottom.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WaveConfig {
    pub sample_rate: f64,
    /// Trace length in seconds.
    pub duration: f64,
    /// Time of the strike inside the trace.
    pub onset: f64,
    pub wave_speed: f64,
    /// Half-sine strike, scaled well past full scale so the microphone clips.
    pub strike_amplitude: f64,
    pub strike_duration: f64,
    pub low_mode_hz: f64,
    pub low_mode_amplitude: f64,
    pub low_mode_tau: f64,
    pub echo_amplitude: f64,
    pub echo_tau: f64,
    pub absorption: f64,
    pub absorption_band_hz: f64,
    /// Echo gain of a pipe relative to the slab bottom, which is a full
    /// planar interface.
    pub pipe_reflectivity: f64,
    pub noise_std: f64,
}

impl Default for WaveConfig {
    fn default() -> Self {
        Self {
            sample_rate: 44100.0,
            duration: 0.5,
            onset: 0.05,
            wave_speed: 4000.0,
            strike_amplitude: 5.0,
            strike_duration: 0.004,
            low_mode_hz: 230.0,
            low_mode_amplitude: 1.0,
            low_mode_tau: 0.004,
            echo_amplitude: 0.8,
            echo_tau: 0.03,
            absorption: 0.3,
            absorption_band_hz: 500.0,
            pipe_reflectivity: 0.5,
            noise_std: 0.0,
        }
    }
}

impl WaveConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("sample_rate", self.sample_rate),
            ("duration", self.duration),
            ("wave_speed", self.wave_speed),
            ("strike_duration", self.strike_duration),
            ("low_mode_tau", self.low_mode_tau),
            ("echo_tau", self.echo_tau),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidParameter(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.noise_std >= 0.0) {
            return Err(Error::InvalidParameter("noise_std must be nonnegative".into()));
        }
        if !(self.pipe_reflectivity >= 0.0 && self.pipe_reflectivity.is_finite()) {
            return Err(Error::InvalidParameter("pipe reflectivity must be nonnegative".into()));
        }
        if !(0.0..=1.0).contains(&self.absorption) {
            return Err(Error::InvalidParameter("absorption factor must lie in [0, 1]".into()));
        }
        if !(self.onset >= 0.0 && self.onset + self.strike_duration < self.duration) {
            return Err(Error::InvalidParameter("strike must fit inside the trace".into()));
        }
        Ok(())
    }

    /// Echo frequency for a reflector at `depth`.
    pub fn echo_frequency(&self, depth: f64) -> f64 {
        self.wave_speed / (2.0 * depth)
    }

    pub fn samples(&self) -> usize {
        (self.duration * self.sample_rate).round() as usize
    }
}

/// Noise-free response before clipping, `len` samples with the strike at
/// sample 0 plus `offset` seconds.
fn clean_response(has_pipe: bool, depth: f64, config: &WaveConfig, len: usize, offset: f64) -> Vec<f64> {
    let sr = config.sample_rate;
    let f_echo = config.echo_frequency(depth);
    let mut low_amp = config.low_mode_amplitude;
    let mut echo_amp = config.echo_amplitude;
    if has_pipe {
        low_amp *= config.absorption;
        echo_amp *= config.pipe_reflectivity;
        if f_echo <= config.absorption_band_hz {
            echo_amp *= config.absorption;
        }
    }
    let t_strike = offset;
    let t_mode = offset + config.strike_duration / 2.0;
    (0..len)
        .map(|i| {
            let t = i as f64 / sr;
            let mut v = 0.0;
            let ts = t - t_strike;
            if (0.0..=config.strike_duration).contains(&ts) {
                v += config.strike_amplitude * (PI * ts / config.strike_duration).sin();
            }
            if ts >= 0.0 {
                v += echo_amp * (2.0 * PI * f_echo * ts).sin() * (-ts / config.echo_tau).exp();
            }
            let tm = t - t_mode;
            if tm >= 0.0 {
                v += low_amp * (2.0 * PI * config.low_mode_hz * tm).cos() * (-tm / config.low_mode_tau).exp();
            }
            v
        })
        .collect()
}

/// Synthetic impact response as a microphone would record it: clipped to
/// full scale, with seeded Gaussian noise.
///
/// `depth` is the reflector depth: the pipe when `has_pipe`, otherwise the
/// slab thickness.
pub fn generate_impact_wave(has_pipe: bool, depth: f64, config: &WaveConfig, seed: u64) -> Result<AudioTrace> {
    config.validate()?;
    if !(depth > 0.0 && depth.is_finite()) {
        return Err(Error::InvalidParameter(format!("reflector depth must be positive, got {depth}")));
    }
    if config.echo_frequency(depth) >= config.sample_rate / 2.0 {
        return Err(Error::InvalidParameter(format!(
            "echo at {} Hz is above the Nyquist frequency",
            config.echo_frequency(depth)
        )));
    }
    let mut samples = clean_response(has_pipe, depth, config, config.samples(), config.onset);
    if config.noise_std > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let noise = Normal::new(0.0, config.noise_std).expect("noise_std validated");
        for s in &mut samples {
            *s += noise.sample(&mut rng);
        }
    }
    for s in &mut samples {
        *s = s.clamp(-1.0, 1.0);
    }
    AudioTrace::new(samples, config.sample_rate, 0.0)
}

/// Clipped, noise-free response starting exactly at the strike, for mixing
/// into a longer stream.
pub(crate) fn impact_template(has_pipe: bool, depth: f64, config: &WaveConfig) -> Result<Vec<f64>> {
    config.validate()?;
    let len = ((config.duration - config.onset) * config.sample_rate).round() as usize;
    Ok(clean_response(has_pipe, depth, config, len, 0.0)
        .into_iter()
        .map(|s| s.clamp(-1.0, 1.0))
        .collect())
}
