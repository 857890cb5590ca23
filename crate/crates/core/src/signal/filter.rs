use std::f64::consts::PI;

use rustfft::{num_complex::Complex64, FftPlanner};

use super::AudioTrace;
use crate::error::{Error, Result};

/// Impact echoes of interest live below this frequency.
pub const DEFAULT_CUTOFF_HZ: f64 = 2000.0;

/// Hamming-windowed sinc low-pass kernel with unit DC gain.
///
/// The length is `ceil(4 * sample_rate / cutoff)`, bumped to the next odd
/// number so the kernel has an integer group delay.
pub fn lowpass_kernel(sample_rate: f64, cutoff: f64) -> Result<Vec<f64>> {
    if !(cutoff > 0.0) || cutoff >= sample_rate / 2.0 {
        return Err(Error::InvalidParameter(format!(
            "cutoff {cutoff} Hz must lie in (0, {}) for sample rate {sample_rate} Hz",
            sample_rate / 2.0
        )));
    }
    let mut taps = (4.0 * sample_rate / cutoff).ceil() as usize;
    if taps % 2 == 0 {
        taps += 1;
    }
    let fc = cutoff / sample_rate;
    let mid = (taps / 2) as f64;
    let mut kernel: Vec<f64> = (0..taps)
        .map(|k| {
            let x = k as f64 - mid;
            let sinc = if x == 0.0 {
                2.0 * fc
            } else {
                (2.0 * PI * fc * x).sin() / (PI * x)
            };
            let window = 0.54 - 0.46 * (2.0 * PI * k as f64 / (taps - 1) as f64).cos();
            sinc * window
        })
        .collect();
    let gain: f64 = kernel.iter().sum();
    kernel.iter_mut().for_each(|h| *h /= gain);
    Ok(kernel)
}

/// Zero-phase FIR low-pass filter.
///
/// The symmetric kernel is applied with its group delay removed, so output
/// sample `n` is `sum_k h[k] * x[n + M - k]` with `M = (len - 1) / 2` and the
/// input taken as zero outside the trace. The convolution runs as FFT
/// overlap-add. Output saturates at full scale.
pub fn low_pass_filter(trace: &AudioTrace, cutoff: f64) -> Result<AudioTrace> {
    let kernel = lowpass_kernel(trace.sample_rate(), cutoff)?;
    let filtered = fft_convolve_centered(trace.samples(), &kernel);
    let samples = filtered.into_iter().map(|s| s.clamp(-1.0, 1.0)).collect();
    AudioTrace::new(samples, trace.sample_rate(), trace.start_time())
}

fn fft_convolve_centered(input: &[f64], kernel: &[f64]) -> Vec<f64> {
    let taps = kernel.len();
    let delay = taps / 2;
    let fft_len = (4 * taps).max(4096).next_power_of_two();
    let block = fft_len - taps + 1;

    let mut planner = FftPlanner::<f64>::new();
    let forward = planner.plan_fft_forward(fft_len);
    let inverse = planner.plan_fft_inverse(fft_len);

    let mut kernel_spec: Vec<Complex64> = kernel
        .iter()
        .map(|&h| Complex64::new(h, 0.0))
        .chain(std::iter::repeat(Complex64::new(0.0, 0.0)))
        .take(fft_len)
        .collect();
    forward.process(&mut kernel_spec);

    // Full linear convolution, length input + taps - 1.
    let full_len = input.len() + taps - 1;
    let mut full = vec![0.0; full_len];
    let mut buf = vec![Complex64::new(0.0, 0.0); fft_len];
    let scale = 1.0 / fft_len as f64;
    for (b, chunk) in input.chunks(block).enumerate() {
        buf.iter_mut().for_each(|c| *c = Complex64::new(0.0, 0.0));
        for (dst, &x) in buf.iter_mut().zip(chunk) {
            dst.re = x;
        }
        forward.process(&mut buf);
        for (c, h) in buf.iter_mut().zip(&kernel_spec) {
            *c *= h;
        }
        inverse.process(&mut buf);
        let offset = b * block;
        let valid = (chunk.len() + taps - 1).min(full_len - offset);
        for (dst, c) in full[offset..offset + valid].iter_mut().zip(&buf) {
            *dst += c.re * scale;
        }
    }
    full.drain(..delay);
    full.truncate(input.len());
    full
}
