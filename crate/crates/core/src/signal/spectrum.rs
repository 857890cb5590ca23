use rustfft::{num_complex::Complex64, FftPlanner};

use super::{SignalOfInterest, Spectrum};
use crate::error::{Error, Result};

/// Complex DFT bins `S(f_k) = Σ_n x(n) e^{-j2πkn/N}` of `samples` zero-padded
/// to the next power of two. All `N` bins are returned.
pub fn complex_spectrum(samples: &[f64]) -> Vec<Complex64> {
    let n = samples.len().max(1).next_power_of_two();
    let mut buf: Vec<Complex64> = samples
        .iter()
        .map(|&s| Complex64::new(s, 0.0))
        .chain(std::iter::repeat(Complex64::new(0.0, 0.0)))
        .take(n)
        .collect();
    FftPlanner::<f64>::new().plan_fft_forward(n).process(&mut buf);
    buf
}

/// One-sided magnitude spectrum of an SOI.
///
/// The SOI is zero-padded to `N = 2^⌈log2 len⌉`; bins `0..=N/2` are kept with
/// `f_k = k · sample_rate / N`.
pub fn dft(soi: &SignalOfInterest) -> Result<Spectrum> {
    if soi.is_empty() {
        return Err(Error::InvalidInput("empty signal of interest".into()));
    }
    if soi.times.len() != soi.magnitudes.len() {
        return Err(Error::InvalidInput("SOI times and magnitudes differ in length".into()));
    }
    let dt = 1.0 / soi.sample_rate;
    if let Some(w) = soi
        .times
        .windows(2)
        .find(|w| ((w[1] - w[0]) - dt).abs() > 1e-6 * dt)
    {
        return Err(Error::InvalidInput(format!(
            "non-uniform sample spacing {} s (expected {dt} s)",
            w[1] - w[0]
        )));
    }
    let bins = complex_spectrum(&soi.magnitudes);
    let n = bins.len();
    let magnitudes = bins[..=n / 2].iter().map(|c| c.norm()).collect();
    Spectrum::uniform(magnitudes, soi.sample_rate / n as f64)
}

/// Area under the magnitude spectrum, `Σ x_i δf`, with the uniform bin width
/// applied to every bin including DC.
pub fn psd(spectrum: &Spectrum) -> f64 {
    spectrum.magnitudes().iter().sum::<f64>() * spectrum.bin_width()
}

/// Frequency Density `Σ x_i f_i`: magnitude weighted by frequency, so equal
/// energy placed higher in the band scores higher.
pub fn fd(spectrum: &Spectrum) -> f64 {
    spectrum
        .frequencies()
        .iter()
        .zip(spectrum.magnitudes())
        .map(|(f, x)| f * x)
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::naive_dft_oracle;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn soi(samples: Vec<f64>, sr: f64) -> SignalOfInterest {
        SignalOfInterest::from_samples(samples, sr, 0.0, 0.0)
    }

    #[test]
    fn impulse_has_flat_spectrum() {
        let s = dft(&soi(vec![1.0, 0.0, 0.0, 0.0], 4.0)).unwrap();
        assert_eq!(s.len(), 3);
        assert!(s.magnitudes().iter().all(|m| (m - 1.0).abs() < 1e-15));
        assert_eq!(s.frequencies(), &[0.0, 1.0, 2.0]);
    }

    #[test]
    fn constant_is_dc_only() {
        let s = dft(&soi(vec![1.0; 4], 4.0)).unwrap();
        assert!((s.magnitudes()[0] - 4.0).abs() < 1e-15);
        assert!(s.magnitudes()[1..].iter().all(|m| m.abs() < 1e-15));
    }

    #[test]
    fn non_power_of_two_is_zero_padded() {
        let s = dft(&soi(vec![1.0; 5], 8.0)).unwrap();
        assert_eq!(s.len(), 5);
        assert!((s.bin_width() - 1.0).abs() < 1e-15);
        assert!((s.magnitudes()[0] - 5.0).abs() < 1e-12);
    }

    #[test]
    fn uneven_time_axis_is_rejected() {
        let mut x = soi(vec![0.1; 8], 8.0);
        x.times[3] += 0.01;
        assert!(matches!(dft(&x), Err(Error::InvalidInput(_))));
        assert!(dft(&soi(vec![], 8.0)).is_err());
    }

    #[test]
    fn fast_transform_matches_direct_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let x: Vec<f64> = (0..256).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let fast = complex_spectrum(&x);
        let slow = naive_dft_oracle(&x);
        let err = fast.iter().zip(&slow).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        assert!(err < 1e-9, "max deviation {err}");
    }

    #[test]
    fn psd_examples() {
        let zero = Spectrum::uniform(vec![0.0; 8], 1.0).unwrap();
        assert_eq!(psd(&zero), 0.0);
        let ones = Spectrum::uniform(vec![1.0; 8], 1.0).unwrap();
        assert_eq!(psd(&ones), 8.0);
        let m = vec![3.0, 1.0, 0.0, 2.0, 5.0];
        let mirrored: Vec<f64> = m.iter().rev().copied().collect();
        let a = Spectrum::uniform(m, 2.0).unwrap();
        let b = Spectrum::uniform(mirrored, 2.0).unwrap();
        assert_eq!(psd(&a), psd(&b));
    }

    #[test]
    fn fd_examples() {
        assert_eq!(fd(&Spectrum::uniform(vec![0.0; 8], 1.0).unwrap()), 0.0);
        let mut m = vec![0.0; 11];
        m[5] = 1.0;
        assert_eq!(fd(&Spectrum::uniform(m, 100.0).unwrap()), 500.0);
    }

    #[test]
    fn fd_separates_equal_psd_spectra() {
        let mut low = vec![0.0; 64];
        let mut high = vec![0.0; 64];
        low[4..8].iter_mut().for_each(|m| *m = 1.0);
        high[40..44].iter_mut().for_each(|m| *m = 1.0);
        let low = Spectrum::uniform(low, 10.0).unwrap();
        let high = Spectrum::uniform(high, 10.0).unwrap();
        assert_eq!(psd(&low), psd(&high));
        // Direct sums: low = 10·(4+5+6+7), high = 10·(40+41+42+43).
        assert_eq!(fd(&low), 220.0);
        assert_eq!(fd(&high), 1660.0);
    }

    proptest! {
        #[test]
        fn linearity_on_complex_bins(
            seed in 0u64..1000, a in -3.0f64..3.0, b in -3.0f64..3.0, n in 1usize..300,
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let x: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let y: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let combo: Vec<f64> = x.iter().zip(&y).map(|(p, q)| a * p + b * q).collect();
            let (fx, fy, fc) = (complex_spectrum(&x), complex_spectrum(&y), complex_spectrum(&combo));
            for k in 0..fc.len() {
                let expected = fx[k] * a + fy[k] * b;
                prop_assert!((fc[k] - expected).norm() < 1e-9);
            }
        }

        #[test]
        fn parseval(seed in 0u64..1000, log_n in 0u32..13) {
            let n = 1usize << log_n;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let x: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let time: f64 = x.iter().map(|v| v * v).sum();
            let freq: f64 = complex_spectrum(&x).iter().map(|c| c.norm_sqr()).sum::<f64>() / n as f64;
            prop_assert!((time - freq).abs() <= 1e-9 * time.max(1e-300));
        }

        #[test]
        fn fd_and_psd_are_homogeneous(
            mags in proptest::collection::vec(0.0f64..10.0, 2..64), alpha in 0.0f64..100.0,
        ) {
            let s = Spectrum::uniform(mags, 3.0).unwrap();
            let t = s.scaled(alpha).unwrap();
            prop_assert!((fd(&t) - alpha * fd(&s)).abs() <= 1e-9 * (1.0 + alpha * fd(&s)));
            prop_assert!((psd(&t) - alpha * psd(&s)).abs() <= 1e-9 * (1.0 + alpha * psd(&s)));
        }

        #[test]
        fn shifting_mass_upward_raises_fd(
            mags in proptest::collection::vec(0.0f64..10.0, 4..64), from in 0usize..63, amount in 0.01f64..1.0,
        ) {
            let mut m = mags.clone();
            let from = from % (m.len() - 1);
            let to = m.len() - 1;
            prop_assume!(from < to && m[from] > 0.0);
            let moved = m[from] * amount;
            m[from] -= moved;
            m[to] += moved;
            let before = Spectrum::uniform(mags, 1.0).unwrap();
            let after = Spectrum::uniform(m, 1.0).unwrap();
            prop_assert!((psd(&before) - psd(&after)).abs() < 1e-9 * psd(&before).max(1.0));
            prop_assert!(fd(&after) > fd(&before));
        }
    }
}
