use std::f64::consts::PI;

use nalgebra::Vector3;
use rustfft::num_complex::Complex64;

use crate::imaging::{TapGroup, VoxelGrid};

/// Literal `O(N²)` evaluation of `S(k) = Σ_n x(n) e^{-j2πkn/N}`, after the
/// same zero padding to a power of two as the fast path.
pub fn naive_dft_oracle(samples: &[f64]) -> Vec<Complex64> {
    let n = samples.len().max(1).next_power_of_two();
    let twiddle: Vec<Complex64> = (0..n)
        .map(|m| Complex64::from_polar(1.0, -2.0 * PI * m as f64 / n as f64))
        .collect();
    (0..n)
        .map(|k| {
            samples
                .iter()
                .enumerate()
                .map(|(i, &x)| twiddle[(k * i) % n] * x)
                .sum()
        })
        .collect()
}

/// Scores every voxel of `grid` against every group by the exact binary
/// shell test, returning a fresh grid with the same geometry.
pub fn brute_force_backproject_oracle(
    groups: &[TapGroup],
    radii: &[f64],
    grid: &VoxelGrid,
    shell_tolerance: f64,
    down: &Vector3<f64>,
) -> VoxelGrid {
    let down = down / down.norm();
    let [nx, ny, nz] = grid.dims();
    let mut scores = vec![0.0; grid.len()];
    for k in 0..nz {
        for j in 0..ny {
            for i in 0..nx {
                let v = grid.center(i, j, k);
                let mut s = 0.0;
                for (g, &r) in groups.iter().zip(radii) {
                    let d = v - g.centroid;
                    if d.dot(&down) > 0.0 && (d.norm() - r).abs() <= shell_tolerance {
                        s += 1.0;
                    }
                }
                scores[i + nx * (j + ny * k)] = s;
            }
        }
    }
    grid.cleared().with_scores(scores).expect("same geometry")
}
