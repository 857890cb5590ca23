use std::collections::VecDeque;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use super::TapGroup;
use crate::error::{Error, Result};
use crate::posegraph::SE3Transform;

/// Regular score accumulator. Voxel `(i, j, k)` has its center at
/// `frame · (origin + (idx + ½) · resolution)`.
#[derive(Debug, Clone, PartialEq)]
pub struct VoxelGrid {
    origin: Vector3<f64>,
    resolution: f64,
    dims: [usize; 3],
    frame: SE3Transform,
    scores: Vec<f64>,
}

impl VoxelGrid {
    pub fn new(origin: Vector3<f64>, resolution: f64, dims: [usize; 3]) -> Result<Self> {
        if !(resolution > 0.0 && resolution.is_finite()) {
            return Err(Error::InvalidParameter(format!("voxel resolution must be positive, got {resolution}")));
        }
        if dims.iter().any(|&d| d == 0) || origin.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("grid dims must be nonzero and the origin finite".into()));
        }
        let n = dims[0]
            .checked_mul(dims[1])
            .and_then(|v| v.checked_mul(dims[2]))
            .ok_or_else(|| Error::InvalidParameter("grid is too large".into()))?;
        Ok(Self {
            origin,
            resolution,
            dims,
            frame: SE3Transform::identity(),
            scores: vec![0.0; n],
        })
    }

    /// Grid covering the box `[min, max]` at `resolution`.
    pub fn covering(min: Vector3<f64>, max: Vector3<f64>, resolution: f64) -> Result<Self> {
        if !(resolution > 0.0) {
            return Err(Error::InvalidParameter("voxel resolution must be positive".into()));
        }
        let extent = max - min;
        let dim = |e: f64| ((e / resolution) - 1e-9).ceil().max(1.0) as usize;
        Self::new(min, resolution, [dim(extent.x), dim(extent.y), dim(extent.z)])
    }

    /// Places the grid in the world with `frame` (world-from-grid).
    pub fn with_frame(mut self, frame: SE3Transform) -> Self {
        self.frame = frame;
        self
    }

    pub fn origin(&self) -> &Vector3<f64> {
        &self.origin
    }

    pub fn resolution(&self) -> f64 {
        self.resolution
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn frame(&self) -> &SE3Transform {
        &self.frame
    }

    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.dims[0] * (j + self.dims[1] * k)
    }

    pub fn coords(&self, index: usize) -> [usize; 3] {
        let i = index % self.dims[0];
        let j = (index / self.dims[0]) % self.dims[1];
        [i, j, index / (self.dims[0] * self.dims[1])]
    }

    pub fn score(&self, i: usize, j: usize, k: usize) -> f64 {
        self.scores[self.index(i, j, k)]
    }

    /// Voxel center in grid coordinates.
    pub fn local_center(&self, i: usize, j: usize, k: usize) -> Vector3<f64> {
        self.origin
            + Vector3::new(
                (i as f64 + 0.5) * self.resolution,
                (j as f64 + 0.5) * self.resolution,
                (k as f64 + 0.5) * self.resolution,
            )
    }

    /// Voxel center in world coordinates.
    pub fn center(&self, i: usize, j: usize, k: usize) -> Vector3<f64> {
        self.frame.transform_point(&self.local_center(i, j, k))
    }

    pub fn half_diagonal(&self) -> f64 {
        self.resolution * 3f64.sqrt() / 2.0
    }

    /// Same geometry with the given scores, which must be finite and
    /// nonnegative.
    pub fn with_scores(mut self, scores: Vec<f64>) -> Result<Self> {
        if scores.len() != self.scores.len() {
            return Err(Error::InvalidShape {
                expected: format!("{} scores", self.scores.len()),
                actual: format!("{} scores", scores.len()),
            });
        }
        if scores.iter().any(|s| !(s.is_finite() && *s >= 0.0)) {
            return Err(Error::InvalidInput("voxel scores must be finite and nonnegative".into()));
        }
        self.scores = scores;
        Ok(self)
    }

    /// Same geometry, all scores zero.
    pub fn cleared(&self) -> Self {
        let mut g = self.clone();
        g.scores.iter_mut().for_each(|s| *s = 0.0);
        g
    }

    pub fn max_score(&self) -> f64 {
        self.scores.iter().copied().fold(0.0, f64::max)
    }

    /// Highest-scoring voxel; ties go to the one deepest along `down`, then
    /// to the lowest index. `None` when every score is zero.
    pub fn argmax(&self, down: &Vector3<f64>) -> Option<[usize; 3]> {
        let max = self.max_score();
        if !(max > 0.0) {
            return None;
        }
        let mut best: Option<(usize, f64)> = None;
        for (idx, &s) in self.scores.iter().enumerate() {
            if s != max {
                continue;
            }
            let [i, j, k] = self.coords(idx);
            let depth = self.center(i, j, k).dot(down);
            if best.map_or(true, |(_, d)| depth > d) {
                best = Some((idx, depth));
            }
        }
        best.map(|(idx, _)| self.coords(idx))
    }

    /// Element-wise sum of two grids with identical geometry.
    pub fn add(&self, other: &Self) -> Result<Self> {
        if self.dims != other.dims || self.origin != other.origin || self.resolution != other.resolution {
            return Err(Error::InvalidShape {
                expected: format!("{:?} grid", self.dims),
                actual: format!("{:?} grid", other.dims),
            });
        }
        let mut g = self.clone();
        for (a, b) in g.scores.iter_mut().zip(&other.scores) {
            *a += b;
        }
        Ok(g)
    }
}

/// How a voxel on a shell is scored.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum ShellScoring {
    /// +1 per shell.
    Binary,
    /// `exp(-Δ² / 2σ²)` with `σ` the shell tolerance and `Δ` the distance to
    /// the exact sphere.
    Gaussian,
    /// `cos^exponent` of the angle between the tap-to-voxel ray and the
    /// inward surface normal, favouring reflectors straight below a tap.
    Incidence { exponent: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct BackProjectConfig {
    pub shell_tolerance: f64,
    pub scoring: ShellScoring,
    /// Unit vector into the slab; only voxels on this side of a tap count.
    pub down: Vector3<f64>,
}

impl Default for BackProjectConfig {
    fn default() -> Self {
        Self {
            shell_tolerance: 0.01,
            scoring: ShellScoring::Binary,
            down: -Vector3::z(),
        }
    }
}

/// Shell weight of a voxel center `v` for a tap at `c` with radius `r`, or
/// `None` when the voxel is off the shell or above the surface.
pub fn shell_weight(v: &Vector3<f64>, c: &Vector3<f64>, r: f64, config: &BackProjectConfig) -> Option<f64> {
    let d = v - c;
    let along = d.dot(&config.down);
    if along <= 0.0 {
        return None;
    }
    let dist = d.norm();
    let delta = dist - r;
    if delta.abs() > config.shell_tolerance {
        return None;
    }
    Some(match config.scoring {
        ShellScoring::Binary => 1.0,
        ShellScoring::Gaussian => {
            let s = config.shell_tolerance;
            (-(delta * delta) / (2.0 * s * s)).exp()
        }
        ShellScoring::Incidence { exponent } => (along / dist).powf(exponent),
    })
}

/// Adds one half-sphere shell per tap group to `grid`.
///
/// Group `g` contributes to every voxel whose center lies on the subsurface
/// side of its centroid and within `shell_tolerance` of the sphere of radius
/// `radii[g]` around it.
pub fn back_project(
    groups: &[TapGroup],
    radii: &[f64],
    grid: &VoxelGrid,
    config: &BackProjectConfig,
) -> Result<VoxelGrid> {
    if groups.len() != radii.len() {
        return Err(Error::InvalidShape {
            expected: format!("{} radii", groups.len()),
            actual: format!("{} radii", radii.len()),
        });
    }
    if let Some(r) = radii.iter().find(|r| !(**r > 0.0 && r.is_finite())) {
        return Err(Error::InvalidParameter(format!("radius {r} is not positive")));
    }
    if !(config.shell_tolerance > 0.0) {
        return Err(Error::InvalidParameter("shell tolerance must be positive".into()));
    }
    let n = config.down.norm();
    if !(n > 0.0) {
        return Err(Error::InvalidParameter("down direction must be nonzero".into()));
    }
    if let ShellScoring::Incidence { exponent } = config.scoring {
        if !(exponent >= 0.0) {
            return Err(Error::InvalidParameter("incidence exponent must be nonnegative".into()));
        }
    }
    let config = BackProjectConfig {
        down: config.down / n,
        ..config.clone()
    };

    let mut out = grid.clone();
    let to_grid = grid.frame.inverse();
    for (g, &r) in groups.iter().zip(radii) {
        let c = g.centroid;
        // Candidate box in grid coordinates; membership is decided on world
        // centers below, so the box only needs to be conservative.
        let local = (to_grid.transform_point(&c) - grid.origin) / grid.resolution;
        let reach = (r + config.shell_tolerance) / grid.resolution + 1.0;
        let range = |axis: usize| {
            let lo = (local[axis] - reach).floor().max(0.0) as usize;
            let hi = ((local[axis] + reach).ceil().max(0.0) as usize).min(grid.dims[axis]);
            lo..hi
        };
        for k in range(2) {
            for j in range(1) {
                for i in range(0) {
                    if let Some(w) = shell_weight(&grid.center(i, j, k), &c, r, &config) {
                        let idx = out.index(i, j, k);
                        out.scores[idx] += w;
                    }
                }
            }
        }
    }
    Ok(out)
}

/// A cluster of high-scoring voxels.
#[derive(Debug, Clone, PartialEq)]
pub struct Target {
    /// Mean of the member voxel centers.
    pub position: Vector3<f64>,
    pub peak_score: f64,
    pub voxels: usize,
}

/// Groups voxels scoring at least `fraction` of the maximum into
/// 26-connected clusters, strongest first.
pub fn extract_targets(grid: &VoxelGrid, fraction: f64) -> Result<Vec<Target>> {
    if !(0.0..=1.0).contains(&fraction) {
        return Err(Error::InvalidParameter(format!("score fraction {fraction} is outside [0, 1]")));
    }
    let max = grid.max_score();
    if !(max > 0.0) {
        return Ok(Vec::new());
    }
    let cut = fraction * max;
    let hot = |idx: usize| grid.scores[idx] > 0.0 && grid.scores[idx] >= cut;
    let [nx, ny, nz] = grid.dims;
    let mut seen = vec![false; grid.len()];
    let mut targets = Vec::new();
    for start in 0..grid.len() {
        if seen[start] || !hot(start) {
            continue;
        }
        seen[start] = true;
        let mut queue = VecDeque::from([start]);
        let mut sum = Vector3::zeros();
        let mut count = 0;
        let mut peak = 0.0_f64;
        while let Some(idx) = queue.pop_front() {
            let [i, j, k] = grid.coords(idx);
            sum += grid.center(i, j, k);
            count += 1;
            peak = peak.max(grid.scores[idx]);
            for dk in -1i64..=1 {
                for dj in -1i64..=1 {
                    for di in -1i64..=1 {
                        let (a, b, c) = (i as i64 + di, j as i64 + dj, k as i64 + dk);
                        if a < 0 || b < 0 || c < 0 || a >= nx as i64 || b >= ny as i64 || c >= nz as i64 {
                            continue;
                        }
                        let n = grid.index(a as usize, b as usize, c as usize);
                        if !seen[n] && hot(n) {
                            seen[n] = true;
                            queue.push_back(n);
                        }
                    }
                }
            }
        }
        targets.push(Target {
            position: sum / count as f64,
            peak_score: peak,
            voxels: count,
        });
    }
    targets.sort_by(|a, b| b.peak_score.total_cmp(&a.peak_score).then(b.voxels.cmp(&a.voxels)));
    Ok(targets)
}
