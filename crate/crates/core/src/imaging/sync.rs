use nalgebra::Vector3;

use crate::error::{Error, Result};
use crate::posegraph::{SE3Transform, Trajectory};
use crate::signal::{dft, fd, psd, SignalOfInterest, Spectrum};

/// Inspection surface as a plane; `normal` points out of the slab.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurfacePlane {
    pub point: Vector3<f64>,
    pub normal: Vector3<f64>,
}

impl Default for SurfacePlane {
    fn default() -> Self {
        Self {
            point: Vector3::zeros(),
            normal: Vector3::z(),
        }
    }
}

impl SurfacePlane {
    pub fn new(point: Vector3<f64>, normal: Vector3<f64>) -> Result<Self> {
        let n = normal.norm();
        if !(n > 0.0 && n.is_finite()) {
            return Err(Error::InvalidParameter("surface normal must be nonzero".into()));
        }
        Ok(Self {
            point,
            normal: normal / n,
        })
    }

    pub fn project(&self, p: &Vector3<f64>) -> Vector3<f64> {
        p - self.normal * (p - self.point).dot(&self.normal)
    }

    /// Unit vector pointing into the slab.
    pub fn down(&self) -> Vector3<f64> {
        -self.normal
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyncConfig {
    /// How far outside the trajectory span an SOI may fall and still take
    /// the end pose, seconds.
    pub time_tolerance: f64,
    /// Movement that starts a new tap location, meters.
    pub group_radius: f64,
    /// Body-to-impactor transform applied before projecting to the surface.
    pub tap_offset: SE3Transform,
    pub surface: SurfacePlane,
}

impl Default for SyncConfig {
    fn default() -> Self {
        Self {
            time_tolerance: 0.05,
            group_radius: 0.03,
            tap_offset: SE3Transform::identity(),
            surface: SurfacePlane::default(),
        }
    }
}

/// One impact paired with where it happened: `M = (E, P)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Measurement {
    /// Position of the SOI in the detector output.
    pub soi_index: usize,
    pub acoustic: SignalOfInterest,
    pub pose: SE3Transform,
    /// Impact point on the inspection surface.
    pub tap_point: Vector3<f64>,
    pub spectrum: Spectrum,
    pub fd_value: f64,
    pub psd_value: f64,
}

/// Consecutive measurements taken at one physical location. Members index
/// into the measurement list.
#[derive(Debug, Clone, PartialEq)]
pub struct TapGroup {
    pub members: Vec<usize>,
    pub centroid: Vector3<f64>,
}

impl TapGroup {
    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    /// Group at a known point, with no measurements attached.
    pub fn at(centroid: Vector3<f64>) -> Self {
        Self {
            members: Vec::new(),
            centroid,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyncOutput {
    pub measurements: Vec<Measurement>,
    pub groups: Vec<TapGroup>,
    /// SOI indices with no pose, out of the trajectory span.
    pub unmatched: Vec<usize>,
}

fn centroid(points: &[Vector3<f64>]) -> Vector3<f64> {
    points.iter().sum::<Vector3<f64>>() / points.len() as f64
}

/// Attaches an interpolated pose to every SOI, computes its spectrum and FD,
/// and groups consecutive impacts by location.
///
/// A group is closed when the next impact lies `group_radius` or more from
/// its centroid, or when adding it would push any member that far from the
/// updated centroid.
pub fn sync_measurements(
    sois: Vec<SignalOfInterest>,
    trajectory: &Trajectory,
    config: &SyncConfig,
) -> Result<SyncOutput> {
    if !(config.group_radius > 0.0) || !(config.time_tolerance >= 0.0) {
        return Err(Error::InvalidParameter("group radius and time tolerance must be positive".into()));
    }
    let mut out = SyncOutput {
        measurements: Vec::new(),
        groups: Vec::new(),
        unmatched: Vec::new(),
    };
    let Some((first, last)) = trajectory.time_span() else {
        out.unmatched = (0..sois.len()).collect();
        return Ok(out);
    };
    for (soi_index, soi) in sois.into_iter().enumerate() {
        let t = soi.t_start;
        let pose = if t < first - config.time_tolerance || t > last + config.time_tolerance {
            None
        } else {
            trajectory.interpolate(t.clamp(first, last))
        };
        let Some(pose) = pose else {
            log::warn!("SOI {soi_index} at {t:.3} s is outside the trajectory span {first:.3}..{last:.3} s");
            out.unmatched.push(soi_index);
            continue;
        };
        let tool = pose.compose(&config.tap_offset);
        let tap_point = config.surface.project(&tool.translation);
        let spectrum = dft(&soi)?;
        out.measurements.push(Measurement {
            soi_index,
            fd_value: fd(&spectrum),
            psd_value: psd(&spectrum),
            acoustic: soi,
            pose,
            tap_point,
            spectrum,
        });
    }

    let mut points: Vec<Vector3<f64>> = Vec::new();
    let mut members: Vec<usize> = Vec::new();
    for (i, m) in out.measurements.iter().enumerate() {
        if !points.is_empty() {
            let c = centroid(&points);
            let mut trial = points.clone();
            trial.push(m.tap_point);
            let c2 = centroid(&trial);
            let fits = (m.tap_point - c).norm() < config.group_radius
                && trial.iter().all(|p| (p - c2).norm() < config.group_radius);
            if !fits {
                out.groups.push(TapGroup {
                    members: std::mem::take(&mut members),
                    centroid: c,
                });
                points.clear();
            }
        }
        points.push(m.tap_point);
        members.push(i);
    }
    if !points.is_empty() {
        out.groups.push(TapGroup {
            members,
            centroid: centroid(&points),
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::posegraph::PoseSample;

    fn soi_at(t: f64) -> SignalOfInterest {
        let x: Vec<f64> = (0..64).map(|i| ((i * 37) % 11) as f64 / 11.0).collect();
        SignalOfInterest::from_samples(x, 1000.0, t - 0.01, t)
    }

    fn trajectory(points: &[(f64, f64)]) -> Trajectory {
        Trajectory::new(
            points
                .iter()
                .map(|&(t, x)| PoseSample {
                    timestamp: t,
                    pose: SE3Transform::from_translation(Vector3::new(x, 0.0, 0.25)),
                })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn soi_on_a_sample_takes_that_pose() {
        let tr = trajectory(&[(0.0, 0.0), (1.0, 0.5), (2.0, 1.0)]);
        let out = sync_measurements(vec![soi_at(1.0)], &tr, &SyncConfig::default()).unwrap();
        let m = &out.measurements[0];
        assert_eq!(m.pose.translation, Vector3::new(0.5, 0.0, 0.25));
        assert_eq!(m.tap_point, Vector3::new(0.5, 0.0, 0.0));
        assert!(m.fd_value > 0.0 && m.psd_value > 0.0);
    }

    #[test]
    fn stationary_then_moved_gives_two_groups() {
        let tr = trajectory(&[(0.0, 0.0), (10.0, 0.0), (11.0, 0.1), (20.0, 0.1)]);
        let times = [1.0, 2.0, 3.0, 4.0, 5.0, 12.0, 13.0, 14.0];
        let sois = times.iter().map(|&t| soi_at(t)).collect();
        let out = sync_measurements(sois, &tr, &SyncConfig::default()).unwrap();
        let sizes: Vec<usize> = out.groups.iter().map(|g| g.len()).collect();
        assert_eq!(sizes, vec![5, 3]);
        assert!((out.groups[1].centroid.x - 0.1).abs() < 1e-12);
    }

    #[test]
    fn late_soi_is_unmatched() {
        let tr = trajectory(&[(0.0, 0.0), (5.0, 0.0)]);
        let out = sync_measurements(vec![soi_at(1.0), soi_at(15.0)], &tr, &SyncConfig::default()).unwrap();
        assert_eq!(out.unmatched, vec![1]);
        assert_eq!(out.measurements.len(), 1);
        // Slightly past the end is still within tolerance.
        let out = sync_measurements(vec![soi_at(5.02)], &tr, &SyncConfig::default()).unwrap();
        assert!(out.unmatched.is_empty());
    }

    #[test]
    fn slow_drift_cannot_stretch_a_group() {
        let pts: Vec<(f64, f64)> = (0..20).map(|k| (k as f64, k as f64 * 0.01)).collect();
        let tr = trajectory(&pts);
        let sois = (0..20).map(|k| soi_at(k as f64)).collect();
        let out = sync_measurements(sois, &tr, &SyncConfig::default()).unwrap();
        for g in &out.groups {
            for &i in &g.members {
                assert!((out.measurements[i].tap_point - g.centroid).norm() < 0.03);
            }
        }
        assert!(out.groups.len() > 1);
    }
}
