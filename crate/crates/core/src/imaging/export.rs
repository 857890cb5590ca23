use std::io::Write;

use serde::{Deserialize, Serialize};

use super::{FdMapPoint, Target, VoxelGrid};
use crate::error::{Error, Result};

fn io_err(e: std::io::Error) -> Error {
    Error::InvalidInput(format!("write failed: {e}"))
}

fn gray(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// `x,y,z,fd,fd_normalized,label`, one row per point.
pub fn write_fd_map_csv<W: Write>(out: W, points: &[FdMapPoint]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let csv_err = |e: csv::Error| Error::InvalidInput(e.to_string());
    w.write_record(["x", "y", "z", "fd", "fd_normalized", "label"]).map_err(csv_err)?;
    for p in points {
        w.write_record([
            p.position.x.to_string(),
            p.position.y.to_string(),
            p.position.z.to_string(),
            p.fd.to_string(),
            p.fd_normalized.to_string(),
            p.label.to_string(),
        ])
        .map_err(csv_err)?;
    }
    w.flush().map_err(io_err)
}

/// ASCII PLY point cloud; intensity runs dark to white with normalized FD.
pub fn write_fd_map_ply<W: Write>(mut out: W, points: &[FdMapPoint]) -> Result<()> {
    write!(
        out,
        "ply\nformat ascii 1.0\nelement vertex {}\nproperty double x\nproperty double y\nproperty double z\n\
         property double fd\nproperty uchar red\nproperty uchar green\nproperty uchar blue\nend_header\n",
        points.len()
    )
    .map_err(io_err)?;
    for p in points {
        let g = gray(p.fd_normalized);
        writeln!(out, "{} {} {} {} {g} {g} {g}", p.position.x, p.position.y, p.position.z, p.fd).map_err(io_err)?;
    }
    out.flush().map_err(io_err)
}

/// PLY of every voxel scoring at least `fraction` of the maximum.
pub fn write_voxel_ply<W: Write>(mut out: W, grid: &VoxelGrid, fraction: f64) -> Result<()> {
    let max = grid.max_score();
    let keep: Vec<usize> = if max > 0.0 {
        (0..grid.len())
            .filter(|&i| grid.scores()[i] > 0.0 && grid.scores()[i] >= fraction * max)
            .collect()
    } else {
        Vec::new()
    };
    write!(
        out,
        "ply\nformat ascii 1.0\nelement vertex {}\nproperty double x\nproperty double y\nproperty double z\n\
         property double score\nproperty uchar red\nproperty uchar green\nproperty uchar blue\nend_header\n",
        keep.len()
    )
    .map_err(io_err)?;
    for idx in keep {
        let [i, j, k] = grid.coords(idx);
        let c = grid.center(i, j, k);
        let s = grid.scores()[idx];
        let g = gray(s / max);
        writeln!(out, "{} {} {} {s} {g} {g} {g}", c.x, c.y, c.z).map_err(io_err)?;
    }
    out.flush().map_err(io_err)
}

/// Geometry of an exported voxel grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VoxelMetadata {
    pub origin: [f64; 3],
    pub resolution: f64,
    pub dims: [usize; 3],
    /// World-from-grid rotation, row-major.
    pub frame_rotation: [[f64; 3]; 3],
    pub frame_translation: [f64; 3],
    pub max_score: f64,
    pub export_fraction: f64,
}

impl VoxelMetadata {
    pub fn of(grid: &VoxelGrid, export_fraction: f64) -> Self {
        let r = grid.frame().rotation;
        let t = grid.frame().translation;
        Self {
            origin: [grid.origin().x, grid.origin().y, grid.origin().z],
            resolution: grid.resolution(),
            dims: grid.dims(),
            frame_rotation: [
                [r[(0, 0)], r[(0, 1)], r[(0, 2)]],
                [r[(1, 0)], r[(1, 1)], r[(1, 2)]],
                [r[(2, 0)], r[(2, 1)], r[(2, 2)]],
            ],
            frame_translation: [t.x, t.y, t.z],
            max_score: grid.max_score(),
            export_fraction,
        }
    }
}

/// `x,y,z,peak_score,voxels`, one row per target.
pub fn write_targets_csv<W: Write>(out: W, targets: &[Target]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let csv_err = |e: csv::Error| Error::InvalidInput(e.to_string());
    w.write_record(["x", "y", "z", "peak_score", "voxels"]).map_err(csv_err)?;
    for t in targets {
        w.write_record([
            t.position.x.to_string(),
            t.position.y.to_string(),
            t.position.z.to_string(),
            t.peak_score.to_string(),
            t.voxels.to_string(),
        ])
        .map_err(csv_err)?;
    }
    w.flush().map_err(io_err)
}
