//! Pose trajectory CSV and text graph files.
//!
//! Trajectory rows are `timestamp,x,y,z,qw,qx,qy,qz`. Graph files hold
//! `VERTEX id x y z qw qx qy qz` and
//! `EDGE i j x y z qw qx qy qz [21 information entries]` lines, the
//! information matrix given as its upper triangle row by row (identity when
//! omitted). Blank lines and `#` comments are ignored.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use nalgebra::{Matrix6, Vector3};
use serde::{Deserialize, Serialize};

use super::{PoseGraph, SE3Transform};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoseSample {
    pub timestamp: f64,
    pub pose: SE3Transform,
}

/// Time-ordered poses with strictly increasing timestamps.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Trajectory {
    samples: Vec<PoseSample>,
}

impl Trajectory {
    pub fn new(samples: Vec<PoseSample>) -> Result<Self> {
        if let Some(i) = samples.iter().position(|s| !s.timestamp.is_finite()) {
            return Err(Error::MalformedRecord {
                index: i,
                message: "non-finite timestamp".into(),
            });
        }
        if let Some(i) = samples.windows(2).position(|w| w[1].timestamp <= w[0].timestamp) {
            return Err(Error::MalformedRecord {
                index: i + 1,
                message: format!(
                    "timestamp {} does not follow {}",
                    samples[i + 1].timestamp,
                    samples[i].timestamp
                ),
            });
        }
        Ok(Self { samples })
    }

    pub fn samples(&self) -> &[PoseSample] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn time_span(&self) -> Option<(f64, f64)> {
        Some((self.samples.first()?.timestamp, self.samples.last()?.timestamp))
    }

    /// Pose at `t`: linear in translation, slerp in rotation. `None` outside
    /// the recorded span.
    pub fn interpolate(&self, t: f64) -> Option<SE3Transform> {
        let (first, last) = self.time_span()?;
        if !(t >= first && t <= last) {
            return None;
        }
        let k = self.samples.partition_point(|s| s.timestamp <= t);
        if k == self.samples.len() {
            return Some(self.samples[k - 1].pose);
        }
        let (a, b) = (&self.samples[k - 1], &self.samples[k]);
        let s = (t - a.timestamp) / (b.timestamp - a.timestamp);
        Some(a.pose.interpolate(&b.pose, s))
    }

    /// Sample whose timestamp is closest to `t`.
    pub fn nearest(&self, t: f64) -> Option<&PoseSample> {
        let k = self.samples.partition_point(|s| s.timestamp < t);
        let candidates = [k.checked_sub(1), (k < self.samples.len()).then_some(k)];
        candidates
            .into_iter()
            .flatten()
            .map(|i| &self.samples[i])
            .min_by(|a, b| (a.timestamp - t).abs().total_cmp(&(b.timestamp - t).abs()))
    }

    /// Keyframe poses of a graph, in vertex order.
    pub fn from_graph(graph: &PoseGraph) -> Result<Self> {
        Self::new(
            graph
                .vertices()
                .iter()
                .map(|k| PoseSample {
                    timestamp: k.timestamp,
                    pose: k.pose,
                })
                .collect(),
        )
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct PoseRow {
    timestamp: f64,
    x: f64,
    y: f64,
    z: f64,
    qw: f64,
    qx: f64,
    qy: f64,
    qz: f64,
}

fn with_path(path: &Path, e: Error) -> Error {
    match e {
        Error::MalformedRecord { index, message } => Error::format(path, format!("record {index}: {message}")),
        other => other,
    }
}

pub fn read_trajectory_from<R: Read>(reader: R) -> Result<Trajectory> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers().map_err(|e| Error::MalformedRecord {
        index: 0,
        message: e.to_string(),
    })?;
    let expected = ["timestamp", "x", "y", "z", "qw", "qx", "qy", "qz"];
    if headers.iter().ne(expected.iter().copied()) {
        return Err(Error::MalformedRecord {
            index: 0,
            message: format!("expected header {}", expected.join(",")),
        });
    }
    let mut samples = Vec::new();
    for (i, row) in rdr.deserialize::<PoseRow>().enumerate() {
        let row = row.map_err(|e| Error::MalformedRecord {
            index: i + 1,
            message: e.to_string(),
        })?;
        let pose = SE3Transform::from_quaternion(row.qw, row.qx, row.qy, row.qz, Vector3::new(row.x, row.y, row.z))
            .map_err(|e| Error::MalformedRecord {
                index: i + 1,
                message: e.to_string(),
            })?;
        samples.push(PoseSample {
            timestamp: row.timestamp,
            pose,
        });
    }
    Trajectory::new(samples).map_err(|e| match e {
        Error::MalformedRecord { index, message } => Error::MalformedRecord {
            index: index + 1,
            message,
        },
        other => other,
    })
}

pub fn read_trajectory(path: &Path) -> Result<Trajectory> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_trajectory_from(BufReader::new(file)).map_err(|e| with_path(path, e))
}

pub fn write_trajectory_to<W: Write>(writer: W, trajectory: &Trajectory) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    for s in trajectory.samples() {
        let q = s.pose.quaternion();
        let t = s.pose.translation;
        wtr.serialize(PoseRow {
            timestamp: s.timestamp,
            x: t.x,
            y: t.y,
            z: t.z,
            qw: q.w,
            qx: q.i,
            qy: q.j,
            qz: q.k,
        })
        .map_err(|e| Error::InvalidInput(e.to_string()))?;
    }
    wtr.flush().map_err(|e| Error::InvalidInput(e.to_string()))
}

pub fn write_trajectory(path: &Path, trajectory: &Trajectory) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_trajectory_to(BufWriter::new(file), trajectory)
}

fn parse_numbers(fields: &[&str], index: usize) -> Result<Vec<f64>> {
    fields
        .iter()
        .map(|f| {
            f.parse::<f64>().map_err(|_| Error::MalformedRecord {
                index,
                message: format!("not a number: {f:?}"),
            })
        })
        .collect()
}

fn parse_pose(v: &[f64], index: usize) -> Result<SE3Transform> {
    SE3Transform::from_quaternion(v[3], v[4], v[5], v[6], Vector3::new(v[0], v[1], v[2])).map_err(|e| {
        Error::MalformedRecord {
            index,
            message: e.to_string(),
        }
    })
}

fn parse_id(s: &str, index: usize) -> Result<usize> {
    s.parse().map_err(|_| Error::MalformedRecord {
        index,
        message: format!("bad vertex id {s:?}"),
    })
}

/// Parses a graph file. Vertices get their id as timestamp, since the format
/// carries none.
pub fn read_graph_from<R: BufRead>(reader: R) -> Result<PoseGraph> {
    let mut graph = PoseGraph::new();
    for (lineno, line) in reader.lines().enumerate() {
        let index = lineno + 1;
        let line = line.map_err(|e| Error::MalformedRecord {
            index,
            message: e.to_string(),
        })?;
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        let wrap = |e: Error| match e {
            Error::MalformedRecord { .. } => e,
            other => Error::MalformedRecord {
                index,
                message: other.to_string(),
            },
        };
        match fields[0] {
            "VERTEX" if fields.len() == 9 => {
                let id = parse_id(fields[1], index)?;
                let v = parse_numbers(&fields[2..], index)?;
                graph.add_vertex(id, parse_pose(&v, index)?, id as f64).map_err(wrap)?;
            }
            "EDGE" if fields.len() == 10 || fields.len() == 31 => {
                let (i, j) = (parse_id(fields[1], index)?, parse_id(fields[2], index)?);
                let v = parse_numbers(&fields[3..], index)?;
                let measured = parse_pose(&v, index)?;
                let mut info = Matrix6::identity();
                if v.len() == 28 {
                    let mut k = 7;
                    for r in 0..6 {
                        for c in r..6 {
                            info[(r, c)] = v[k];
                            info[(c, r)] = v[k];
                            k += 1;
                        }
                    }
                }
                graph.add_edge(i, j, measured, info).map_err(wrap)?;
            }
            tag => {
                return Err(Error::MalformedRecord {
                    index,
                    message: format!("unrecognised {tag} line with {} fields", fields.len()),
                })
            }
        }
    }
    Ok(graph)
}

pub fn read_graph(path: &Path) -> Result<PoseGraph> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_graph_from(BufReader::new(file)).map_err(|e| with_path(path, e))
}

fn pose_fields(p: &SE3Transform) -> String {
    let q = p.quaternion();
    let t = p.translation;
    format!("{} {} {} {} {} {} {}", t.x, t.y, t.z, q.w, q.i, q.j, q.k)
}

pub fn write_graph_to<W: Write>(mut w: W, graph: &PoseGraph) -> std::io::Result<()> {
    for k in graph.vertices() {
        writeln!(w, "VERTEX {} {}", k.id, pose_fields(&k.pose))?;
    }
    for e in graph.edges() {
        write!(w, "EDGE {} {} {}", e.from, e.to, pose_fields(&e.measured))?;
        for r in 0..6 {
            for c in r..6 {
                write!(w, " {}", e.information[(r, c)])?;
            }
        }
        writeln!(w)?;
    }
    w.flush()
}

pub fn write_graph(path: &Path, graph: &PoseGraph) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_graph_to(BufWriter::new(file), graph).map_err(|e| Error::io(path, e))
}
