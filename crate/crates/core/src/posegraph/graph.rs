use std::collections::VecDeque;

use nalgebra::Matrix6;

use super::SE3Transform;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Keyframe {
    pub id: usize,
    /// World-from-keyframe.
    pub pose: SE3Transform,
    pub timestamp: f64,
}

/// Relative-pose constraint: `measured ≈ pose(from)⁻¹ · pose(to)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Edge {
    pub from: usize,
    pub to: usize,
    pub measured: SE3Transform,
    pub information: Matrix6<f64>,
}

/// Keyframes plus relative-transform edges. Vertex ids are strictly
/// increasing in insertion order; edges refer to vertex ids.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PoseGraph {
    vertices: Vec<Keyframe>,
    edges: Vec<Edge>,
}

impl PoseGraph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn vertices(&self) -> &[Keyframe] {
        &self.vertices
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    pub fn index_of(&self, id: usize) -> Option<usize> {
        self.vertices.binary_search_by_key(&id, |k| k.id).ok()
    }

    pub fn poses(&self) -> Vec<SE3Transform> {
        self.vertices.iter().map(|k| k.pose).collect()
    }

    /// Replaces every vertex pose, keeping ids and timestamps.
    pub fn with_poses(&self, poses: &[SE3Transform]) -> Result<Self> {
        if poses.len() != self.vertices.len() {
            return Err(Error::InvalidShape {
                expected: format!("{} poses", self.vertices.len()),
                actual: format!("{} poses", poses.len()),
            });
        }
        let mut out = self.clone();
        for (k, p) in out.vertices.iter_mut().zip(poses) {
            k.pose = *p;
        }
        Ok(out)
    }

    pub fn add_vertex(&mut self, id: usize, pose: SE3Transform, timestamp: f64) -> Result<()> {
        if !timestamp.is_finite() {
            return Err(Error::InvalidInput("keyframe timestamp must be finite".into()));
        }
        if !pose.is_valid(1e-6) {
            return Err(Error::InvalidInput(format!("keyframe {id} pose is not a rigid transform")));
        }
        if let Some(last) = self.vertices.last() {
            if id <= last.id {
                return Err(Error::InvalidInput(format!(
                    "keyframe id {id} does not follow {}",
                    last.id
                )));
            }
            if timestamp < last.timestamp {
                return Err(Error::InvalidInput(format!(
                    "keyframe {id} timestamp {timestamp} precedes {}",
                    last.timestamp
                )));
            }
        }
        self.vertices.push(Keyframe { id, pose, timestamp });
        Ok(())
    }

    /// Appends a vertex with the next free id.
    pub fn push_vertex(&mut self, pose: SE3Transform, timestamp: f64) -> Result<usize> {
        let id = self.vertices.last().map_or(0, |k| k.id + 1);
        self.add_vertex(id, pose, timestamp)?;
        Ok(id)
    }

    pub fn add_edge(&mut self, from: usize, to: usize, measured: SE3Transform, information: Matrix6<f64>) -> Result<()> {
        for id in [from, to] {
            if self.index_of(id).is_none() {
                return Err(Error::InvalidInput(format!("edge references unknown vertex {id}")));
            }
        }
        if from == to {
            return Err(Error::InvalidInput(format!("self edge on vertex {from}")));
        }
        if (information - information.transpose()).abs().max() > 1e-9 * information.abs().max().max(1.0)
            || information.cholesky().is_none()
        {
            return Err(Error::InvalidInput(format!(
                "edge {from}->{to} information matrix is not symmetric positive-definite"
            )));
        }
        self.edges.push(Edge {
            from,
            to,
            measured,
            information,
        });
        Ok(())
    }

    /// Edge whose measurement is the current relative pose, identity information.
    pub fn add_odometry_edge(&mut self, from: usize, to: usize) -> Result<()> {
        let (a, b) = match (self.index_of(from), self.index_of(to)) {
            (Some(a), Some(b)) => (a, b),
            _ => return Err(Error::InvalidInput(format!("no vertex pair {from}, {to}"))),
        };
        let rel = self.vertices[a].pose.inverse().compose(&self.vertices[b].pose);
        self.add_edge(from, to, rel, Matrix6::identity())
    }

    /// Inserts `pose` when it moved more than `motion_threshold` (meters, or
    /// radians of rotation) away from the last keyframe; the first pose is
    /// always kept. A new keyframe is chained to its predecessor by an
    /// odometry edge.
    pub fn add_keyframe(&mut self, pose: SE3Transform, timestamp: f64, motion_threshold: f64) -> Result<bool> {
        if !(motion_threshold > 0.0) {
            return Err(Error::InvalidParameter("motion threshold must be positive".into()));
        }
        let Some(last) = self.vertices.last() else {
            self.push_vertex(pose, timestamp)?;
            return Ok(true);
        };
        let rel = last.pose.inverse().compose(&pose);
        if rel.translation.norm() <= motion_threshold && rel.angle() <= motion_threshold {
            return Ok(false);
        }
        let prev = last.id;
        let id = self.push_vertex(pose, timestamp)?;
        self.add_odometry_edge(prev, id)?;
        Ok(true)
    }

    /// Whether every vertex is reachable from the first over undirected edges.
    pub fn is_connected(&self) -> bool {
        let n = self.vertices.len();
        if n <= 1 {
            return true;
        }
        let mut adj = vec![Vec::new(); n];
        for e in &self.edges {
            if let (Some(a), Some(b)) = (self.index_of(e.from), self.index_of(e.to)) {
                adj[a].push(b);
                adj[b].push(a);
            }
        }
        let mut seen = vec![false; n];
        seen[0] = true;
        let mut queue = VecDeque::from([0]);
        while let Some(v) = queue.pop_front() {
            for &w in &adj[v] {
                if !seen[w] {
                    seen[w] = true;
                    queue.push_back(w);
                }
            }
        }
        seen.into_iter().all(|s| s)
    }
}
