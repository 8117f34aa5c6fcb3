//! Jittered-lattice street graph with heading geometry.

use numerics::rng::stream;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{CitySimError, Result};

/// Angle normalized to [0, 360). 0 points along +x, angles grow
/// counterclockwise.
pub fn norm_deg(a: f64) -> f64 {
    let r = a.rem_euclid(360.0);
    if r == 360.0 {
        0.0
    } else {
        r
    }
}

/// Shortest signed rotation taking bearing `from` to bearing `to`,
/// in (-180, 180].
pub fn signed_delta(from: f64, to: f64) -> f64 {
    let d = norm_deg(to - from);
    if d > 180.0 {
        d - 360.0
    } else {
        d
    }
}

/// Undirected street graph. Node ids are indices into `nodes`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NavGraph {
    pub rows: usize,
    pub cols: usize,
    /// Planar coordinates per node.
    pub nodes: Vec<(f64, f64)>,
    /// Sorted neighbor lists; (u, v) appears in both directions.
    pub adj: Vec<Vec<usize>>,
    /// (min_x, min_y, max_x, max_y)
    pub bbox: (f64, f64, f64, f64),
}

impl NavGraph {
    /// Lay out rows x cols nodes on a lattice with per-node jitter and wire
    /// 4-neighbor edges. Jitter must stay below spacing/2 so edge headings
    /// at a node remain separable.
    pub fn build(rows: usize, cols: usize, spacing: f64, perturb: f64, seed: u64) -> Result<Self> {
        if rows < 2 || cols < 2 {
            return Err(CitySimError::Parameter(format!(
                "grid must be at least 2x2, got {}x{}",
                rows, cols
            )));
        }
        if !(spacing > 0.0) || perturb < 0.0 {
            return Err(CitySimError::Parameter(format!(
                "spacing {} and perturb {} must be positive",
                spacing, perturb
            )));
        }
        if perturb >= spacing / 2.0 {
            return Err(CitySimError::Parameter(format!(
                "perturb {} must stay below spacing/2 = {}",
                perturb,
                spacing / 2.0
            )));
        }
        let mut nodes = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                let mut rng = stream(seed, "node", (r * cols + c) as u64);
                let jx = (rng.gen::<f64>() * 2.0 - 1.0) * perturb;
                let jy = (rng.gen::<f64>() * 2.0 - 1.0) * perturb;
                nodes.push((c as f64 * spacing + jx, r as f64 * spacing + jy));
            }
        }
        let mut adj = vec![Vec::new(); rows * cols];
        let id = |r: usize, c: usize| r * cols + c;
        for r in 0..rows {
            for c in 0..cols {
                if c + 1 < cols {
                    adj[id(r, c)].push(id(r, c + 1));
                    adj[id(r, c + 1)].push(id(r, c));
                }
                if r + 1 < rows {
                    adj[id(r, c)].push(id(r + 1, c));
                    adj[id(r + 1, c)].push(id(r, c));
                }
            }
        }
        for list in &mut adj {
            list.sort_unstable();
        }
        let bbox = bounding_box(&nodes);
        Ok(NavGraph { rows, cols, nodes, adj, bbox })
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.adj.iter().map(|l| l.len()).sum::<usize>() / 2
    }

    /// Bearing of the edge from `u` toward `v` in degrees.
    pub fn heading(&self, u: usize, v: usize) -> f64 {
        let (ux, uy) = self.nodes[u];
        let (vx, vy) = self.nodes[v];
        norm_deg((vy - uy).atan2(vx - ux).to_degrees())
    }

    /// Outgoing (neighbor, bearing) pairs at `u`.
    pub fn outgoing(&self, u: usize) -> Vec<(usize, f64)> {
        self.adj[u].iter().map(|&v| (v, self.heading(u, v))).collect()
    }

    pub fn distance(&self, u: usize, v: usize) -> f64 {
        let (ux, uy) = self.nodes[u];
        let (vx, vy) = self.nodes[v];
        ((vx - ux).powi(2) + (vy - uy).powi(2)).sqrt()
    }

    /// Hop distances from `src` to every node, by breadth-first search.
    pub fn bfs_dist(&self, src: usize) -> Vec<usize> {
        let mut dist = vec![usize::MAX; self.node_count()];
        let mut queue = std::collections::VecDeque::new();
        dist[src] = 0;
        queue.push_back(src);
        while let Some(u) = queue.pop_front() {
            for &v in &self.adj[u] {
                if dist[v] == usize::MAX {
                    dist[v] = dist[u] + 1;
                    queue.push_back(v);
                }
            }
        }
        dist
    }

    pub fn shortest_path_len(&self, u: usize, v: usize) -> usize {
        self.bfs_dist(u)[v]
    }
}

pub fn bounding_box(points: &[(f64, f64)]) -> (f64, f64, f64, f64) {
    let mut b = (f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
    for &(x, y) in points {
        b.0 = b.0.min(x);
        b.1 = b.1.min(y);
        b.2 = b.2.max(x);
        b.3 = b.3.max(y);
    }
    b
}
