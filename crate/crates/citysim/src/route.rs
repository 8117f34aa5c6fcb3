//! Self-avoiding routes with gold actions derived from heading deltas.

use numerics::rng::stream;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{CitySimError, Result};
use crate::graph::{norm_deg, signed_delta, NavGraph};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Action {
    Forward,
    Left,
    Right,
    Stop,
}

impl Action {
    pub fn index(self) -> usize {
        match self {
            Action::Forward => 0,
            Action::Left => 1,
            Action::Right => 2,
            Action::Stop => 3,
        }
    }

    pub fn from_index(i: usize) -> Option<Action> {
        match i {
            0 => Some(Action::Forward),
            1 => Some(Action::Left),
            2 => Some(Action::Right),
            3 => Some(Action::Stop),
            _ => None,
        }
    }
}

pub const ACTION_COUNT: usize = 4;

/// A traversal with its gold action sequence and the (node, heading)
/// perspective state at which each action is taken.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Route {
    pub nodes: Vec<usize>,
    pub start_heading: f64,
    pub actions: Vec<Action>,
    /// states[i] is the perspective when actions[i] is chosen.
    pub states: Vec<(usize, f64)>,
}

impl Route {
    pub fn edge_count(&self) -> usize {
        self.nodes.len() - 1
    }

    pub fn start(&self) -> usize {
        self.nodes[0]
    }

    pub fn goal(&self) -> usize {
        *self.nodes.last().unwrap()
    }
}

/// Bearing of the nearest outgoing edge strictly on the `ccw` (or clockwise)
/// side of `heading`, wrapping all the way round if needed.
pub fn rotate_target(graph: &NavGraph, node: usize, heading: f64, ccw: bool) -> f64 {
    let mut best: Option<(f64, f64)> = None; // (turn magnitude, bearing)
    for (_, b) in graph.outgoing(node) {
        let d = signed_delta(heading, b);
        // Map the signed delta to a strictly positive turn in the requested
        // direction; a delta of ~0 means a full revolution, not a no-op.
        let turn = if ccw { norm_deg(d) } else { norm_deg(-d) };
        let turn = if turn < 1e-9 { 360.0 } else { turn };
        if best.map_or(true, |(t, _)| turn < t) {
            best = Some((turn, b));
        }
    }
    best.expect("node has at least one edge").1
}

/// Neighbor whose edge bearing is closest to `heading`.
pub fn forward_neighbor(graph: &NavGraph, node: usize, heading: f64) -> (usize, f64) {
    let mut best: Option<(f64, usize, f64)> = None;
    for (v, b) in graph.outgoing(node) {
        let gap = signed_delta(heading, b).abs();
        if best.map_or(true, |(g, _, _)| gap < g) {
            best = Some((gap, v, b));
        }
    }
    let (_, v, b) = best.expect("node has at least one edge");
    (v, b)
}

/// Derive the gold action sequence for a node path. The walker starts
/// facing the first edge; at each node it rotates edge-by-edge toward the
/// next leg until Forward would take it there, then moves. Ends with Stop.
pub fn derive_gold(graph: &NavGraph, nodes: &[usize]) -> Result<Route> {
    if nodes.len() < 2 {
        return Err(CitySimError::Parameter("route needs at least one edge".into()));
    }
    for w in nodes.windows(2) {
        if !graph.adj[w[0]].contains(&w[1]) {
            return Err(CitySimError::Parameter(format!(
                "nodes {} and {} are not adjacent",
                w[0], w[1]
            )));
        }
    }
    let start_heading = graph.heading(nodes[0], nodes[1]);
    let mut heading = start_heading;
    let mut actions = Vec::new();
    let mut states = Vec::new();
    for i in 0..nodes.len() - 1 {
        let here = nodes[i];
        let target = nodes[i + 1];
        // Rotate until the forward edge is the target leg. Bounded by the
        // node degree; anything longer means the geometry is broken.
        let mut spins = 0;
        loop {
            let (fwd, _) = forward_neighbor(graph, here, heading);
            if fwd == target {
                states.push((here, heading));
                actions.push(Action::Forward);
                break;
            }
            let want = graph.heading(here, target);
            let ccw = signed_delta(heading, want) > 0.0;
            states.push((here, heading));
            actions.push(if ccw { Action::Left } else { Action::Right });
            heading = rotate_target(graph, here, heading, ccw);
            spins += 1;
            if spins > 4 {
                return Err(CitySimError::Generation(format!(
                    "rotation at node {} does not converge",
                    here
                )));
            }
        }
        // Arriving at the next node keeps the travel bearing.
        heading = graph.heading(here, target);
    }
    states.push((*nodes.last().unwrap(), heading));
    actions.push(Action::Stop);
    Ok(Route { nodes: nodes.to_vec(), start_heading, actions, states })
}

/// Sample a self-avoiding route with an edge count drawn from `len_range`.
pub fn sample_route(
    graph: &NavGraph,
    len_range: (usize, usize),
    seed: u64,
) -> Result<Route> {
    let (lo, hi) = len_range;
    if lo < 1 || hi < lo {
        return Err(CitySimError::Parameter(format!("bad length range [{}, {}]", lo, hi)));
    }
    if hi > graph.node_count() - 1 {
        return Err(CitySimError::Parameter(format!(
            "length {} cannot be self-avoiding on {} nodes",
            hi,
            graph.node_count()
        )));
    }
    let mut rng = stream(seed, "route", 0);
    for _attempt in 0..400 {
        let want = rng.gen_range(lo..=hi);
        let start = rng.gen_range(0..graph.node_count());
        let mut nodes = vec![start];
        let mut visited = vec![false; graph.node_count()];
        visited[start] = true;
        while nodes.len() <= want {
            let here = *nodes.last().unwrap();
            let open: Vec<usize> =
                graph.adj[here].iter().copied().filter(|&v| !visited[v]).collect();
            if open.is_empty() {
                break;
            }
            let next = open[rng.gen_range(0..open.len())];
            visited[next] = true;
            nodes.push(next);
        }
        if nodes.len() == want + 1 {
            return derive_gold(graph, &nodes);
        }
    }
    Err(CitySimError::Generation(format!(
        "no self-avoiding walk of length in [{}, {}] found",
        lo, hi
    )))
}
