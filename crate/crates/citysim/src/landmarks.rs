//! Landmark placement in the city and the standalone landmark dataset
//! (glyph image + text summary + coordinates + geo-cell).

use numerics::rng::stream;
use numerics::Array;
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{CitySimError, Result};
use crate::glyph::{paint, Archetype, ARCHETYPE_COUNT};
use crate::graph::NavGraph;
use crate::vocab::Vocab;

/// A landmark standing in the city, referenced by instructions.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Landmark {
    pub pos: (f64, f64),
    pub arche: Archetype,
}

/// Fixed square partition of a bounding box into gx * gy cells.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct CellGrid {
    pub bbox: (f64, f64, f64, f64),
    pub gx: usize,
    pub gy: usize,
}

impl CellGrid {
    pub fn new(bbox: (f64, f64, f64, f64), gx: usize, gy: usize) -> CellGrid {
        CellGrid { bbox, gx, gy }
    }

    pub fn n_cells(&self) -> usize {
        self.gx * self.gy
    }

    pub fn cell_of(&self, x: f64, y: f64) -> usize {
        let (x0, y0, x1, y1) = self.bbox;
        let fx = ((x - x0) / (x1 - x0) * self.gx as f64).floor();
        let fy = ((y - y0) / (y1 - y0) * self.gy as f64).floor();
        let cx = (fx.max(0.0) as usize).min(self.gx - 1);
        let cy = (fy.max(0.0) as usize).min(self.gy - 1);
        cy * self.gx + cx
    }

    /// Rectangle of one cell: (x0, y0, x1, y1).
    pub fn cell_rect(&self, cell: usize) -> (f64, f64, f64, f64) {
        let (x0, y0, x1, y1) = self.bbox;
        let (cw, ch) = ((x1 - x0) / self.gx as f64, (y1 - y0) / self.gy as f64);
        let (cx, cy) = (cell % self.gx, cell / self.gx);
        (
            x0 + cx as f64 * cw,
            y0 + cy as f64 * ch,
            x0 + (cx + 1) as f64 * cw,
            y0 + (cy + 1) as f64 * ch,
        )
    }
}

/// Scatter `count` landmarks beside street edges. Each landmark sits a
/// short perpendicular offset from a point along some edge, and archetypes
/// are drawn without replacement so every landmark reads as a distinct
/// phrase.
pub fn place_city_landmarks(graph: &NavGraph, count: usize, seed: u64) -> Result<Vec<Landmark>> {
    if count > ARCHETYPE_COUNT {
        return Err(CitySimError::Parameter(format!(
            "at most {} distinct landmarks, requested {}",
            ARCHETYPE_COUNT, count
        )));
    }
    let mut edges = Vec::new();
    for u in 0..graph.node_count() {
        for &v in &graph.adj[u] {
            if u < v {
                edges.push((u, v));
            }
        }
    }
    let mut rng = stream(seed, "landmarks", 0);
    let mut combos: Vec<usize> = (0..ARCHETYPE_COUNT).collect();
    combos.shuffle(&mut rng);
    // Spread landmarks over distinct edges first so bare streets are rare.
    edges.shuffle(&mut rng);
    let mut out = Vec::with_capacity(count);
    for i in 0..count {
        let (u, v) = edges[i % edges.len()];
        let (ux, uy) = graph.nodes[u];
        let (vx, vy) = graph.nodes[v];
        let t = 0.38 + rng.gen::<f64>() * 0.24;
        let (px, py) = (ux + (vx - ux) * t, uy + (vy - uy) * t);
        // unit normal to the edge
        let len = graph.distance(u, v);
        let (nx, ny) = (-(vy - uy) / len, (vx - ux) / len);
        let side = if rng.gen::<bool>() { 1.0 } else { -1.0 };
        let off = 7.0 + rng.gen::<f64>() * 4.0;
        out.push(Landmark {
            pos: (px + nx * off * side, py + ny * off * side),
            arche: Archetype::from_index(combos[i]),
        });
    }
    Ok(out)
}

/// One record of the standalone landmark dataset.
#[derive(Debug, Clone)]
pub struct LandmarkRecord {
    pub glyph: Array<f32>,
    pub tokens: Vec<u32>,
    pub pos: (f64, f64),
    pub cell: usize,
}

/// Maximum summary length; longer are truncated.
pub const SUMMARY_CAP: usize = 540;

fn summary_tokens(v: &Vocab, a: Archetype, cell: usize, rng: &mut rand_chacha::ChaCha8Rng) -> Vec<u32> {
    let [tint, fill, noun] = a.words();
    let mut toks = Vec::with_capacity(32);
    let push = |t: &mut Vec<u32>, w: &str| t.push(v.id(w));
    // First sentence carries the full identifying description and district.
    push(&mut toks, "the");
    push(&mut toks, tint);
    push(&mut toks, fill);
    push(&mut toks, noun);
    push(&mut toks, "stands");
    push(&mut toks, "in");
    push(&mut toks, "the");
    toks.push(v.district(cell));
    push(&mut toks, "quarter");
    push(&mut toks, ".");
    // Filler sentences vary per record.
    let trades = ["market", "school", "garden", "office", "bakery", "library", "museum"];
    let moods = ["busy", "quiet", "famous", "local"];
    let times = ["morning", "evening", "daily"];
    let mats = ["painted", "stone", "timber", "brick"];
    push(&mut toks, "it");
    push(&mut toks, "serves");
    push(&mut toks, "the");
    push(&mut toks, moods[rng.gen_range(0..moods.len())]);
    push(&mut toks, trades[rng.gen_range(0..trades.len())]);
    push(&mut toks, "trade");
    push(&mut toks, ".");
    push(&mut toks, "visitors");
    push(&mut toks, "note");
    push(&mut toks, "its");
    push(&mut toks, mats[rng.gen_range(0..mats.len())]);
    push(&mut toks, "front");
    push(&mut toks, times[rng.gen_range(0..times.len())]);
    push(&mut toks, ".");
    toks.truncate(SUMMARY_CAP);
    toks
}

/// Render one landmark glyph card: dark backdrop, archetype painted with
/// jittered size and position.
pub fn render_glyph_card(a: Archetype, size: usize, rng: &mut rand_chacha::ChaCha8Rng) -> Array<f32> {
    let (h, w) = (size, size);
    let mut data = vec![0.0f32; 3 * h * w];
    for y in 0..h {
        let shade = 0.06 + 0.05 * (y as f32 / h as f32);
        for x in 0..w {
            for c in 0..3 {
                data[c * h * w + y * w + x] = shade;
            }
        }
    }
    let cx = w as f64 / 2.0 + (rng.gen::<f64>() * 2.0 - 1.0) * (w as f64 * 0.08);
    let cy = h as f64 / 2.0 + (rng.gen::<f64>() * 2.0 - 1.0) * (h as f64 * 0.08);
    let r = h as f64 * (0.26 + rng.gen::<f64>() * 0.08);
    paint(&mut data, h, w, cx, cy, r, a);
    Array::new(vec![3, h, w], data).expect("glyph card shape")
}

/// Decide per-cell record counts within [lo, hi], summing to `count`.
fn cell_counts(
    n_cells: usize,
    per_cell: (usize, usize),
    count: usize,
    rng: &mut rand_chacha::ChaCha8Rng,
) -> Result<Vec<usize>> {
    let (lo, hi) = per_cell;
    if lo < 1 || hi < lo {
        return Err(CitySimError::Parameter(format!("bad per-cell range [{}, {}]", lo, hi)));
    }
    if count < n_cells * lo || count > n_cells * hi {
        return Err(CitySimError::Parameter(format!(
            "count {} infeasible for {} cells with per-cell range [{}, {}]",
            count, n_cells, lo, hi
        )));
    }
    // Draw freely, then repair toward the target sum; every repair step
    // keeps all counts inside the range.
    let mut counts: Vec<usize> = (0..n_cells).map(|_| rng.gen_range(lo..=hi)).collect();
    let mut guard = 0;
    loop {
        let sum: usize = counts.iter().sum();
        if sum == count {
            return Ok(counts);
        }
        let i = rng.gen_range(0..n_cells);
        if sum < count && counts[i] < hi {
            counts[i] += 1;
        } else if sum > count && counts[i] > lo {
            counts[i] -= 1;
        }
        guard += 1;
        if guard > 100_000 {
            return Err(CitySimError::Generation("cell count repair did not converge".into()));
        }
    }
}

/// Generate the standalone landmark dataset on a unit-square world split
/// into a fixed square grid of `n_cells` cells (must be a perfect square).
pub fn generate_landmark_dataset(
    n_cells: usize,
    per_cell: (usize, usize),
    count: usize,
    glyph_size: usize,
    seed: u64,
) -> Result<(CellGrid, Vec<LandmarkRecord>)> {
    let g = (n_cells as f64).sqrt().round() as usize;
    if g * g != n_cells || n_cells == 0 {
        return Err(CitySimError::Parameter(format!(
            "n_cells must be a positive perfect square, got {}",
            n_cells
        )));
    }
    if count < n_cells {
        return Err(CitySimError::Parameter(format!(
            "count {} must be at least n_cells {}",
            count, n_cells
        )));
    }
    let grid = CellGrid::new((0.0, 0.0, 1.0, 1.0), g, g);
    let v = Vocab::shared();
    let mut rng = stream(seed, "lm-cells", 0);
    let counts = cell_counts(n_cells, per_cell, count, &mut rng)?;
    let mut records = Vec::with_capacity(count);
    let mut idx = 0u64;
    for (cell, &n) in counts.iter().enumerate() {
        for _ in 0..n {
            let mut r = stream(seed, "lm-record", idx);
            idx += 1;
            let (x0, y0, x1, y1) = grid.cell_rect(cell);
            let pos = (
                x0 + r.gen::<f64>() * (x1 - x0),
                y0 + r.gen::<f64>() * (y1 - y0),
            );
            let arche = Archetype::from_index(r.gen_range(0..ARCHETYPE_COUNT));
            let glyph = render_glyph_card(arche, glyph_size, &mut r);
            let tokens = summary_tokens(v, arche, cell, &mut r);
            records.push(LandmarkRecord { glyph, tokens, pos, cell });
        }
    }
    Ok((grid, records))
}
