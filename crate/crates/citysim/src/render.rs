//! First-person perspective rasters: road ribbons plus landmark glyphs
//! inside a field-of-view cone, scaled by distance.

use numerics::Array;
use serde::{Deserialize, Serialize};

use crate::glyph::paint;
use crate::graph::{signed_delta, NavGraph};
use crate::landmarks::Landmark;

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct PerspectiveSpec {
    pub h: usize,
    pub w: usize,
    /// Half-width of the view cone, degrees.
    pub fov_half_deg: f64,
    /// Landmarks farther than this render nothing.
    pub max_dist: f64,
    /// Landmarks this close count as visible at any heading (standing at a
    /// corner you can see everything around it), though the raster only
    /// paints what the cone contains.
    pub near_radius: f64,
}

impl Default for PerspectiveSpec {
    fn default() -> Self {
        PerspectiveSpec { h: 32, w: 32, fov_half_deg: 60.0, max_dist: 90.0, near_radius: 35.0 }
    }
}

/// Indices of landmarks visible at (node, heading), nearest first: inside
/// the view cone, or within the omnidirectional near radius.
pub fn visible_landmarks(
    graph: &NavGraph,
    node: usize,
    heading: f64,
    landmarks: &[Landmark],
    spec: &PerspectiveSpec,
) -> Vec<usize> {
    let (x, y) = graph.nodes[node];
    let mut hits: Vec<(f64, usize)> = Vec::new();
    for (i, lm) in landmarks.iter().enumerate() {
        let (dx, dy) = (lm.pos.0 - x, lm.pos.1 - y);
        let dist = (dx * dx + dy * dy).sqrt();
        if dist > spec.max_dist || dist < 1e-9 {
            continue;
        }
        let bearing = dy.atan2(dx).to_degrees();
        if dist <= spec.near_radius || signed_delta(heading, bearing).abs() <= spec.fov_half_deg {
            hits.push((dist, i));
        }
    }
    hits.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    hits.into_iter().map(|(_, i)| i).collect()
}

/// Deterministic raster of the view at (node, heading): sky/ground split,
/// one road wedge per outgoing edge in the cone, then landmark glyphs
/// painted far to near.
pub fn render_perspective(
    graph: &NavGraph,
    node: usize,
    heading: f64,
    landmarks: &[Landmark],
    spec: &PerspectiveSpec,
) -> Array<f32> {
    let (h, w) = (spec.h, spec.w);
    let mut data = vec![0.0f32; 3 * h * w];
    let horizon = h / 2;
    for y in 0..h {
        for x in 0..w {
            let (r, g, b) = if y < horizon {
                let t = y as f32 / horizon as f32;
                (0.10 + 0.06 * t, 0.12 + 0.08 * t, 0.22 + 0.10 * t)
            } else {
                (0.16, 0.15, 0.14)
            };
            data[y * w + x] = r;
            data[h * w + y * w + x] = g;
            data[2 * h * w + y * w + x] = b;
        }
    }
    // Road wedges: each outgoing edge inside the cone brightens a column
    // band below the horizon, wider toward the bottom edge.
    let col_of = |delta: f64| -> f64 {
        (delta / spec.fov_half_deg * 0.5 + 0.5) * (w as f64 - 1.0)
    };
    for (_, bearing) in graph.outgoing(node) {
        let d = signed_delta(heading, bearing);
        if d.abs() > spec.fov_half_deg + 15.0 {
            continue;
        }
        let center = col_of(d);
        for y in horizon..h {
            let depth = (y - horizon) as f64 / (h - horizon) as f64;
            let half_width = 1.0 + depth * (w as f64 * 0.16);
            let x0 = ((center - half_width).floor().max(0.0)) as usize;
            let x1 = ((center + half_width).ceil().min(w as f64 - 1.0)) as usize;
            if center + half_width < 0.0 {
                continue;
            }
            for x in x0..=x1 {
                let v = 0.42 + 0.10 * depth as f32;
                for c in 0..3 {
                    let px = &mut data[c * h * w + y * w + x];
                    *px = px.max(v - 0.04 * c as f32);
                }
            }
        }
    }
    // Landmarks, far to near so closer glyphs overdraw.
    let (x, y) = graph.nodes[node];
    let mut hits: Vec<(f64, usize)> = Vec::new();
    for i in visible_landmarks(graph, node, heading, landmarks, spec) {
        let lm = &landmarks[i];
        let dist = ((lm.pos.0 - x).powi(2) + (lm.pos.1 - y).powi(2)).sqrt();
        hits.push((dist, i));
    }
    hits.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap());
    for (dist, i) in hits {
        let lm = &landmarks[i];
        let bearing = (lm.pos.1 - y).atan2(lm.pos.0 - x).to_degrees();
        let d = signed_delta(heading, bearing);
        if d.abs() > spec.fov_half_deg {
            continue;
        }
        let cx = col_of(d);
        // nearer glyphs are larger and sit lower in the frame
        let near = (1.0 - dist / spec.max_dist).clamp(0.0, 1.0);
        let r = 2.0 + near * (h as f64 * 0.16);
        let cy = horizon as f64 - 1.0 + near * (h as f64 * 0.22);
        paint(&mut data, h, w, cx, cy, r, lm.arche);
    }
    Array::new(vec![3, h, w], data).expect("perspective shape")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::glyph::{Archetype, Fill, Shape, Tint};
    use crate::graph::NavGraph;

    fn city() -> NavGraph {
        NavGraph::build(6, 6, 40.0, 6.0, 21).unwrap()
    }

    fn lm_at(pos: (f64, f64)) -> Landmark {
        Landmark {
            pos,
            arche: Archetype { shape: Shape::Circle, tint: Tint::Red, fill: Fill::Plain },
        }
    }

    #[test]
    fn rendering_is_deterministic() {
        let g = city();
        let lms = crate::landmarks::place_city_landmarks(&g, 20, 3).unwrap();
        let spec = PerspectiveSpec::default();
        let a = render_perspective(&g, 14, 90.0, &lms, &spec);
        let b = render_perspective(&g, 14, 90.0, &lms, &spec);
        assert_eq!(a.data(), b.data());
    }

    #[test]
    fn cone_gates_distant_visibility_by_bearing() {
        let g = city();
        let spec = PerspectiveSpec::default();
        let (x, y) = g.nodes[14];
        // straight ahead at heading 0 (east)
        let ahead = lm_at((x + 38.0, y));
        // 90 degrees off to the side, beyond the near radius
        let side = lm_at((x, y + 38.0));
        let lms = vec![ahead, side];
        let vis = visible_landmarks(&g, 14, 0.0, &lms, &spec);
        assert_eq!(vis, vec![0]);
        // independent geometric check: the side landmark's bearing is 90
        // degrees away, outside the 60-degree half cone, and too far for
        // the omnidirectional disk
        assert!(signed_delta(0.0, 90.0).abs() > spec.fov_half_deg);
        assert!(38.0 > spec.near_radius);
    }

    #[test]
    fn near_landmarks_are_visible_at_any_heading() {
        let g = city();
        let spec = PerspectiveSpec::default();
        let (x, y) = g.nodes[14];
        let behind = lm_at((x - 20.0, y));
        let vis = visible_landmarks(&g, 14, 0.0, &[behind.clone()], &spec);
        assert_eq!(vis, vec![0]);
        // it still does not appear in the forward-facing raster
        let without = render_perspective(&g, 14, 0.0, &[], &spec);
        let with = render_perspective(&g, 14, 0.0, &[behind], &spec);
        assert_eq!(without.data(), with.data());
    }

    #[test]
    fn opposite_headings_share_only_near_landmarks() {
        let g = city();
        let spec = PerspectiveSpec::default();
        let lms = crate::landmarks::place_city_landmarks(&g, 48, 7).unwrap();
        for node in [0, 9, 14, 27, 35] {
            let (x, y) = g.nodes[node];
            for h in [0.0, 45.0, 90.0, 210.0] {
                let a = visible_landmarks(&g, node, h, &lms, &spec);
                let b = visible_landmarks(&g, node, h + 180.0, &lms, &spec);
                for i in &a {
                    if b.contains(i) {
                        let d = ((lms[*i].pos.0 - x).powi(2) + (lms[*i].pos.1 - y).powi(2)).sqrt();
                        assert!(d <= spec.near_radius, "far landmark {} in both cones", i);
                    }
                }
            }
        }
    }

    #[test]
    fn present_landmark_changes_the_raster() {
        let g = city();
        let spec = PerspectiveSpec::default();
        let (x, y) = g.nodes[14];
        let without = render_perspective(&g, 14, 0.0, &[], &spec);
        let with = render_perspective(&g, 14, 0.0, &[lm_at((x + 30.0, y))], &spec);
        assert_ne!(without.data(), with.data());
        let off = render_perspective(&g, 14, 0.0, &[lm_at((x, y + 38.0))], &spec);
        assert_eq!(without.data(), off.data());
    }

    #[test]
    fn nearer_landmarks_paint_larger() {
        let g = city();
        let spec = PerspectiveSpec::default();
        let (x, y) = g.nodes[14];
        let near = render_perspective(&g, 14, 0.0, &[lm_at((x + 18.0, y))], &spec);
        let far = render_perspective(&g, 14, 0.0, &[lm_at((x + 70.0, y))], &spec);
        let base = render_perspective(&g, 14, 0.0, &[], &spec);
        let diff = |a: &Array<f32>| {
            a.data().iter().zip(base.data()).filter(|(p, q)| p != q).count()
        };
        assert!(diff(&near) > diff(&far) * 2, "near {} far {}", diff(&near), diff(&far));
        assert!(diff(&far) > 0);
    }
}
