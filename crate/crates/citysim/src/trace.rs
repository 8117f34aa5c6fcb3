//! Path traces: a route's node polyline drawn on a fixed city-frame canvas,
//! labelled by step count.

use numerics::Array;
use serde::{Deserialize, Serialize};

use crate::error::{CitySimError, Result};
use crate::graph::NavGraph;
use crate::route::Route;

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct TraceSpec {
    pub h: usize,
    pub w: usize,
    /// Blank border in pixels around the projected city bounding box.
    pub margin: f64,
    /// Step-count labels are clamped to 1..=m_classes.
    pub m_classes: usize,
}

impl Default for TraceSpec {
    fn default() -> Self {
        TraceSpec { h: 64, w: 64, margin: 4.0, m_classes: 16 }
    }
}

#[derive(Debug, Clone)]
pub struct PathTrace {
    /// [1, h, w] grayscale, ink in [0,1].
    pub image: Array<f32>,
    /// Step count clamped to 1..=m_classes.
    pub label: usize,
}

/// Map city coordinates into canvas pixels. The frame is the whole city
/// bounding box, not the route's own extent, so longer routes lay down
/// more ink.
fn projector(graph: &NavGraph, spec: &TraceSpec) -> impl Fn(f64, f64) -> (f64, f64) {
    let (x0, y0, x1, y1) = graph.bbox;
    let (h, w, m) = (spec.h as f64, spec.w as f64, spec.margin);
    let sx = (w - 2.0 * m) / (x1 - x0);
    let sy = (h - 2.0 * m) / (y1 - y0);
    move |x: f64, y: f64| (m + (x - x0) * sx, m + (y - y0) * sy)
}

/// Splat a point with bilinear weights, accumulating and clamping to 1.
fn splat(data: &mut [f32], h: usize, w: usize, x: f64, y: f64, amount: f32) {
    let (xf, yf) = (x.floor(), y.floor());
    let (fx, fy) = ((x - xf) as f32, (y - yf) as f32);
    let (xi, yi) = (xf as isize, yf as isize);
    let mut put = |xx: isize, yy: isize, wgt: f32| {
        if xx >= 0 && yy >= 0 && (xx as usize) < w && (yy as usize) < h {
            let px = &mut data[yy as usize * w + xx as usize];
            *px = (*px + amount * wgt).min(1.0);
        }
    };
    put(xi, yi, (1.0 - fx) * (1.0 - fy));
    put(xi + 1, yi, fx * (1.0 - fy));
    put(xi, yi + 1, (1.0 - fx) * fy);
    put(xi + 1, yi + 1, fx * fy);
}

/// Draw the route polyline with sub-pixel stepping.
pub fn render_path_trace(graph: &NavGraph, route: &Route, spec: &TraceSpec) -> Result<PathTrace> {
    if route.nodes.len() < 2 {
        return Err(CitySimError::Parameter("trace needs at least one edge".into()));
    }
    if spec.m_classes == 0 || spec.h < 8 || spec.w < 8 {
        return Err(CitySimError::Parameter(format!(
            "bad trace canvas {}x{} with {} classes",
            spec.h, spec.w, spec.m_classes
        )));
    }
    let proj = projector(graph, spec);
    let mut data = vec![0.0f32; spec.h * spec.w];
    for leg in route.nodes.windows(2) {
        let (ax, ay) = graph.nodes[leg[0]];
        let (bx, by) = graph.nodes[leg[1]];
        let (px, py) = proj(ax, ay);
        let (qx, qy) = proj(bx, by);
        let len = ((qx - px).powi(2) + (qy - py).powi(2)).sqrt();
        let steps = (len / 0.35).ceil().max(1.0) as usize;
        for s in 0..=steps {
            let t = s as f64 / steps as f64;
            splat(
                &mut data,
                spec.h,
                spec.w,
                px + (qx - px) * t,
                py + (qy - py) * t,
                0.45,
            );
        }
    }
    let label = route.edge_count().min(spec.m_classes);
    Ok(PathTrace { image: Array::new(vec![1, spec.h, spec.w], data)?, label })
}

/// Rotate a [C,H,W] raster by 180 degrees.
pub fn rot180(a: &Array<f32>) -> Array<f32> {
    let (c, h, w) = (a.shape()[0], a.shape()[1], a.shape()[2]);
    let src = a.data();
    let mut out = vec![0.0f32; src.len()];
    for ch in 0..c {
        let base = ch * h * w;
        for i in 0..h * w {
            out[base + i] = src[base + h * w - 1 - i];
        }
    }
    Array::new(vec![c, h, w], out).expect("rot180 shape")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::route::derive_gold;

    fn city() -> NavGraph {
        NavGraph::build(6, 6, 40.0, 6.0, 21).unwrap()
    }

    #[test]
    fn label_is_edge_count_clamped() {
        let g = city();
        let r = crate::route::sample_route(&g, (6, 12), 1).unwrap();
        let t = render_path_trace(&g, &r, &TraceSpec::default()).unwrap();
        assert_eq!(t.label, r.edge_count());
        let tight = TraceSpec { m_classes: 4, ..TraceSpec::default() };
        let t2 = render_path_trace(&g, &r, &tight).unwrap();
        assert_eq!(t2.label, 4);
    }

    #[test]
    fn single_node_route_is_rejected() {
        let g = city();
        let r = Route {
            nodes: vec![3],
            start_heading: 0.0,
            actions: vec![crate::route::Action::Stop],
            states: vec![(3, 0.0)],
        };
        assert!(render_path_trace(&g, &r, &TraceSpec::default()).is_err());
    }

    #[test]
    fn straight_route_lights_a_straight_band() {
        let g = city();
        // three nodes along one row are collinear up to jitter
        let nodes = vec![12, 13, 14];
        let r = derive_gold(&g, &nodes).unwrap();
        let t = render_path_trace(&g, &r, &TraceSpec::default()).unwrap();
        // fit the ideal segment between projected endpoints and verify all
        // lit pixels lie near it
        let spec = TraceSpec::default();
        let proj = super::projector(&g, &spec);
        let (ax, ay) = g.nodes[12];
        let (bx, by) = g.nodes[14];
        let (px, py) = proj(ax, ay);
        let (qx, qy) = proj(bx, by);
        let seg_len = ((qx - px).powi(2) + (qy - py).powi(2)).sqrt();
        for y in 0..spec.h {
            for x in 0..spec.w {
                if t.image.data()[y * spec.w + x] > 0.2 {
                    let (fx, fy) = (x as f64 + 0.0, y as f64);
                    // distance from point to the segment's carrier line
                    let cross = ((qx - px) * (py - fy) - (px - fx) * (qy - py)).abs();
                    let dist = cross / seg_len;
                    assert!(dist < 2.5, "pixel ({},{}) off line by {}", x, y, dist);
                }
            }
        }
    }

    #[test]
    fn longer_routes_lay_more_ink() {
        let g = city();
        let short = crate::route::sample_route(&g, (3, 3), 5).unwrap();
        let long = crate::route::sample_route(&g, (14, 14), 5).unwrap();
        let ink = |r: &Route| {
            render_path_trace(&g, r, &TraceSpec::default())
                .unwrap()
                .image
                .data()
                .iter()
                .sum::<f32>()
        };
        assert!(ink(&long) > ink(&short) * 2.0);
    }

    #[test]
    fn rotation_preserves_ink_and_label() {
        let g = city();
        let r = crate::route::sample_route(&g, (6, 12), 9).unwrap();
        let t = render_path_trace(&g, &r, &TraceSpec::default()).unwrap();
        let rot = rot180(&t.image);
        let sum_a: f32 = t.image.data().iter().sum();
        let sum_b: f32 = rot.data().iter().sum();
        assert!((sum_a - sum_b).abs() < 1e-4);
        assert_eq!(rot180(&rot).data(), t.image.data());
    }
}
