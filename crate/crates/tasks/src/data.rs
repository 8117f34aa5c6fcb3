//! In-memory desk environment and sample preparation: the city, aligned
//! route/instruction pairs with rendered perspectives, path-trace cards
//! for step-count pretraining, and landmark pairs for matching.

use rand::Rng;

use citysim::instr::{alignment_signal_score, generate_instruction, sentence_bounds};
use citysim::landmarks::{generate_landmark_dataset, place_city_landmarks, SUMMARY_CAP};
use citysim::render::render_perspective;
use citysim::route::sample_route;
use citysim::trace::{render_path_trace, PathTrace};
use citysim::{Grammar, Landmark, NavGraph, PerspectiveSpec, Route, TraceSpec};
use numerics::rng::stream;
use numerics::Array;

use crate::error::{Result, TaskError};

/// Sizes of the generated desk world and its datasets.
#[derive(Debug, Clone)]
pub struct DeskSpec {
    pub grid_rows: usize,
    pub grid_cols: usize,
    pub spacing: f64,
    pub perturb: f64,
    pub n_landmarks: usize,
    /// Train / dev / test route counts.
    pub route_counts: (usize, usize, usize),
    pub route_len: (usize, usize),
    pub persp: PerspectiveSpec,
    pub trace: TraceSpec,
    /// Path-trace cards per step-count class.
    pub traces_per_class: usize,
    pub lm_cells: usize,
    pub lm_count: usize,
    pub lm_per_cell: (usize, usize),
    pub glyph_size: usize,
}

impl Default for DeskSpec {
    fn default() -> Self {
        DeskSpec {
            grid_rows: 6,
            grid_cols: 6,
            spacing: 40.0,
            perturb: 6.0,
            n_landmarks: 48,
            route_counts: (300, 60, 60),
            route_len: (6, 12),
            persp: PerspectiveSpec::default(),
            trace: TraceSpec::default(),
            traces_per_class: 125,
            lm_cells: 16,
            lm_count: 800,
            lm_per_cell: (20, 80),
            glyph_size: 32,
        }
    }
}

/// The fixed world every task runs against.
#[derive(Debug, Clone)]
pub struct DeskEnv {
    pub graph: NavGraph,
    pub landmarks: Vec<Landmark>,
    pub persp: PerspectiveSpec,
    pub trace: TraceSpec,
}

pub fn build_env(spec: &DeskSpec, seed: u64) -> Result<DeskEnv> {
    let graph = NavGraph::build(spec.grid_rows, spec.grid_cols, spec.spacing, spec.perturb, seed)?;
    let landmarks = place_city_landmarks(&graph, spec.n_landmarks, seed)?;
    Ok(DeskEnv { graph, landmarks, persp: spec.persp.clone(), trace: spec.trace.clone() })
}

/// One route ready for teacher forcing: gold actions, the perspective
/// raster at each decision state, and the route's trace card.
#[derive(Debug, Clone)]
pub struct NavSample {
    pub id: String,
    pub route: Route,
    pub tokens: Vec<usize>,
    /// Gold action indices, one per decision state.
    pub actions: Vec<usize>,
    /// [3,H,W] perspective at each decision state, same length.
    pub rasters: Vec<Array<f32>>,
    pub trace: PathTrace,
}

/// Renders the per-state inputs for a route and its instruction tokens.
pub fn prepare_nav_sample(
    env: &DeskEnv,
    id: &str,
    route: Route,
    tokens: &[u32],
) -> Result<NavSample> {
    if route.states.len() != route.actions.len() {
        return Err(TaskError::Data(format!("route {} has mismatched states", id)));
    }
    let rasters: Vec<Array<f32>> = route
        .states
        .iter()
        .map(|&(node, heading)| {
            render_perspective(&env.graph, node, heading, &env.landmarks, &env.persp)
        })
        .collect();
    let trace = render_path_trace(&env.graph, &route, &env.trace)?;
    Ok(NavSample {
        id: id.to_string(),
        tokens: tokens.iter().map(|&t| t as usize).collect(),
        actions: route.actions.iter().map(|a| a.index()).collect(),
        route,
        rasters,
        trace,
    })
}

fn sample_aligned(
    env: &DeskEnv,
    grammar: &Grammar,
    len_range: (usize, usize),
    label: &str,
    i: usize,
    seed: u64,
) -> Result<(Route, Vec<u32>)> {
    for attempt in 0..400u64 {
        let s = stream(seed, &format!("nav-{}", label), (i as u64) * 1000 + attempt).gen::<u64>();
        let route = sample_route(&env.graph, len_range, s)?;
        // A draw whose instruction misses the grammar's length window is
        // discarded like a misaligned one.
        let Ok(ins) =
            generate_instruction(&env.graph, &route, &env.landmarks, &env.persp, grammar, s)
        else {
            continue;
        };
        if alignment_signal_score(&env.graph, &route, &ins, &env.landmarks, &env.persp) == 1.0 {
            return Ok((route, ins.tokens));
        }
    }
    Err(TaskError::Data(format!("no aligned pair for {} {} after 400 draws", label, i)))
}

/// Train / dev / test navigation samples, each pair carrying a landmark
/// cue at every step.
pub fn gen_nav_sets(
    env: &DeskEnv,
    spec: &DeskSpec,
    seed: u64,
) -> Result<(Vec<NavSample>, Vec<NavSample>, Vec<NavSample>)> {
    let grammar = Grammar::default();
    let mut out: [Vec<NavSample>; 3] = [Vec::new(), Vec::new(), Vec::new()];
    let splits =
        [("train", spec.route_counts.0), ("dev", spec.route_counts.1), ("test", spec.route_counts.2)];
    for (k, (label, n)) in splits.iter().enumerate() {
        for i in 0..*n {
            let (route, tokens) = sample_aligned(env, &grammar, spec.route_len, label, i, seed)?;
            let id = format!("{}{:04}", &label[..1], i);
            out[k].push(prepare_nav_sample(env, &id, route, &tokens)?);
        }
    }
    let [train, dev, test] = out;
    Ok((train, dev, test))
}

/// Trace cards balanced over step-count classes 1..=M, split nine to one
/// between train and held-out.
pub fn gen_trace_pools(
    graph: &NavGraph,
    spec: &TraceSpec,
    per_class: usize,
    seed: u64,
) -> Result<(Vec<PathTrace>, Vec<PathTrace>)> {
    let mut train = Vec::new();
    let mut held = Vec::new();
    let mut idx = 0u64;
    for class in 1..=spec.m_classes {
        for _ in 0..per_class {
            let mut made = None;
            for attempt in 0..400u64 {
                let s = stream(seed, "trace-pool", idx * 1000 + attempt).gen::<u64>();
                if let Ok(route) = sample_route(graph, (class, class), s) {
                    made = Some(render_path_trace(graph, &route, spec)?);
                    break;
                }
            }
            let t = made.ok_or_else(|| {
                TaskError::Data(format!("no self-avoiding route of {} edges", class))
            })?;
            if idx % 10 == 9 {
                held.push(t);
            } else {
                train.push(t);
            }
            idx += 1;
        }
    }
    Ok((train, held))
}

/// One glyph/summary pair for matching and geolocation pretraining. The
/// summary is capped and reduced to its first sentence.
#[derive(Debug, Clone)]
pub struct LandmarkPair {
    pub glyph: Array<f32>,
    pub tokens: Vec<usize>,
    pub cell: usize,
}

pub fn first_sentence(tokens: &[u32]) -> Vec<usize> {
    let capped = &tokens[..tokens.len().min(SUMMARY_CAP)];
    let bounds = sentence_bounds(capped);
    let (lo, hi) = bounds.first().copied().unwrap_or((0, capped.len()));
    capped[lo..hi].iter().map(|&t| t as usize).collect()
}

/// Landmark pairs split nine to one between train and held-out.
pub fn gen_landmark_pools(
    spec: &DeskSpec,
    seed: u64,
) -> Result<(Vec<LandmarkPair>, Vec<LandmarkPair>)> {
    let (_, records) = generate_landmark_dataset(
        spec.lm_cells,
        spec.lm_per_cell,
        spec.lm_count,
        spec.glyph_size,
        seed,
    )?;
    let mut train = Vec::new();
    let mut held = Vec::new();
    for (i, r) in records.into_iter().enumerate() {
        let pair =
            LandmarkPair { glyph: r.glyph, tokens: first_sentence(&r.tokens), cell: r.cell };
        if i % 10 == 9 {
            held.push(pair);
        } else {
            train.push(pair);
        }
    }
    Ok((train, held))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_spec() -> DeskSpec {
        DeskSpec {
            route_counts: (4, 2, 2),
            route_len: (3, 6),
            traces_per_class: 2,
            trace: TraceSpec { m_classes: 6, ..TraceSpec::default() },
            lm_count: 40,
            lm_per_cell: (1, 6),
            ..DeskSpec::default()
        }
    }

    #[test]
    fn nav_samples_align_rasters_with_gold_actions() {
        let spec = tiny_spec();
        let env = build_env(&spec, 5).unwrap();
        let (train, dev, test) = gen_nav_sets(&env, &spec, 5).unwrap();
        assert_eq!((train.len(), dev.len(), test.len()), (4, 2, 2));
        for s in train.iter().chain(&dev).chain(&test) {
            assert_eq!(s.rasters.len(), s.actions.len());
            assert_eq!(*s.actions.last().unwrap(), citysim::Action::Stop.index());
            assert!(s.tokens.len() <= 120);
            assert_eq!(s.trace.label, s.route.edge_count().min(spec.trace.m_classes));
            assert_eq!(s.rasters[0].shape(), &[3, spec.persp.h, spec.persp.w]);
        }
        assert_ne!(train[0].id, train[1].id);
    }

    #[test]
    fn generation_is_deterministic_in_the_seed() {
        let spec = tiny_spec();
        let env = build_env(&spec, 5).unwrap();
        let (a, _, _) = gen_nav_sets(&env, &spec, 9).unwrap();
        let (b, _, _) = gen_nav_sets(&env, &spec, 9).unwrap();
        assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.route.nodes, y.route.nodes);
            assert_eq!(x.tokens, y.tokens);
            assert_eq!(x.rasters[0].data(), y.rasters[0].data());
        }
        let (c, _, _) = gen_nav_sets(&env, &spec, 10).unwrap();
        assert!(a.iter().zip(&c).any(|(x, y)| x.route.nodes != y.route.nodes));
    }

    #[test]
    fn trace_pools_cover_every_class_in_both_splits() {
        let spec = tiny_spec();
        let env = build_env(&spec, 5).unwrap();
        let (train, held) = gen_trace_pools(&env.graph, &spec.trace, 10, 3).unwrap();
        assert_eq!(train.len() + held.len(), 60);
        assert_eq!(held.len(), 6);
        for class in 1..=6 {
            assert!(train.iter().filter(|t| t.label == class).count() >= 8);
        }
        for t in train.iter().chain(&held) {
            assert_eq!(t.image.shape(), &[1, spec.trace.h, spec.trace.w]);
        }
    }

    #[test]
    fn landmark_pairs_keep_one_sentence_and_cell_labels() {
        let spec = tiny_spec();
        let (train, held) = gen_landmark_pools(&spec, 7).unwrap();
        assert_eq!(train.len() + held.len(), 40);
        assert!(!held.is_empty());
        let period = citysim::Vocab::shared().id(".") as usize;
        for p in train.iter().chain(&held) {
            assert!(p.cell < spec.lm_cells);
            let inner = &p.tokens[..p.tokens.len() - 1];
            assert!(!inner.contains(&period));
        }
    }
}
