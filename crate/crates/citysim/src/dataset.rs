//! On-disk datasets: the city bundle, route/instruction pairs, path
//! traces, and landmark cards, all as JSONL manifests plus image files.

use std::fs::{self, File};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use rand::Rng;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use numerics::rng::stream;

use crate::error::{CitySimError, Result};
use crate::graph::NavGraph;
use crate::instr::{alignment_signal_score, generate_instruction, Grammar};
use crate::landmarks::{generate_landmark_dataset, CellGrid, Landmark};
use crate::pnm::{write_pgm, write_ppm};
use crate::render::PerspectiveSpec;
use crate::route::{derive_gold, sample_route, Route};
use crate::trace::{render_path_trace, TraceSpec};

/// Everything fixed about one generated city.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CityBundle {
    pub graph: NavGraph,
    pub landmarks: Vec<Landmark>,
    pub persp: PerspectiveSpec,
    pub trace: TraceSpec,
}

pub fn save_city(path: &Path, bundle: &CityBundle) -> Result<()> {
    let f = File::create(path)?;
    serde_json::to_writer(f, bundle).map_err(|e| CitySimError::Format(e.to_string()))?;
    Ok(())
}

pub fn load_city(path: &Path) -> Result<CityBundle> {
    let f = File::open(path)?;
    serde_json::from_reader(BufReader::new(f)).map_err(|e| CitySimError::Format(e.to_string()))
}

fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<()> {
    let mut f = File::create(path)?;
    for it in items {
        let line = serde_json::to_string(it).map_err(|e| CitySimError::Format(e.to_string()))?;
        writeln!(f, "{}", line)?;
    }
    Ok(())
}

fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let f = File::open(path)?;
    let mut out = Vec::new();
    for line in BufReader::new(f).lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| CitySimError::Format(e.to_string()))?);
    }
    Ok(out)
}

/// One route/instruction pair. The route is stored as its node path; gold
/// actions and per-step states are re-derived on load.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VlnSample {
    pub id: String,
    pub split: String,
    pub nodes: Vec<usize>,
    pub tokens: Vec<u32>,
    pub clause_spans: Vec<(usize, usize)>,
    pub step_clause: Vec<usize>,
}

impl VlnSample {
    pub fn route(&self, graph: &NavGraph) -> Result<Route> {
        derive_gold(graph, &self.nodes)
    }
}

/// Generate route/instruction pairs. Pairs whose pairing score is below
/// one (a clause fell back to a directional phrase) are resampled, so
/// every emitted pair carries a landmark cue at every step.
pub fn generate_vln_dataset(
    dir: &Path,
    bundle: &CityBundle,
    grammar: &Grammar,
    counts: (usize, usize, usize),
    len_range: (usize, usize),
    seed: u64,
) -> Result<Vec<VlnSample>> {
    fs::create_dir_all(dir)?;
    let splits = [("train", counts.0), ("dev", counts.1), ("test", counts.2)];
    let mut samples = Vec::new();
    for (split, n) in splits {
        for i in 0..n {
            let mut made = None;
            for attempt in 0..400u64 {
                let s = stream(seed, &format!("vln-{}", split), (i as u64) * 1000 + attempt)
                    .gen::<u64>();
                let route = sample_route(&bundle.graph, len_range, s)?;
                let ins = generate_instruction(
                    &bundle.graph,
                    &route,
                    &bundle.landmarks,
                    &bundle.persp,
                    grammar,
                    s,
                )?;
                let score =
                    alignment_signal_score(&bundle.graph, &route, &ins, &bundle.landmarks, &bundle.persp);
                if score == 1.0 {
                    made = Some((route, ins));
                    break;
                }
            }
            let (route, ins) = made.ok_or_else(|| {
                CitySimError::Generation(format!(
                    "no fully cued route found for {} sample {}",
                    split, i
                ))
            })?;
            samples.push(VlnSample {
                id: format!("{}-{:04}", split, i),
                split: split.to_string(),
                nodes: route.nodes,
                tokens: ins.tokens,
                clause_spans: ins.clause_spans,
                step_clause: ins.step_clause,
            });
        }
    }
    write_jsonl(&dir.join("vln.jsonl"), &samples)?;
    Ok(samples)
}

pub fn load_vln_manifest(dir: &Path) -> Result<Vec<VlnSample>> {
    read_jsonl(&dir.join("vln.jsonl"))
}

/// One path-trace card: the stored image plus its step-count label.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TraceSample {
    pub id: String,
    pub split: String,
    pub file: String,
    /// Edge count, 1-based; class index is `label - 1`.
    pub label: usize,
}

/// Generate trace cards. `per_class[c]` is the number of samples whose
/// route has `c + 1` edges; every tenth sample per class goes to dev.
pub fn generate_trace_dataset(
    dir: &Path,
    graph: &NavGraph,
    spec: &TraceSpec,
    per_class: &[usize],
    seed: u64,
) -> Result<Vec<TraceSample>> {
    if per_class.len() != spec.m_classes {
        return Err(CitySimError::Parameter(format!(
            "per_class has {} entries for {} classes",
            per_class.len(),
            spec.m_classes
        )));
    }
    fs::create_dir_all(dir.join("traces"))?;
    let mut samples = Vec::new();
    let mut idx = 0u64;
    for (cls, &n) in per_class.iter().enumerate() {
        let cnt = cls + 1;
        for j in 0..n {
            let s = stream(seed, "trace-route", idx).gen::<u64>();
            idx += 1;
            let route = sample_route(graph, (cnt, cnt), s)?;
            let card = render_path_trace(graph, &route, spec)?;
            let file = format!("traces/trace_{:05}.pgm", idx - 1);
            write_pgm(&dir.join(&file), &card.image)?;
            samples.push(TraceSample {
                id: format!("trace-{:05}", idx - 1),
                split: if j % 10 == 9 { "dev" } else { "train" }.to_string(),
                file,
                label: card.label,
            });
        }
    }
    write_jsonl(&dir.join("traces.jsonl"), &samples)?;
    Ok(samples)
}

pub fn load_trace_manifest(dir: &Path) -> Result<Vec<TraceSample>> {
    read_jsonl(&dir.join("traces.jsonl"))
}

/// One landmark card: glyph file, summary tokens, position, cell label.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LandmarkSample {
    pub id: String,
    pub split: String,
    pub file: String,
    pub tokens: Vec<u32>,
    pub x: f64,
    pub y: f64,
    pub cell: usize,
}

/// Generate the landmark dataset on disk; every tenth record goes to dev.
pub fn generate_landmark_files(
    dir: &Path,
    n_cells: usize,
    per_cell: (usize, usize),
    count: usize,
    glyph_size: usize,
    seed: u64,
) -> Result<(CellGrid, Vec<LandmarkSample>)> {
    fs::create_dir_all(dir.join("glyphs"))?;
    let (grid, records) = generate_landmark_dataset(n_cells, per_cell, count, glyph_size, seed)?;
    let mut samples = Vec::with_capacity(records.len());
    for (i, rec) in records.iter().enumerate() {
        let file = format!("glyphs/lm_{:04}.ppm", i);
        write_ppm(&dir.join(&file), &rec.glyph)?;
        samples.push(LandmarkSample {
            id: format!("lm-{:04}", i),
            split: if i % 10 == 9 { "dev" } else { "train" }.to_string(),
            file,
            tokens: rec.tokens.clone(),
            x: rec.pos.0,
            y: rec.pos.1,
            cell: rec.cell,
        });
    }
    write_jsonl(&dir.join("landmarks.jsonl"), &samples)?;
    Ok((grid, samples))
}

pub fn load_landmark_manifest(dir: &Path) -> Result<Vec<LandmarkSample>> {
    read_jsonl(&dir.join("landmarks.jsonl"))
}

/// All regular files under `dir`, relative paths, sorted.
pub fn walk_files(dir: &Path) -> Result<Vec<PathBuf>> {
    fn rec(base: &Path, d: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
        for entry in fs::read_dir(d)? {
            let p = entry?.path();
            if p.is_dir() {
                rec(base, &p, out)?;
            } else {
                out.push(p.strip_prefix(base).unwrap().to_path_buf());
            }
        }
        Ok(())
    }
    let mut out = Vec::new();
    rec(dir, dir, &mut out)?;
    out.sort();
    Ok(out)
}
