//! Templated navigation instructions with a gold span-to-step map.
//!
//! The gold map is diagnostic only: models may split the token stream at
//! period tokens (see [`sentence_bounds`]), but never see the map itself.

use numerics::rng::stream;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{CitySimError, Result};
use crate::glyph::Archetype;
use crate::graph::NavGraph;
use crate::landmarks::Landmark;
use crate::render::{visible_landmarks, PerspectiveSpec};
use crate::route::{Action, Route};
use crate::vocab::Vocab;

/// One slot of a clause template.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Tpl {
    Lit(&'static str),
    /// "left" / "right" from the maneuver's first rotation.
    Dir,
    /// Counting word for the number of forward moves.
    Num,
    /// "block" / "blocks" agreeing with Num.
    Blocks,
    /// The landmark phrase: tint, fill, shape noun (three tokens).
    Lm,
}

/// Template pools per clause kind. Fallback pools are used when a maneuver
/// has no landmark visible from all of its steps.
#[derive(Debug, Clone)]
pub struct Grammar {
    pub turn: Vec<Vec<Tpl>>,
    pub turn_fallback: Vec<Vec<Tpl>>,
    pub straight: Vec<Vec<Tpl>>,
    pub straight_fallback: Vec<Vec<Tpl>>,
    pub stop: Vec<Vec<Tpl>>,
    pub stop_fallback: Vec<Vec<Tpl>>,
    /// Accepted token-count bounds for a whole instruction.
    pub token_bounds: (usize, usize),
}

use Tpl::{Blocks, Dir, Lit, Lm, Num};

impl Default for Grammar {
    fn default() -> Self {
        Grammar {
            turn: vec![
                vec![Lit("turn"), Dir, Lit("at"), Lit("the"), Lm, Lit(".")],
                vec![Lit("at"), Lit("the"), Lm, Lit("turn"), Dir, Lit(".")],
            ],
            turn_fallback: vec![vec![Lit("turn"), Dir, Lit("at"), Lit("the"), Lit("corner"), Lit(".")]],
            straight: vec![
                vec![Lit("go"), Lit("straight"), Num, Blocks, Lit("past"), Lit("the"), Lm, Lit(".")],
                vec![Lit("walk"), Num, Blocks, Lit("toward"), Lit("the"), Lm, Lit(".")],
                vec![Lit("head"), Lit("straight"), Num, Blocks, Lit("past"), Lit("the"), Lm, Lit(".")],
            ],
            straight_fallback: vec![vec![Lit("go"), Lit("straight"), Num, Blocks, Lit(".")]],
            stop: vec![
                vec![Lit("stop"), Lit("by"), Lit("the"), Lm, Lit(".")],
                vec![Lit("stop"), Lit("at"), Lit("the"), Lm, Lit(".")],
            ],
            stop_fallback: vec![vec![Lit("stop"), Lit("at"), Lit("the"), Lit("corner"), Lit(".")]],
            token_bounds: (20, 120),
        }
    }
}

impl Grammar {
    fn validate(&self) -> Result<()> {
        let pools = [
            &self.turn,
            &self.turn_fallback,
            &self.straight,
            &self.straight_fallback,
            &self.stop,
            &self.stop_fallback,
        ];
        if pools.iter().any(|p| p.is_empty() || p.iter().any(|t| t.is_empty())) {
            return Err(CitySimError::Parameter("grammar has an empty template pool".into()));
        }
        Ok(())
    }
}

/// Instruction tokens plus the gold clause structure.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Instruction {
    pub tokens: Vec<u32>,
    /// Disjoint, ordered token intervals tiling [0, tokens.len()).
    pub clause_spans: Vec<(usize, usize)>,
    /// Clause index for each action step of the route.
    pub step_clause: Vec<usize>,
}

/// Sentence intervals recovered from period tokens alone. This is the
/// model-legal view of clause structure.
pub fn sentence_bounds(tokens: &[u32]) -> Vec<(usize, usize)> {
    let period = Vocab::shared().id(".");
    let mut out = Vec::new();
    let mut lo = 0;
    for (i, &t) in tokens.iter().enumerate() {
        if t == period {
            out.push((lo, i + 1));
            lo = i + 1;
        }
    }
    if lo < tokens.len() {
        out.push((lo, tokens.len()));
    }
    out
}

#[derive(Debug)]
enum Kind {
    Turn(Action),
    Straight,
    Stop,
}

#[derive(Debug)]
struct Maneuver {
    kind: Kind,
    /// Action-index range [lo, hi).
    lo: usize,
    hi: usize,
    forwards: usize,
}

/// Group the gold actions: a rotation run plus its following move forms a
/// turn maneuver; runs of plain moves form straight maneuvers of at most
/// two edges; the trailing Stop stands alone.
fn segment(actions: &[Action]) -> Result<Vec<Maneuver>> {
    let mut out: Vec<Maneuver> = Vec::new();
    let mut i = 0;
    while i < actions.len() && actions[i] != Action::Stop {
        let start = i;
        let mut first_rot = None;
        while matches!(actions[i], Action::Left | Action::Right) {
            if first_rot.is_none() {
                first_rot = Some(actions[i]);
            }
            i += 1;
        }
        if actions[i] != Action::Forward {
            return Err(CitySimError::Generation(format!(
                "expected a move at action {}, got {:?}",
                i, actions[i]
            )));
        }
        i += 1;
        match first_rot {
            Some(rot) => out.push(Maneuver { kind: Kind::Turn(rot), lo: start, hi: i, forwards: 1 }),
            None => {
                if let Some(last) = out.last_mut() {
                    if matches!(last.kind, Kind::Straight) && last.forwards < 2 && last.hi == start
                    {
                        last.hi = i;
                        last.forwards += 1;
                        continue;
                    }
                }
                out.push(Maneuver { kind: Kind::Straight, lo: start, hi: i, forwards: 1 });
            }
        }
    }
    if i != actions.len() - 1 {
        return Err(CitySimError::Generation("route actions do not end with a single Stop".into()));
    }
    out.push(Maneuver { kind: Kind::Stop, lo: i, hi: i + 1, forwards: 0 });
    Ok(out)
}

/// Landmarks visible from every step of the maneuver, nearest (to the
/// first step's node) first.
fn shared_landmarks(
    graph: &NavGraph,
    route: &Route,
    m: &Maneuver,
    landmarks: &[Landmark],
    spec: &PerspectiveSpec,
) -> Vec<usize> {
    let mut common: Option<Vec<usize>> = None;
    for idx in m.lo..m.hi {
        let (node, heading) = route.states[idx];
        let vis = visible_landmarks(graph, node, heading, landmarks, spec);
        common = Some(match common {
            None => vis,
            Some(prev) => prev.into_iter().filter(|i| vis.contains(i)).collect(),
        });
        if common.as_ref().map_or(false, |c| c.is_empty()) {
            return Vec::new();
        }
    }
    let mut c = common.unwrap_or_default();
    let (node, _) = route.states[m.lo];
    let (nx, ny) = graph.nodes[node];
    c.sort_by(|&a, &b| {
        let da = (landmarks[a].pos.0 - nx).powi(2) + (landmarks[a].pos.1 - ny).powi(2);
        let db = (landmarks[b].pos.0 - nx).powi(2) + (landmarks[b].pos.1 - ny).powi(2);
        da.partial_cmp(&db).unwrap()
    });
    c
}

fn expand(
    tpl: &[Tpl],
    v: &Vocab,
    dir: Option<Action>,
    num: usize,
    lm: Option<Archetype>,
    out: &mut Vec<u32>,
) {
    for t in tpl {
        match t {
            Lit(w) => out.push(v.id(w)),
            Dir => out.push(v.id(match dir {
                Some(Action::Left) => "left",
                Some(Action::Right) => "right",
                _ => unreachable!("turn template without a rotation"),
            })),
            Num => out.push(v.number_word(num)),
            Blocks => out.push(v.id(if num == 1 { "block" } else { "blocks" })),
            Lm => {
                let [a, b, c] = lm.expect("landmark template without a landmark").words();
                out.push(v.id(a));
                out.push(v.id(b));
                out.push(v.id(c));
            }
        }
    }
}

/// Generate the instruction for a route: one clause per maneuver, each
/// referencing the nearest landmark visible from all of the maneuver's
/// steps, with directional fallbacks when none exists.
pub fn generate_instruction(
    graph: &NavGraph,
    route: &Route,
    landmarks: &[Landmark],
    spec: &PerspectiveSpec,
    grammar: &Grammar,
    seed: u64,
) -> Result<Instruction> {
    grammar.validate()?;
    let v = Vocab::shared();
    let mut rng = stream(seed, "instr", 0);
    let maneuvers = segment(&route.actions)?;
    let mut tokens = Vec::new();
    let mut clause_spans = Vec::new();
    let mut step_clause = vec![usize::MAX; route.actions.len()];
    for m in &maneuvers {
        let shared = shared_landmarks(graph, route, m, landmarks, spec);
        let lm = shared.first().map(|&i| landmarks[i].arche);
        let (pool, dir) = match m.kind {
            Kind::Turn(rot) => {
                (if lm.is_some() { &grammar.turn } else { &grammar.turn_fallback }, Some(rot))
            }
            Kind::Straight => (
                if lm.is_some() { &grammar.straight } else { &grammar.straight_fallback },
                None,
            ),
            Kind::Stop => {
                (if lm.is_some() { &grammar.stop } else { &grammar.stop_fallback }, None)
            }
        };
        let tpl = &pool[rng.gen_range(0..pool.len())];
        let lo = tokens.len();
        expand(tpl, v, dir, m.forwards, lm, &mut tokens);
        clause_spans.push((lo, tokens.len()));
        let clause = clause_spans.len() - 1;
        for idx in m.lo..m.hi {
            step_clause[idx] = clause;
        }
    }
    if step_clause.iter().any(|&c| c == usize::MAX) {
        return Err(CitySimError::Generation("a route step is missing a clause".into()));
    }
    let (lo, hi) = grammar.token_bounds;
    if tokens.len() < lo || tokens.len() > hi {
        return Err(CitySimError::Generation(format!(
            "instruction has {} tokens, outside [{}, {}]",
            tokens.len(),
            lo,
            hi
        )));
    }
    Ok(Instruction { tokens, clause_spans, step_clause })
}

/// Archetypes referenced inside tokens[lo..hi] as tint-fill-noun triples.
pub fn landmark_refs(tokens: &[u32], lo: usize, hi: usize) -> Vec<Archetype> {
    let v = Vocab::shared();
    let mut out = Vec::new();
    let hi = hi.min(tokens.len());
    if hi < lo + 3 {
        return out;
    }
    for i in lo..hi - 2 {
        if let Some(a) =
            Archetype::from_words(v.word(tokens[i]), v.word(tokens[i + 1]), v.word(tokens[i + 2]))
        {
            out.push(a);
        }
    }
    out
}

/// Diagnostic pairing score: the product over steps of the indicator that
/// the step's gold span and the step's perspective share a landmark.
/// 1.0 exactly when every step agrees, else 0.0.
pub fn alignment_signal_score(
    graph: &NavGraph,
    route: &Route,
    instr: &Instruction,
    landmarks: &[Landmark],
    spec: &PerspectiveSpec,
) -> f64 {
    for (idx, &clause) in instr.step_clause.iter().enumerate() {
        let (lo, hi) = instr.clause_spans[clause];
        let refs = landmark_refs(&instr.tokens, lo, hi);
        let (node, heading) = route.states[idx];
        let vis = visible_landmarks(graph, node, heading, landmarks, spec);
        let hit = vis.iter().any(|&i| refs.contains(&landmarks[i].arche));
        if !hit {
            return 0.0;
        }
    }
    1.0
}
