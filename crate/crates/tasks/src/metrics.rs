//! Navigation scoring: task completion, shortest-path distance, and
//! success-weighted edit distance, plus the environment rollout loop.

use citysim::route::{forward_neighbor, rotate_target};
use citysim::{Action, NavGraph, Route};

use crate::error::{Result, TaskError};

/// Edit distance between two node sequences, two-row dynamic program.
pub fn levenshtein(a: &[usize], b: &[usize]) -> usize {
    if a.is_empty() {
        return b.len();
    }
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0usize; b.len() + 1];
    for (i, &x) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, &y) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(x != y);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// Scores for one evaluated route.
#[derive(Debug, Clone, PartialEq)]
pub struct RouteRecord {
    pub predicted: Vec<usize>,
    pub gold: Vec<usize>,
    pub success: bool,
    pub spd: f64,
    /// Present only on success; failed routes contribute zero to the
    /// aggregate.
    pub sed: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct MetricsReport {
    /// Percent of routes ending at the goal or a node adjacent to it.
    pub tc: f64,
    /// Mean graph distance from the final node to the goal, all routes.
    pub spd: f64,
    /// Sum over successes of 1 - ED/max(|pred|, |gold|), divided by the
    /// total route count, times 100. Bounded above by tc.
    pub sed: f64,
    pub routes: Vec<RouteRecord>,
}

impl MetricsReport {
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        s.push_str(&format!("routes {}\n", self.routes.len()));
        s.push_str(&format!("TC  {:.4}\n", self.tc));
        s.push_str(&format!("SPD {:.4}\n", self.spd));
        s.push_str(&format!("SED {:.4}\n", self.sed));
        s
    }

    /// One row per route; the aggregate line comes last.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("route,success,spd,sed,pred_len,gold_len\n");
        for (i, r) in self.routes.iter().enumerate() {
            let sed = r.sed.map(|v| format!("{:.4}", v)).unwrap_or_default();
            s.push_str(&format!(
                "{},{},{:.4},{},{},{}\n",
                i,
                u8::from(r.success),
                r.spd,
                sed,
                r.predicted.len(),
                r.gold.len()
            ));
        }
        s.push_str(&format!("all,,{:.4},{:.4},,{:.4}\n", self.spd, self.sed, self.tc));
        s
    }
}

/// Scores predicted node paths against gold node paths.
pub fn compute_metrics(
    graph: &NavGraph,
    pairs: &[(Vec<usize>, Vec<usize>)],
) -> Result<MetricsReport> {
    if pairs.is_empty() {
        return Err(TaskError::Data("no routes to score".into()));
    }
    let n = pairs.len() as f64;
    let mut routes = Vec::with_capacity(pairs.len());
    let mut successes = 0usize;
    let mut spd_sum = 0.0;
    let mut sed_sum = 0.0;
    for (pred, gold) in pairs {
        let (final_node, goal) = match (pred.last(), gold.last()) {
            (Some(&f), Some(&g)) => (f, g),
            _ => return Err(TaskError::Data("empty node path".into())),
        };
        for &u in pred.iter().chain(gold.iter()) {
            if u >= graph.node_count() {
                return Err(TaskError::Data(format!("node {} outside graph", u)));
            }
        }
        let dist = graph.bfs_dist(goal)[final_node];
        if dist == usize::MAX {
            return Err(TaskError::Data("final node unreachable from goal".into()));
        }
        let success = final_node == goal || graph.adj[goal].contains(&final_node);
        let sed = if success {
            let ed = levenshtein(pred, gold) as f64;
            let denom = pred.len().max(gold.len()) as f64;
            Some(1.0 - ed / denom)
        } else {
            None
        };
        successes += usize::from(success);
        spd_sum += dist as f64;
        sed_sum += sed.unwrap_or(0.0);
        routes.push(RouteRecord {
            predicted: pred.clone(),
            gold: gold.clone(),
            success,
            spd: dist as f64,
            sed,
        });
    }
    Ok(MetricsReport {
        tc: 100.0 * successes as f64 / n,
        spd: spd_sum / n,
        sed: 100.0 * sed_sum / n,
        routes,
    })
}

/// Walks the graph under a policy from the route's start state and
/// returns the visited node path.
///
/// Forward takes the outgoing edge nearest the heading (at a dead end
/// that is the reverse edge); Left/Right rotate in place; Stop ends the
/// walk. A forced stop lands after `budget_factor` times the gold edge
/// count of moves. A generous total-action cap breaks rotation-only
/// loops; any policy that keeps moving hits the move budget first.
pub fn rollout<F>(
    graph: &NavGraph,
    route: &Route,
    budget_factor: f64,
    policy: &mut F,
) -> Result<Vec<usize>>
where
    F: FnMut(usize, usize, f64) -> Result<Action>,
{
    if !(budget_factor > 0.0) {
        return Err(TaskError::Config(format!("budget factor {} must be positive", budget_factor)));
    }
    let budget_moves = ((budget_factor * route.edge_count() as f64).round() as usize).max(1);
    let action_cap = 4 * budget_moves + 4 * route.actions.len() + 16;
    let mut node = route.start();
    let mut heading = route.start_heading;
    let mut path = vec![node];
    let mut moves = 0usize;
    for step in 0..action_cap {
        match policy(step, node, heading)? {
            Action::Stop => break,
            Action::Forward => {
                let (v, b) = forward_neighbor(graph, node, heading);
                node = v;
                heading = b;
                path.push(node);
                moves += 1;
                if moves == budget_moves {
                    break;
                }
            }
            Action::Left => heading = rotate_target(graph, node, heading, true),
            Action::Right => heading = rotate_target(graph, node, heading, false),
        }
    }
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use citysim::route::{derive_gold, sample_route};

    fn grid() -> NavGraph {
        NavGraph::build(6, 6, 40.0, 6.0, 9).unwrap()
    }

    /// Full-matrix edit distance, the oracle for the two-row version.
    fn lev_full(a: &[usize], b: &[usize]) -> usize {
        let mut d = vec![vec![0usize; b.len() + 1]; a.len() + 1];
        for i in 0..=a.len() {
            d[i][0] = i;
        }
        for j in 0..=b.len() {
            d[0][j] = j;
        }
        for i in 1..=a.len() {
            for j in 1..=b.len() {
                let sub = d[i - 1][j - 1] + usize::from(a[i - 1] != b[j - 1]);
                d[i][j] = sub.min(d[i - 1][j] + 1).min(d[i][j - 1] + 1);
            }
        }
        d[a.len()][b.len()]
    }

    #[test]
    fn edit_distance_matches_the_full_matrix_oracle() {
        let mut rng = numerics::rng::stream(3, "lev", 0);
        use rand::Rng;
        for _ in 0..200 {
            let la = rng.gen_range(0..9);
            let lb = rng.gen_range(0..9);
            let a: Vec<usize> = (0..la).map(|_| rng.gen_range(0..4)).collect();
            let b: Vec<usize> = (0..lb).map(|_| rng.gen_range(0..4)).collect();
            assert_eq!(levenshtein(&a, &b), lev_full(&a, &b));
        }
        assert_eq!(levenshtein(&[1, 2, 3], &[1, 2, 3]), 0);
        assert_eq!(levenshtein(&[], &[5, 6]), 2);
    }

    #[test]
    fn perfect_predictions_score_the_extremes() {
        let g = grid();
        let mut pairs = Vec::new();
        for i in 0..5 {
            let r = sample_route(&g, (4, 8), 100 + i).unwrap();
            pairs.push((r.nodes.clone(), r.nodes.clone()));
        }
        let rep = compute_metrics(&g, &pairs).unwrap();
        assert_eq!(rep.tc, 100.0);
        assert_eq!(rep.spd, 0.0);
        assert_eq!(rep.sed, 100.0);
    }

    #[test]
    fn one_edge_short_counts_success_with_unit_distance() {
        let g = grid();
        let r = sample_route(&g, (5, 9), 41).unwrap();
        let pred: Vec<usize> = r.nodes[..r.nodes.len() - 1].to_vec();
        let rep = compute_metrics(&g, &[(pred, r.nodes.clone())]).unwrap();
        assert!(rep.routes[0].success);
        assert_eq!(rep.routes[0].spd, 1.0);
        assert_eq!(rep.tc, 100.0);
    }

    #[test]
    fn aggregate_sed_never_exceeds_tc() {
        let g = grid();
        let mut rng = numerics::rng::stream(7, "sedtc", 0);
        use rand::Rng;
        let mut pairs = Vec::new();
        for i in 0..12 {
            let gold = sample_route(&g, (3, 10), 500 + i).unwrap().nodes;
            let pred = if rng.gen_bool(0.5) {
                gold.clone()
            } else {
                sample_route(&g, (2, 9), 900 + i).unwrap().nodes
            };
            pairs.push((pred, gold));
        }
        let rep = compute_metrics(&g, &pairs).unwrap();
        assert!(rep.sed <= rep.tc + 1e-9);
        assert!(rep.tc <= 100.0 && rep.sed >= 0.0);
    }

    #[test]
    fn empty_input_is_rejected() {
        let g = grid();
        assert!(compute_metrics(&g, &[]).is_err());
    }

    #[test]
    fn replaying_gold_actions_reproduces_the_gold_path() {
        let g = grid();
        for seed in 0..8 {
            let r = sample_route(&g, (4, 10), 60 + seed).unwrap();
            let gold = derive_gold(&g, &r.nodes).unwrap();
            let acts = gold.actions.clone();
            let mut i = 0usize;
            let path = rollout(&g, &gold, 2.0, &mut |_, _, _| {
                let a = acts[i];
                i += 1;
                Ok(a)
            })
            .unwrap();
            assert_eq!(path, gold.nodes);
        }
    }

    #[test]
    fn stopping_immediately_leaves_only_the_start() {
        let g = grid();
        let r = sample_route(&g, (5, 9), 77).unwrap();
        let path = rollout(&g, &r, 2.0, &mut |_, _, _| Ok(Action::Stop)).unwrap();
        assert_eq!(path, vec![r.start()]);
    }

    #[test]
    fn a_policy_that_never_stops_walks_exactly_the_budget() {
        let g = grid();
        let r = sample_route(&g, (6, 6), 13).unwrap();
        let path = rollout(&g, &r, 2.0, &mut |_, _, _| Ok(Action::Forward)).unwrap();
        assert_eq!(path.len() - 1, 2 * r.edge_count());
    }

    #[test]
    fn rotation_only_policies_still_terminate() {
        let g = grid();
        let r = sample_route(&g, (4, 7), 29).unwrap();
        let path = rollout(&g, &r, 2.0, &mut |_, _, _| Ok(Action::Left)).unwrap();
        assert_eq!(path, vec![r.start()]);
    }

    #[test]
    fn rollouts_are_identical_across_repeat_runs() {
        let g = grid();
        let r = sample_route(&g, (5, 10), 55).unwrap();
        let run = || {
            rollout(&g, &r, 2.0, &mut |step, node, _| {
                Ok(if (step + node) % 3 == 0 { Action::Forward } else { Action::Right })
            })
            .unwrap()
        };
        assert_eq!(run(), run());
    }
}
