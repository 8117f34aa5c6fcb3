//! Trajectory plans: a per-step Gaussian span layout over instruction
//! tokens, derived from the estimated step count.

use crate::error::{PmError, Result};

/// Half-open token interval [lo, hi).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Span {
    pub lo: usize,
    pub hi: usize,
}

impl Span {
    pub fn len(&self) -> usize {
        self.hi - self.lo
    }

    pub fn is_empty(&self) -> bool {
        self.hi <= self.lo
    }

    /// Smallest interval containing both; spans from one plan always
    /// overlap or abut, so nothing outside them is picked up.
    pub fn union(&self, other: &Span) -> Span {
        Span { lo: self.lo.min(other.lo), hi: self.hi.max(other.hi) }
    }
}

/// Per-step spans over `n_tokens` positions with Gaussian weights.
#[derive(Debug, Clone)]
pub struct TrajectoryPlan {
    pub n_tokens: usize,
    pub cnt: usize,
    pub half_width: usize,
    centers: Vec<usize>,
}

/// Lay spans over the token axis: step t centers at round((t+0.5)·n/cnt)
/// with half-width ceil(n/(2·cnt)), clamped to at least one token.
pub fn build_trajectory_plan(n_tokens: usize, cnt: usize) -> Result<TrajectoryPlan> {
    if n_tokens == 0 || cnt == 0 {
        return Err(PmError::Data(format!("empty plan: n_tokens {}, cnt {}", n_tokens, cnt)));
    }
    let half_width = ((n_tokens as f64) / (2.0 * cnt as f64)).ceil().max(1.0) as usize;
    let centers = (0..cnt)
        .map(|t| ((t as f64 + 0.5) * n_tokens as f64 / cnt as f64).round() as usize)
        .collect();
    Ok(TrajectoryPlan { n_tokens, cnt, half_width, centers })
}

impl TrajectoryPlan {
    /// The span for step t; steps past the plan reuse the final span.
    pub fn span(&self, t: usize) -> Span {
        let c = self.centers[t.min(self.cnt - 1)];
        Span {
            lo: c.saturating_sub(self.half_width),
            hi: (c + self.half_width + 1).min(self.n_tokens),
        }
    }

    pub fn center(&self, t: usize) -> usize {
        self.centers[t.min(self.cnt - 1)]
    }

    /// Gaussian weights over the span's positions, sigma = half_width/2,
    /// normalized to sum one.
    pub fn weights(&self, t: usize) -> Vec<(usize, f64)> {
        let s = self.span(t);
        let c = self.center(t) as f64;
        let sigma = (self.half_width as f64 / 2.0).max(0.5);
        let mut out: Vec<(usize, f64)> = (s.lo..s.hi)
            .map(|j| {
                let d = j as f64 - c;
                (j, (-d * d / (2.0 * sigma * sigma)).exp())
            })
            .collect();
        let z: f64 = out.iter().map(|(_, w)| w).sum();
        for (_, w) in &mut out {
            *w /= z;
        }
        out
    }
}

/// The two candidate spans visible at step t: the step's own span and the
/// carried previous one (duplicated at the first step).
#[derive(Debug, Clone, Copy)]
pub struct SpanQuery {
    pub current: Span,
    pub carried: Span,
}

impl SpanQuery {
    /// The combined interval handed to the localiser.
    pub fn merged(&self) -> Span {
        self.current.union(&self.carried)
    }
}

/// Step t's span paired with the caller-carried previous span.
pub fn predict_span(plan: &TrajectoryPlan, t: usize, prev: Option<Span>) -> SpanQuery {
    let current = plan.span(t);
    let carried = prev.unwrap_or(current);
    SpanQuery { current, carried }
}

#[cfg(test)]
mod tests {
    use super::*;
    use numerics::rng::stream;
    use rand::Rng;

    #[test]
    fn worked_layout_for_sixty_tokens_six_steps() {
        let p = build_trajectory_plan(60, 6).unwrap();
        assert_eq!(p.center(2), 25);
        assert_eq!(p.half_width, 5);
        let s = p.span(2);
        // tokens 20..=30
        assert_eq!((s.lo, s.hi), (20, 31));
    }

    #[test]
    fn single_step_plan_covers_everything() {
        let p = build_trajectory_plan(37, 1).unwrap();
        assert_eq!(p.span(0), Span { lo: 0, hi: 37 });
    }

    #[test]
    fn coverage_monotonicity_and_bounds_across_random_plans() {
        let mut rng = stream(40, "plan", 0);
        for _ in 0..1000 {
            let n = rng.gen_range(10..=200);
            let cnt = rng.gen_range(1..=40);
            let p = build_trajectory_plan(n, cnt).unwrap();
            let mut covered = vec![false; n];
            let mut prev_center = 0;
            for t in 0..cnt {
                let s = p.span(t);
                assert!(s.hi <= n && s.lo < s.hi, "bad span {:?} n {}", s, n);
                for j in s.lo..s.hi {
                    covered[j] = true;
                }
                let c = p.center(t);
                assert!(c >= prev_center, "centers decreased at t {}", t);
                prev_center = c;
            }
            assert!(covered.iter().all(|&b| b), "n {} cnt {} left gaps", n, cnt);
        }
    }

    #[test]
    fn fewer_steps_never_narrow_the_spans() {
        for n in [10usize, 33, 64, 127] {
            let mut prev_hw = usize::MAX;
            for cnt in 1..=20 {
                let p = build_trajectory_plan(n, cnt).unwrap();
                assert!(p.half_width <= prev_hw);
                prev_hw = p.half_width;
            }
        }
    }

    #[test]
    fn first_step_duplicates_and_later_steps_concatenate() {
        let p = build_trajectory_plan(60, 6).unwrap();
        let q0 = predict_span(&p, 0, None);
        assert_eq!(q0.current, q0.carried);
        assert_eq!(q0.merged(), p.span(0));
        let q3 = predict_span(&p, 3, Some(p.span(2)));
        let m = q3.merged();
        let overlap = p.span(2).hi.saturating_sub(p.span(3).lo);
        assert_eq!(m.len(), p.span(3).len() + p.span(2).len() - overlap);
        assert_eq!(m, Span { lo: p.span(2).lo, hi: p.span(3).hi });
    }

    #[test]
    fn steps_beyond_the_plan_reuse_the_final_span() {
        let p = build_trajectory_plan(45, 4).unwrap();
        assert_eq!(p.span(4), p.span(3));
        assert_eq!(p.span(17), p.span(3));
        let q = predict_span(&p, 9, Some(p.span(3)));
        assert_eq!(q.merged(), p.span(3));
    }

    #[test]
    fn more_steps_than_tokens_still_yields_valid_spans() {
        let p = build_trajectory_plan(5, 12).unwrap();
        for t in 0..12 {
            let s = p.span(t);
            assert!(!s.is_empty() && s.hi <= 5);
        }
    }

    #[test]
    fn weights_are_normalized_and_peak_at_the_center() {
        let p = build_trajectory_plan(60, 6).unwrap();
        let w = p.weights(2);
        let sum: f64 = w.iter().map(|(_, v)| v).sum();
        assert!((sum - 1.0).abs() < 1e-12);
        let (peak, _) = w.iter().fold((0usize, 0.0f64), |acc, &(j, v)| {
            if v > acc.1 {
                (j, v)
            } else {
                acc
            }
        });
        assert_eq!(peak, 25);
    }

    #[test]
    fn degenerate_inputs_are_rejected() {
        assert!(build_trajectory_plan(0, 3).is_err());
        assert!(build_trajectory_plan(10, 0).is_err());
    }
}
