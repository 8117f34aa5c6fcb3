//! Span localisation: a small recurrent reader scores the concatenated
//! span against the boosted visual map and picks which half to keep.

use numerics::rng::stream;
use numerics::{lstm_step, Array, Elem, Init, LstmWeights, ParamSet, Tape, VarId};

use crate::error::{PmError, Result};
use crate::plan::{Span, SpanQuery};

#[derive(Debug, Clone)]
pub struct LocaliseCfg {
    pub embed: usize,
    pub lstm_hidden: usize,
    /// Channel count of the boosted visual map fed to the reader.
    pub vis_channels: usize,
    /// Longest token window embedded per span; longer spans keep the tail.
    pub span_cap: usize,
}

impl Default for LocaliseCfg {
    fn default() -> Self {
        LocaliseCfg { embed: 64, lstm_hidden: 32, vis_channels: 32, span_cap: 16 }
    }
}

/// The module's verdict for one step.
#[derive(Debug, Clone, Copy)]
pub struct PriorityOutput {
    /// Confidence-gated mean embedding of the chosen span.
    pub e_l: VarId,
    /// The boosted visual map, passed through unchanged.
    pub e_v_prime: VarId,
    pub span: Span,
    /// 0 keeps the carried span, 1 the current one.
    pub choice: usize,
}

/// Registers the token table, the visual projection, the recurrent
/// reader, and the choice head under `pmf.`.
pub fn register_localise(ps: &mut ParamSet, cfg: &LocaliseCfg, vocab: usize, seed: u64) -> Result<()> {
    let mut rng = stream(seed, "prl-init", 0);
    let std = (1.0 / cfg.embed as f64).sqrt();
    ps.register("pmf.emb.tok", vec![vocab, cfg.embed], Init::TruncNormal { std }, &mut rng)?;
    let std = (1.0 / cfg.vis_channels as f64).sqrt();
    ps.register("pmf.prl.vis.w", vec![cfg.vis_channels, cfg.embed], Init::TruncNormal { std }, &mut rng)?;
    ps.register("pmf.prl.vis.b", vec![cfg.embed], Init::Const(0.0), &mut rng)?;
    let (de, dh) = (cfg.embed, cfg.lstm_hidden);
    let std = (1.0 / de as f64).sqrt();
    ps.register("pmf.prl.lstm.w_ih", vec![de, 4 * dh], Init::TruncNormal { std }, &mut rng)?;
    let std = (1.0 / dh as f64).sqrt();
    ps.register("pmf.prl.lstm.w_hh", vec![dh, 4 * dh], Init::TruncNormal { std }, &mut rng)?;
    ps.register("pmf.prl.lstm.b", vec![4 * dh], Init::Const(0.0), &mut rng)?;
    ps.register("pmf.prl.choice.w", vec![dh, 1], Init::TruncNormal { std }, &mut rng)?;
    ps.register("pmf.prl.choice.b", vec![1], Init::Const(0.0), &mut rng)?;
    Ok(())
}

fn capped_ids(tokens: &[usize], span: Span, cap: usize) -> Vec<usize> {
    let lo = if span.len() > cap { span.hi - cap } else { span.lo };
    tokens[lo..span.hi].to_vec()
}

/// Mean token embedding of arbitrary ids, shared with the pretraining
/// tasks so the table is warmed before navigation.
pub fn mean_token_embed<E: Elem>(
    t: &mut Tape<E>,
    ps: &ParamSet,
    ids: &[usize],
) -> Result<VarId> {
    if ids.is_empty() {
        return Err(PmError::Data("cannot embed an empty token list".into()));
    }
    let table = t.param(ps, "pmf.emb.tok")?;
    let rows = t.gather_rows(table, ids)?;
    Ok(t.mean_rows(rows)?)
}

pub fn localise_span<E: Elem>(
    t: &mut Tape<E>,
    ps: &ParamSet,
    cfg: &LocaliseCfg,
    query: &SpanQuery,
    tokens: &[usize],
    e_v_prime: VarId,
) -> Result<PriorityOutput> {
    let merged = query.merged();
    if query.current.is_empty() || query.carried.is_empty() {
        return Err(PmError::Data("localisation requires nonempty spans".into()));
    }
    if merged.hi > tokens.len() {
        return Err(PmError::Data(format!(
            "span reaches token {} but only {} tokens exist",
            merged.hi,
            tokens.len()
        )));
    }
    let vshape = t.value(e_v_prime).shape().to_vec();
    if vshape.len() != 3 || vshape[0] != cfg.vis_channels {
        return Err(PmError::Data(format!(
            "boosted map must be [{},h,w], got {:?}",
            cfg.vis_channels, vshape
        )));
    }

    let table = t.param(ps, "pmf.emb.tok")?;
    let ids = capped_ids(tokens, merged, cfg.span_cap);
    let span_rows = t.gather_rows(table, &ids)?;

    let pooled = t.region_mean_pool(e_v_prime, 1, 1)?;
    let vw = t.param(ps, "pmf.prl.vis.w")?;
    let vb = t.param(ps, "pmf.prl.vis.b")?;
    let vis_tok = t.linear1(pooled, vw, Some(vb))?;
    let vis_row = t.stack_vecs(&[vis_tok])?;
    let seq = t.concat_rows(&[span_rows, vis_row])?;

    let weights = LstmWeights {
        w_ih: t.param(ps, "pmf.prl.lstm.w_ih")?,
        w_hh: t.param(ps, "pmf.prl.lstm.w_hh")?,
        b: t.param(ps, "pmf.prl.lstm.b")?,
    };
    let mut h = t.constant(Array::zeros(vec![cfg.lstm_hidden]))?;
    let mut c = t.constant(Array::zeros(vec![cfg.lstm_hidden]))?;
    let steps = t.value(seq).shape()[0];
    for i in 0..steps {
        let x = t.row_vec(seq, i)?;
        let (nh, nc) = lstm_step(t, x, h, c, &weights)?;
        h = nh;
        c = nc;
    }

    let cw = t.param(ps, "pmf.prl.choice.w")?;
    let cb = t.param(ps, "pmf.prl.choice.b")?;
    let logit = t.linear1(h, cw, Some(cb))?;
    // negative score keeps the span carried over from the previous step
    let choice = if Elem::to_f64(t.value(logit).item()) < 0.0 { 0 } else { 1 };
    let chosen = if choice == 0 { query.carried } else { query.current };

    let p = t.sigmoid(logit)?;
    let gate = if choice == 1 {
        p
    } else {
        let np = t.neg(p)?;
        t.add_scalar(np, 1.0)?
    };
    let chosen_ids = capped_ids(tokens, chosen, cfg.span_cap);
    let mean_e = mean_token_embed(t, ps, &chosen_ids)?;
    let e_l = t.mul_scalar_var(mean_e, gate)?;

    Ok(PriorityOutput { e_l, e_v_prime, span: chosen, choice })
}

#[cfg(test)]
mod tests {
    use super::*;
    use numerics::check::uniform_array;

    const VOCAB: usize = 40;

    fn setup(seed: u64) -> (ParamSet, LocaliseCfg) {
        let cfg = LocaliseCfg { embed: 12, lstm_hidden: 6, vis_channels: 4, span_cap: 16 };
        let mut ps = ParamSet::new();
        register_localise(&mut ps, &cfg, VOCAB, seed).unwrap();
        (ps, cfg)
    }

    fn force_choice_bias(ps: &mut ParamSet, bias: f64) {
        let w = ps.get_mut("pmf.prl.choice.w").unwrap();
        for v in w.data_mut() {
            *v = 0.0;
        }
        let b = ps.get_mut("pmf.prl.choice.b").unwrap();
        b.data_mut()[0] = bias as f32;
    }

    fn toy_tokens() -> Vec<usize> {
        (0..48).map(|i| i % VOCAB).collect()
    }

    fn vis_map(t: &mut Tape<f32>, seed: u64) -> VarId {
        let mut rng = stream(seed, "vis", 0);
        t.constant(uniform_array(&mut rng, vec![4, 5, 5], -1.0, 1.0)).unwrap()
    }

    #[test]
    fn biased_threshold_selects_each_side() {
        let (mut ps, cfg) = setup(31);
        let tokens = toy_tokens();
        let query = SpanQuery {
            current: Span { lo: 20, hi: 31 },
            carried: Span { lo: 10, hi: 21 },
        };

        force_choice_bias(&mut ps, -0.5);
        let mut t: Tape<f32> = Tape::new();
        let ev = vis_map(&mut t, 1);
        let out = localise_span(&mut t, &ps, &cfg, &query, &tokens, ev).unwrap();
        assert_eq!(out.choice, 0);
        assert_eq!(out.span, query.carried);
        // gate must be 1 - sigmoid(-0.5)
        let want_gate = 1.0 - 1.0 / (1.0 + 0.5f64.exp());
        let table = ps.get("pmf.emb.tok").unwrap();
        let e_l = t.value(out.e_l);
        for (j, got) in e_l.data().iter().enumerate() {
            let mean: f64 = (10..21).map(|i| table.at2(tokens[i], j) as f64).sum::<f64>() / 11.0;
            assert!((*got as f64 - want_gate * mean).abs() < 1e-5);
        }

        force_choice_bias(&mut ps, 0.5);
        let mut t: Tape<f32> = Tape::new();
        let ev = vis_map(&mut t, 1);
        let out = localise_span(&mut t, &ps, &cfg, &query, &tokens, ev).unwrap();
        assert_eq!(out.choice, 1);
        assert_eq!(out.span, query.current);
    }

    #[test]
    fn same_inputs_reproduce_the_same_verdict() {
        let (ps, cfg) = setup(32);
        let tokens = toy_tokens();
        let query =
            SpanQuery { current: Span { lo: 5, hi: 14 }, carried: Span { lo: 0, hi: 9 } };
        let run = || {
            let mut t: Tape<f32> = Tape::new();
            let ev = vis_map(&mut t, 2);
            let out = localise_span(&mut t, &ps, &cfg, &query, &tokens, ev).unwrap();
            (out.choice, t.value(out.e_l).data().to_vec())
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn degenerate_queries_are_rejected() {
        let (ps, cfg) = setup(33);
        let tokens = toy_tokens();
        let mut t: Tape<f32> = Tape::new();
        let ev = vis_map(&mut t, 3);
        let empty =
            SpanQuery { current: Span { lo: 3, hi: 3 }, carried: Span { lo: 3, hi: 3 } };
        assert!(localise_span(&mut t, &ps, &cfg, &empty, &tokens, ev).is_err());
        let beyond =
            SpanQuery { current: Span { lo: 40, hi: 60 }, carried: Span { lo: 40, hi: 60 } };
        assert!(localise_span(&mut t, &ps, &cfg, &beyond, &tokens, ev).is_err());
        let wrong_map = t.constant(Array::zeros(vec![3, 5, 5])).unwrap();
        let ok = SpanQuery { current: Span { lo: 0, hi: 8 }, carried: Span { lo: 0, hi: 8 } };
        assert!(localise_span(&mut t, &ps, &cfg, &ok, &tokens, wrong_map).is_err());
    }

    #[test]
    fn overlong_spans_keep_only_the_trailing_window() {
        let (ps, cfg) = setup(34);
        let tokens = toy_tokens();
        let run = |q: SpanQuery| {
            let mut t: Tape<f32> = Tape::new();
            let ev = vis_map(&mut t, 4);
            let out = localise_span(&mut t, &ps, &cfg, &q, &tokens, ev).unwrap();
            (out.choice, t.value(out.e_l).data().to_vec())
        };
        let wide = Span { lo: 0, hi: 48 };
        let tail = Span { lo: 32, hi: 48 };
        let a = run(SpanQuery { current: wide, carried: wide });
        let b = run(SpanQuery { current: tail, carried: tail });
        assert_eq!(a, b);
    }

    #[test]
    fn gradients_reach_every_registered_parameter() {
        let (ps, cfg) = setup(35);
        let tokens = toy_tokens();
        let query =
            SpanQuery { current: Span { lo: 20, hi: 31 }, carried: Span { lo: 10, hi: 21 } };
        let mut t: Tape<f64> = Tape::new();
        let mut rng = stream(35, "vis", 0);
        let ev = t.var(uniform_array(&mut rng, vec![4, 5, 5], -1.0, 1.0)).unwrap();
        let out = localise_span(&mut t, &ps, &cfg, &query, &tokens, ev).unwrap();
        let sq = t.mul(out.e_l, out.e_l).unwrap();
        let loss = t.mean_all(sq).unwrap();
        t.backward(loss).unwrap();
        let grads = t.param_grads().unwrap();
        for name in [
            "pmf.emb.tok",
            "pmf.prl.vis.w",
            "pmf.prl.vis.b",
            "pmf.prl.lstm.w_ih",
            "pmf.prl.lstm.w_hh",
            "pmf.prl.lstm.b",
            "pmf.prl.choice.w",
            "pmf.prl.choice.b",
        ] {
            let g = grads.get(name).unwrap_or_else(|| panic!("missing grad for {}", name));
            assert!(
                g.data().iter().any(|v| v.abs() > 0.0),
                "no gradient flowed into {}",
                name
            );
        }
        // the boosted map feeds the reader through the pooled projection
        assert!(t.grad(ev).unwrap().iter().any(|v| v.abs() > 0.0));
    }
}
