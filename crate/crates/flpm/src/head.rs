//! Action head: combines the pooled instruction state with the fusion
//! vector and scores the four navigation actions.

use numerics::rng::stream;
use numerics::{Elem, Init, ParamSet, Tape, VarId};
use rand_chacha::ChaCha8Rng;

use crate::error::{FlpmError, Result};

/// Forward, Left, Right, Stop.
pub const N_ACTIONS: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HeadMode {
    /// Two linear pieces combined elementwise by max, then a linear
    /// readout.
    Maxout,
    /// Single linear layer straight to the logits.
    Plain,
}

impl HeadMode {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "maxout" => Ok(HeadMode::Maxout),
            "plain" => Ok(HeadMode::Plain),
            _ => Err(FlpmError::Config(format!("unknown head mode '{}'", s))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            HeadMode::Maxout => "maxout",
            HeadMode::Plain => "plain",
        }
    }
}

/// Registers the head for `mode` over a combined vector of `z_dim`.
pub fn register_head(
    ps: &mut ParamSet,
    mode: HeadMode,
    z_dim: usize,
    hidden: usize,
    seed: u64,
) -> Result<()> {
    let mut rng = stream(seed, "head-init", 0);
    let std = (1.0 / z_dim as f64).sqrt();
    match mode {
        HeadMode::Maxout => {
            for piece in ["p1", "p2"] {
                ps.register(
                    &format!("head.{}.w", piece),
                    vec![z_dim, hidden],
                    Init::TruncNormal { std },
                    &mut rng,
                )?;
                ps.register(&format!("head.{}.b", piece), vec![hidden], Init::Const(0.0), &mut rng)?;
            }
            let std = (1.0 / hidden as f64).sqrt();
            ps.register("head.out.w", vec![hidden, N_ACTIONS], Init::TruncNormal { std }, &mut rng)?;
            ps.register("head.out.b", vec![N_ACTIONS], Init::Const(0.0), &mut rng)?;
        }
        HeadMode::Plain => {
            ps.register("head.lin.w", vec![z_dim, N_ACTIONS], Init::TruncNormal { std }, &mut rng)?;
            ps.register("head.lin.b", vec![N_ACTIONS], Init::Const(0.0), &mut rng)?;
        }
    }
    Ok(())
}

/// Concatenates the pooled state with the fusion vector, applies
/// dropout when training, and returns the four action logits.
pub fn combine_and_classify<E: Elem>(
    t: &mut Tape<E>,
    ps: &ParamSet,
    mode: HeadMode,
    u_pooled: VarId,
    g: VarId,
    dropout_p: f64,
    train: bool,
    rng: &mut ChaCha8Rng,
) -> Result<VarId> {
    let mut z = t.concat_vecs(&[u_pooled, g])?;
    if train && dropout_p > 0.0 {
        z = t.dropout(z, dropout_p, rng)?;
    }
    let logits = match mode {
        HeadMode::Maxout => {
            let w = t.param(ps, "head.p1.w")?;
            let b = t.param(ps, "head.p1.b")?;
            let h1 = t.linear1(z, w, Some(b))?;
            let w = t.param(ps, "head.p2.w")?;
            let b = t.param(ps, "head.p2.b")?;
            let h2 = t.linear1(z, w, Some(b))?;
            let m = t.maximum(h1, h2)?;
            let w = t.param(ps, "head.out.w")?;
            let b = t.param(ps, "head.out.b")?;
            t.linear1(m, w, Some(b))?
        }
        HeadMode::Plain => {
            let w = t.param(ps, "head.lin.w")?;
            let b = t.param(ps, "head.lin.b")?;
            t.linear1(z, w, Some(b))?
        }
    };
    Ok(logits)
}

#[cfg(test)]
mod tests {
    use super::*;
    use numerics::check::uniform_array;

    const Z: usize = 7;
    const H: usize = 5;

    fn setup(mode: HeadMode, seed: u64) -> ParamSet {
        let mut ps = ParamSet::new();
        register_head(&mut ps, mode, Z, H, seed).unwrap();
        ps
    }

    fn run(ps: &ParamSet, mode: HeadMode, train: bool, rng_seed: u64) -> Vec<f32> {
        let mut t: Tape<f32> = Tape::new();
        let mut rng = stream(9, "head-in", 0);
        let u = t.constant(uniform_array(&mut rng, vec![3], -1.0, 1.0)).unwrap();
        let g = t.constant(uniform_array(&mut rng, vec![Z - 3], -1.0, 1.0)).unwrap();
        let mut drop_rng = stream(rng_seed, "drop", 0);
        let out = combine_and_classify(&mut t, ps, mode, u, g, 0.4, train, &mut drop_rng).unwrap();
        t.value(out).data().to_vec()
    }

    #[test]
    fn both_modes_score_exactly_four_actions() {
        for mode in [HeadMode::Maxout, HeadMode::Plain] {
            let ps = setup(mode, 71);
            let out = run(&ps, mode, false, 0);
            assert_eq!(out.len(), N_ACTIONS);
            assert!(out.iter().all(|v| v.is_finite()));
        }
    }

    #[test]
    fn evaluation_ignores_the_dropout_stream() {
        let ps = setup(HeadMode::Maxout, 72);
        assert_eq!(run(&ps, HeadMode::Maxout, false, 1), run(&ps, HeadMode::Maxout, false, 2));
        assert_ne!(run(&ps, HeadMode::Maxout, true, 1), run(&ps, HeadMode::Maxout, true, 2));
    }

    #[test]
    fn maxout_logits_match_a_direct_recomputation() {
        let ps = setup(HeadMode::Maxout, 73);
        let got = run(&ps, HeadMode::Maxout, false, 0);

        let mut rng = stream(9, "head-in", 0);
        let u = uniform_array::<f32>(&mut rng, vec![3], -1.0, 1.0);
        let g = uniform_array::<f32>(&mut rng, vec![Z - 3], -1.0, 1.0);
        let z: Vec<f32> = u.data().iter().chain(g.data()).copied().collect();
        let mat = |name: &str| ps.get(name).unwrap().data().to_vec();
        let piece = |w: &[f32], b: &[f32]| {
            (0..H)
                .map(|j| b[j] + (0..Z).map(|i| z[i] * w[i * H + j]).sum::<f32>())
                .collect::<Vec<f32>>()
        };
        let h1 = piece(&mat("head.p1.w"), &mat("head.p1.b"));
        let h2 = piece(&mat("head.p2.w"), &mat("head.p2.b"));
        let m: Vec<f32> = h1.iter().zip(&h2).map(|(a, b)| a.max(*b)).collect();
        let (wo, bo) = (mat("head.out.w"), mat("head.out.b"));
        for a in 0..N_ACTIONS {
            let want = bo[a] + (0..H).map(|j| m[j] * wo[j * N_ACTIONS + a]).sum::<f32>();
            assert!((got[a] - want).abs() <= 1e-6, "logit {}: {} vs {}", a, got[a], want);
        }
    }

    #[test]
    fn unknown_mode_names_are_config_errors() {
        assert!(HeadMode::parse("relu").is_err());
        assert_eq!(HeadMode::parse("maxout").unwrap(), HeadMode::Maxout);
        assert_eq!(HeadMode::parse("plain").unwrap(), HeadMode::Plain);
    }
}
