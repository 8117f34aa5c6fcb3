//! Post-norm transformer stack shared by the main and cross-modal
//! encoders, plus the main-encoder entry point with padding support.

use numerics::rng::stream;
use numerics::{mhsa, AttnWeights, Elem, Init, ParamSet, Tape, VarId};

use crate::embed::{embed_sequence, EmbedCfg};
use crate::error::{FlpmError, Result};

#[derive(Debug, Clone)]
pub struct EncoderConfig {
    pub layers: usize,
    pub heads: usize,
    pub hidden: usize,
    pub dropout: f64,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        EncoderConfig { layers: 4, heads: 4, hidden: 64, dropout: 0.1 }
    }
}

impl EncoderConfig {
    /// Feed-forward width; fixed at twice the hidden size.
    pub fn ffn(&self) -> usize {
        2 * self.hidden
    }
}

/// Registers `layers` transformer layers under `{prefix}.l{i}.`.
pub fn register_stack(
    ps: &mut ParamSet,
    prefix: &str,
    layers: usize,
    hidden: usize,
    ffn: usize,
    seed: u64,
) -> Result<()> {
    let mut rng = stream(seed, "stack-init", 0);
    let std = (1.0 / hidden as f64).sqrt();
    for l in 0..layers {
        let p = format!("{}.l{}", prefix, l);
        for name in ["wq", "wk", "wv", "wo"] {
            ps.register(
                &format!("{}.attn.{}", p, name),
                vec![hidden, hidden],
                Init::TruncNormal { std },
                &mut rng,
            )?;
            let bname = format!("{}.attn.b{}", p, &name[1..]);
            ps.register(&bname, vec![hidden], Init::Const(0.0), &mut rng)?;
        }
        ps.register(&format!("{}.ln1.g", p), vec![hidden], Init::Const(1.0), &mut rng)?;
        ps.register(&format!("{}.ln1.b", p), vec![hidden], Init::Const(0.0), &mut rng)?;
        let fstd = (2.0 / hidden as f64).sqrt();
        ps.register(&format!("{}.ffn.w1", p), vec![hidden, ffn], Init::TruncNormal { std: fstd }, &mut rng)?;
        // slightly positive: all-zero rows (padding) stay off the kink
        ps.register(&format!("{}.ffn.b1", p), vec![ffn], Init::Const(0.01), &mut rng)?;
        let fstd = (1.0 / ffn as f64).sqrt();
        ps.register(&format!("{}.ffn.w2", p), vec![ffn, hidden], Init::TruncNormal { std: fstd }, &mut rng)?;
        ps.register(&format!("{}.ffn.b2", p), vec![hidden], Init::Const(0.0), &mut rng)?;
        ps.register(&format!("{}.ln2.g", p), vec![hidden], Init::Const(1.0), &mut rng)?;
        ps.register(&format!("{}.ln2.b", p), vec![hidden], Init::Const(0.0), &mut rng)?;
    }
    Ok(())
}

/// One attention + feed-forward block with residuals, normalised after
/// each sublayer.
/// Raw attention sublayer output, before the residual and norm.
pub fn attn_out<E: Elem>(
    t: &mut Tape<E>,
    ps: &ParamSet,
    prefix: &str,
    layer: usize,
    heads: usize,
    x: VarId,
    mask: Option<&[bool]>,
) -> Result<VarId> {
    let p = format!("{}.l{}", prefix, layer);
    let w = AttnWeights {
        wq: t.param(ps, &format!("{}.attn.wq", p))?,
        bq: t.param(ps, &format!("{}.attn.bq", p))?,
        wk: t.param(ps, &format!("{}.attn.wk", p))?,
        bk: t.param(ps, &format!("{}.attn.bk", p))?,
        wv: t.param(ps, &format!("{}.attn.wv", p))?,
        bv: t.param(ps, &format!("{}.attn.bv", p))?,
        wo: t.param(ps, &format!("{}.attn.wo", p))?,
        bo: t.param(ps, &format!("{}.attn.bo", p))?,
    };
    Ok(mhsa(t, x, &w, heads, mask)?)
}

pub fn layer_forward<E: Elem>(
    t: &mut Tape<E>,
    ps: &ParamSet,
    prefix: &str,
    layer: usize,
    heads: usize,
    x: VarId,
    mask: Option<&[bool]>,
) -> Result<VarId> {
    let p = format!("{}.l{}", prefix, layer);
    let a = attn_out(t, ps, prefix, layer, heads, x, mask)?;
    let x1 = t.add(x, a)?;
    let g = t.param(ps, &format!("{}.ln1.g", p))?;
    let b = t.param(ps, &format!("{}.ln1.b", p))?;
    let x1 = t.layer_norm(x1, g, b, 1e-5)?;

    let w1 = t.param(ps, &format!("{}.ffn.w1", p))?;
    let b1 = t.param(ps, &format!("{}.ffn.b1", p))?;
    let w2 = t.param(ps, &format!("{}.ffn.w2", p))?;
    let b2 = t.param(ps, &format!("{}.ffn.b2", p))?;
    let f = t.linear(x1, w1, Some(b1))?;
    let f = t.relu(f)?;
    let f = t.linear(f, w2, Some(b2))?;
    let x2 = t.add(x1, f)?;
    let g = t.param(ps, &format!("{}.ln2.g", p))?;
    let b = t.param(ps, &format!("{}.ln2.b", p))?;
    Ok(t.layer_norm(x2, g, b, 1e-5)?)
}

pub fn stack_forward<E: Elem>(
    t: &mut Tape<E>,
    ps: &ParamSet,
    prefix: &str,
    layers: usize,
    heads: usize,
    mut x: VarId,
    mask: Option<&[bool]>,
) -> Result<VarId> {
    for l in 0..layers {
        x = layer_forward(t, ps, prefix, l, heads, x, mask)?;
    }
    Ok(x)
}

#[derive(Debug, Clone, Copy)]
pub struct MainEncoding {
    /// Final-layer representation of every position.
    pub seq: VarId,
    /// First-position summary vector.
    pub pooled: VarId,
    /// Positions that carry content rather than padding.
    pub real_len: usize,
}

/// Padding mask: real positions attend only real positions; padded rows
/// fall back to attending themselves.
fn padding_mask(real: usize, total: usize) -> Vec<bool> {
    let mut m = vec![false; total * total];
    for i in 0..total {
        for j in 0..total {
            m[i * total + j] = j < real || i == j;
        }
    }
    m
}

/// Runs the main encoder over [summary slot; tokens; perspectives],
/// optionally right-padded with masked zero rows.
pub fn encode_main<E: Elem>(
    t: &mut Tape<E>,
    ps: &ParamSet,
    enc: &EncoderConfig,
    emb: &EmbedCfg,
    tokens: &[usize],
    persp_vecs: &[VarId],
    pad_to: Option<usize>,
) -> Result<MainEncoding> {
    let mut x = embed_sequence(t, ps, emb, tokens, persp_vecs)?;
    let real_len = 1 + tokens.len() + persp_vecs.len();
    let mask_store;
    let mask = match pad_to {
        None => None,
        Some(total) => {
            if total < real_len {
                return Err(FlpmError::Config(format!(
                    "pad target {} is shorter than the sequence ({})",
                    total, real_len
                )));
            }
            if total > real_len {
                let zeros =
                    t.constant(numerics::Array::zeros(vec![total - real_len, enc.hidden]))?;
                x = t.concat_rows(&[x, zeros])?;
            }
            mask_store = padding_mask(real_len, total);
            Some(&mask_store[..])
        }
    };
    let seq = stack_forward(t, ps, "enc_main", enc.layers, enc.heads, x, mask)?;
    let pooled = t.row_vec(seq, 0)?;
    Ok(MainEncoding { seq, pooled, real_len })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embed::register_embeddings;
    use numerics::check::uniform_array;

    fn cfgs() -> (EncoderConfig, EmbedCfg) {
        (
            EncoderConfig { layers: 2, heads: 2, hidden: 8, dropout: 0.0 },
            EmbedCfg { vocab: 20, hidden: 8, max_tokens: 30, window: 4 },
        )
    }

    fn setup(seed: u64) -> (ParamSet, EncoderConfig, EmbedCfg) {
        let (enc, emb) = cfgs();
        let mut ps = ParamSet::new();
        register_embeddings(&mut ps, &emb, seed).unwrap();
        register_stack(&mut ps, "enc_main", enc.layers, enc.hidden, enc.ffn(), seed).unwrap();
        (ps, enc, emb)
    }

    fn persp_vecs(t: &mut Tape<f32>, n: usize, seed: u64) -> Vec<VarId> {
        let mut rng = stream(seed, "pv", 0);
        (0..n)
            .map(|_| t.constant(uniform_array(&mut rng, vec![8], -1.0, 1.0)).unwrap())
            .collect()
    }

    #[test]
    fn output_covers_every_position_at_hidden_width() {
        let (ps, enc, emb) = setup(51);
        let mut t: Tape<f32> = Tape::new();
        let pv = persp_vecs(&mut t, 2, 1);
        let out = encode_main(&mut t, &ps, &enc, &emb, &[3, 7, 7, 2], &pv, None).unwrap();
        assert_eq!(t.value(out.seq).shape(), &[7, 8]);
        assert_eq!(out.real_len, 7);
        let pooled = t.value(out.pooled).data().to_vec();
        assert_eq!(pooled, t.value(out.seq).row(0).to_vec());
    }

    #[test]
    fn masked_padding_leaves_real_outputs_unchanged() {
        let (ps, enc, emb) = setup(52);
        let tokens = [3usize, 7, 1, 2, 9];
        let run = |pad: Option<usize>| {
            let mut t: Tape<f32> = Tape::new();
            let pv = persp_vecs(&mut t, 2, 2);
            let out = encode_main(&mut t, &ps, &enc, &emb, &tokens, &pv, pad).unwrap();
            (0..out.real_len)
                .flat_map(|i| t.value(out.seq).row(i).to_vec())
                .collect::<Vec<f32>>()
        };
        let plain = run(None);
        let padded = run(Some(12));
        assert_eq!(plain.len(), padded.len());
        for (a, b) in plain.iter().zip(&padded) {
            assert!((a - b).abs() < 1e-5, "{} vs {}", a, b);
        }
    }

    #[test]
    fn pad_target_shorter_than_sequence_is_rejected() {
        let (ps, enc, emb) = setup(53);
        let mut t: Tape<f32> = Tape::new();
        let pv = persp_vecs(&mut t, 2, 3);
        assert!(encode_main(&mut t, &ps, &enc, &emb, &[1, 2, 3], &pv, Some(4)).is_err());
    }

    #[test]
    fn head_count_must_divide_hidden_width() {
        let (ps, mut enc, emb) = setup(54);
        enc.heads = 3;
        let mut t: Tape<f32> = Tape::new();
        let pv = persp_vecs(&mut t, 1, 4);
        assert!(encode_main(&mut t, &ps, &enc, &emb, &[1, 2], &pv, None).is_err());
    }
}
