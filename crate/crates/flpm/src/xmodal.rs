//! Cross-modal stage: adapts the localisation vector and the boosted
//! feature map into a joint token sequence and attends over it.

use numerics::rng::stream;
use numerics::{Elem, Init, ParamSet, Tape, VarId};

use crate::encoder::{layer_forward, register_stack, EncoderConfig};
use crate::error::{FlpmError, Result};

/// How the two modalities are merged into the fusion vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FusionMode {
    /// Joint attention stack; fusion vector concatenates each layer's
    /// first-position summary.
    Attend,
    /// Plain concatenation of the adapted text token and the mean
    /// adapted visual token, no attention.
    Concat,
}

impl FusionMode {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "attend" => Ok(FusionMode::Attend),
            "concat" => Ok(FusionMode::Concat),
            _ => Err(FlpmError::Config(format!("unknown fusion mode '{}'", s))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            FusionMode::Attend => "attend",
            FusionMode::Concat => "concat",
        }
    }
}

#[derive(Debug, Clone)]
pub struct XmodalCfg {
    /// Width of the localisation vector fed to the text adapter.
    pub pm_embed: usize,
    /// Channel count of the boosted feature map.
    pub vis_channels: usize,
    pub grid_h: usize,
    pub grid_w: usize,
}

impl XmodalCfg {
    fn joint_len(&self) -> usize {
        1 + self.grid_h * self.grid_w
    }
}

/// Width of the fusion vector `g` for a given mode.
pub fn fusion_dim(mode: FusionMode, enc: &EncoderConfig) -> usize {
    match mode {
        FusionMode::Attend => enc.layers * enc.hidden,
        FusionMode::Concat => 2 * enc.hidden,
    }
}

pub fn register_xmodal(
    ps: &mut ParamSet,
    enc: &EncoderConfig,
    cfg: &XmodalCfg,
    seed: u64,
) -> Result<()> {
    let mut rng = stream(seed, "xmodal-init", 0);
    let h = enc.hidden;
    let std = (1.0 / cfg.pm_embed as f64).sqrt();
    ps.register("xmodal.txt.w", vec![cfg.pm_embed, h], Init::TruncNormal { std }, &mut rng)?;
    ps.register("xmodal.txt.b", vec![h], Init::Const(0.0), &mut rng)?;
    let std = (1.0 / cfg.vis_channels as f64).sqrt();
    ps.register("xmodal.vis.w", vec![cfg.vis_channels, h], Init::TruncNormal { std }, &mut rng)?;
    ps.register("xmodal.vis.b", vec![h], Init::Const(0.0), &mut rng)?;
    ps.register("xmodal.emb.type", vec![2, h], Init::TruncNormal { std: 0.02 }, &mut rng)?;
    ps.register(
        "xmodal.emb.pos",
        vec![cfg.joint_len(), h],
        Init::TruncNormal { std: 0.02 },
        &mut rng,
    )?;
    ps.register("xmodal.emb.ln.g", vec![h], Init::Const(1.0), &mut rng)?;
    ps.register("xmodal.emb.ln.b", vec![h], Init::Const(0.0), &mut rng)?;
    register_stack(ps, "xmodal", enc.layers, h, enc.ffn(), seed ^ 0x9e37)?;
    Ok(())
}

fn check_inputs<E: Elem>(t: &Tape<E>, cfg: &XmodalCfg, e_l: VarId, e_v_prime: VarId) -> Result<()> {
    let vl = t.value(e_l);
    if vl.rank() != 1 || vl.numel() != cfg.pm_embed {
        return Err(FlpmError::Data(format!(
            "localisation vector shape {:?}, expected [{}]",
            vl.shape(),
            cfg.pm_embed
        )));
    }
    let vv = t.value(e_v_prime);
    if vv.shape() != [cfg.vis_channels, cfg.grid_h, cfg.grid_w] {
        return Err(FlpmError::Data(format!(
            "boosted map shape {:?}, expected [{}, {}, {}]",
            vv.shape(),
            cfg.vis_channels,
            cfg.grid_h,
            cfg.grid_w
        )));
    }
    Ok(())
}

/// Adapted text token followed by one adapted token per map position.
pub fn assemble_joint_rows<E: Elem>(
    t: &mut Tape<E>,
    ps: &ParamSet,
    cfg: &XmodalCfg,
    e_l: VarId,
    e_v_prime: VarId,
) -> Result<VarId> {
    check_inputs(t, cfg, e_l, e_v_prime)?;
    let w = t.param(ps, "xmodal.txt.w")?;
    let b = t.param(ps, "xmodal.txt.b")?;
    let txt = t.linear1(e_l, w, Some(b))?;

    let n_pos = cfg.grid_h * cfg.grid_w;
    let flat = t.region_mean_pool(e_v_prime, cfg.grid_h, cfg.grid_w)?;
    let pix = t.reshape(flat, vec![n_pos, cfg.vis_channels])?;
    let w = t.param(ps, "xmodal.vis.w")?;
    let b = t.param(ps, "xmodal.vis.b")?;
    let vis = t.linear(pix, w, Some(b))?;

    let txt_row = t.stack_vecs(&[txt])?;
    let mut rows = t.concat_rows(&[txt_row, vis])?;

    let pos_table = t.param(ps, "xmodal.emb.pos")?;
    let pos = t.gather_rows(pos_table, &(0..cfg.joint_len()).collect::<Vec<_>>())?;
    rows = t.add(rows, pos)?;
    let mut type_ids = vec![0usize];
    type_ids.extend(std::iter::repeat(1).take(n_pos));
    let type_table = t.param(ps, "xmodal.emb.type")?;
    let ty = t.gather_rows(type_table, &type_ids)?;
    rows = t.add(rows, ty)?;
    let g = t.param(ps, "xmodal.emb.ln.g")?;
    let b = t.param(ps, "xmodal.emb.ln.b")?;
    Ok(t.layer_norm(rows, g, b, 1e-5)?)
}

/// Fuses the two modalities into a single vector `g`.
pub fn cross_modal_attend<E: Elem>(
    t: &mut Tape<E>,
    ps: &ParamSet,
    enc: &EncoderConfig,
    cfg: &XmodalCfg,
    mode: FusionMode,
    e_l: VarId,
    e_v_prime: VarId,
) -> Result<VarId> {
    match mode {
        FusionMode::Concat => {
            check_inputs(t, cfg, e_l, e_v_prime)?;
            let w = t.param(ps, "xmodal.txt.w")?;
            let b = t.param(ps, "xmodal.txt.b")?;
            let txt = t.linear1(e_l, w, Some(b))?;
            let n_pos = cfg.grid_h * cfg.grid_w;
            let flat = t.region_mean_pool(e_v_prime, cfg.grid_h, cfg.grid_w)?;
            let pix = t.reshape(flat, vec![n_pos, cfg.vis_channels])?;
            let w = t.param(ps, "xmodal.vis.w")?;
            let b = t.param(ps, "xmodal.vis.b")?;
            let vis = t.linear(pix, w, Some(b))?;
            let vis_mean = t.mean_rows(vis)?;
            Ok(t.concat_vecs(&[txt, vis_mean])?)
        }
        FusionMode::Attend => {
            let mut x = assemble_joint_rows(t, ps, cfg, e_l, e_v_prime)?;
            let mut pooled = Vec::with_capacity(enc.layers);
            for l in 0..enc.layers {
                x = layer_forward(t, ps, "xmodal", l, enc.heads, x, None)?;
                pooled.push(t.row_vec(x, 0)?);
            }
            Ok(t.concat_vecs(&pooled)?)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use numerics::check::uniform_array;
    use numerics::Array;

    fn cfgs() -> (EncoderConfig, XmodalCfg) {
        (
            EncoderConfig { layers: 3, heads: 2, hidden: 8, dropout: 0.0 },
            XmodalCfg { pm_embed: 6, vis_channels: 4, grid_h: 2, grid_w: 3 },
        )
    }

    fn setup(seed: u64) -> (ParamSet, EncoderConfig, XmodalCfg) {
        let (enc, cfg) = cfgs();
        let mut ps = ParamSet::new();
        register_xmodal(&mut ps, &enc, &cfg, seed).unwrap();
        (ps, enc, cfg)
    }

    fn inputs(t: &mut Tape<f32>, cfg: &XmodalCfg, seed: u64) -> (VarId, VarId) {
        let mut rng = stream(seed, "xm-in", 0);
        let e_l = t.constant(uniform_array(&mut rng, vec![cfg.pm_embed], -1.0, 1.0)).unwrap();
        let e_v = t
            .constant(uniform_array(
                &mut rng,
                vec![cfg.vis_channels, cfg.grid_h, cfg.grid_w],
                -1.0,
                1.0,
            ))
            .unwrap();
        (e_l, e_v)
    }

    #[test]
    fn fusion_vector_concatenates_one_summary_per_layer() {
        let (ps, enc, cfg) = setup(61);
        let mut t: Tape<f32> = Tape::new();
        let (e_l, e_v) = inputs(&mut t, &cfg, 1);
        let g = cross_modal_attend(&mut t, &ps, &enc, &cfg, FusionMode::Attend, e_l, e_v).unwrap();
        assert_eq!(t.value(g).shape(), &[enc.layers * enc.hidden]);
        assert_eq!(fusion_dim(FusionMode::Attend, &enc), enc.layers * enc.hidden);
    }

    #[test]
    fn concat_mode_skips_attention_and_halves_nothing_else() {
        let (ps, enc, cfg) = setup(62);
        let mut t: Tape<f32> = Tape::new();
        let (e_l, e_v) = inputs(&mut t, &cfg, 2);
        let g = cross_modal_attend(&mut t, &ps, &enc, &cfg, FusionMode::Concat, e_l, e_v).unwrap();
        assert_eq!(t.value(g).shape(), &[2 * enc.hidden]);
        assert_eq!(fusion_dim(FusionMode::Concat, &enc), 2 * enc.hidden);
    }

    // With the value projection zeroed and its bias set to ones, every
    // attended row is the attention-row sum times the ones vector, so a
    // unit output certifies the rows are convex weights.
    #[test]
    fn attention_rows_are_convex_combinations() {
        let (mut ps, enc, cfg) = setup(63);
        let h = enc.hidden;
        *ps.get_mut("xmodal.l0.attn.wv").unwrap() = Array::zeros(vec![h, h]);
        *ps.get_mut("xmodal.l0.attn.bv").unwrap() = Array::from_fn(vec![h], |_| 1.0);
        *ps.get_mut("xmodal.l0.attn.wo").unwrap() =
            Array::from_fn(vec![h, h], |i| if i / h == i % h { 1.0 } else { 0.0 });
        *ps.get_mut("xmodal.l0.attn.bo").unwrap() = Array::zeros(vec![h]);
        let mut t: Tape<f32> = Tape::new();
        let (e_l, e_v) = inputs(&mut t, &cfg, 3);
        let x = assemble_joint_rows(&mut t, &ps, &cfg, e_l, e_v).unwrap();
        let a = crate::encoder::attn_out(&mut t, &ps, "xmodal", 0, enc.heads, x, None).unwrap();
        for &v in t.value(a).data() {
            assert!((v - 1.0).abs() <= 1e-6, "attention row sum drifted: {}", v);
        }
    }

    #[test]
    fn an_all_zero_map_still_produces_finite_fusion() {
        let (ps, enc, cfg) = setup(64);
        let mut t: Tape<f32> = Tape::new();
        let mut rng = stream(5, "xm-in", 0);
        let e_l = t.constant(uniform_array(&mut rng, vec![cfg.pm_embed], -1.0, 1.0)).unwrap();
        let e_v = t
            .constant(Array::zeros(vec![cfg.vis_channels, cfg.grid_h, cfg.grid_w]))
            .unwrap();
        let g = cross_modal_attend(&mut t, &ps, &enc, &cfg, FusionMode::Attend, e_l, e_v).unwrap();
        assert!(t.value(g).data().iter().all(|v| v.is_finite()));
    }

    #[test]
    fn mismatched_inputs_are_rejected() {
        let (ps, enc, cfg) = setup(65);
        let mut t: Tape<f32> = Tape::new();
        let bad_l = t.constant(Array::zeros(vec![cfg.pm_embed + 1])).unwrap();
        let (e_l, e_v) = inputs(&mut t, &cfg, 6);
        let bad_v = t.constant(Array::zeros(vec![cfg.vis_channels, cfg.grid_h, cfg.grid_w + 1])).unwrap();
        assert!(cross_modal_attend(&mut t, &ps, &enc, &cfg, FusionMode::Attend, bad_l, e_v).is_err());
        assert!(cross_modal_attend(&mut t, &ps, &enc, &cfg, FusionMode::Attend, e_l, bad_v).is_err());
        assert!(FusionMode::parse("gate").is_err());
        assert_eq!(FusionMode::parse("concat").unwrap(), FusionMode::Concat);
    }
}
