//! Landmark glyph encoder plus the matching and geolocation heads used to
//! warm up the fusion-side parameters.

use numerics::rng::stream;
use numerics::{Elem, Init, ParamSet, Tape, VarId};

use crate::error::{PmError, Result};

#[derive(Debug, Clone)]
pub struct GlyphCfg {
    pub in_h: usize,
    pub in_w: usize,
    pub channels: [usize; 3],
    pub embed: usize,
    pub n_cells: usize,
}

impl Default for GlyphCfg {
    fn default() -> Self {
        GlyphCfg { in_h: 32, in_w: 32, channels: [8, 16, 32], embed: 64, n_cells: 16 }
    }
}

/// Registers the glyph CNN and both auxiliary heads under `pmf.`.
pub fn register_glyphnet(ps: &mut ParamSet, cfg: &GlyphCfg, seed: u64) -> Result<()> {
    let mut rng = stream(seed, "glyph-init", 0);
    let chans = [3, cfg.channels[0], cfg.channels[1], cfg.channels[2]];
    for i in 0..3 {
        let (ci, co) = (chans[i], chans[i + 1]);
        let std = (2.0 / (ci * 9) as f64).sqrt();
        ps.register(
            &format!("pmf.glyph.conv{}.k", i + 1),
            vec![co, ci, 3, 3],
            Init::TruncNormal { std },
            &mut rng,
        )?;
        // matches the trace classifier: keeps dead patches off the kink
        ps.register(&format!("pmf.glyph.conv{}.b", i + 1), vec![co], Init::Const(0.01), &mut rng)?;
    }
    let c3 = cfg.channels[2];
    let std = (1.0 / c3 as f64).sqrt();
    ps.register("pmf.glyph.proj.w", vec![c3, cfg.embed], Init::TruncNormal { std }, &mut rng)?;
    ps.register("pmf.glyph.proj.b", vec![cfg.embed], Init::Const(0.0), &mut rng)?;
    let std = (1.0 / (3 * cfg.embed) as f64).sqrt();
    ps.register("pmf.match.w", vec![3 * cfg.embed, 1], Init::TruncNormal { std }, &mut rng)?;
    ps.register("pmf.match.b", vec![1], Init::Const(0.0), &mut rng)?;
    let std = (1.0 / cfg.embed as f64).sqrt();
    ps.register("pmf.geo.w", vec![cfg.embed, cfg.n_cells], Init::TruncNormal { std }, &mut rng)?;
    ps.register("pmf.geo.b", vec![cfg.n_cells], Init::Const(0.0), &mut rng)?;
    Ok(())
}

/// Embeds a [3,H,W] glyph raster into a flat vector.
pub fn glyph_embed<E: Elem>(
    t: &mut Tape<E>,
    ps: &ParamSet,
    cfg: &GlyphCfg,
    img: VarId,
) -> Result<VarId> {
    let shape = t.value(img).shape().to_vec();
    if shape != [3, cfg.in_h, cfg.in_w] {
        return Err(PmError::Data(format!(
            "glyph raster must be [3,{},{}], got {:?}",
            cfg.in_h, cfg.in_w, shape
        )));
    }
    let mut x = img;
    for i in 0..3 {
        let k = t.param(ps, &format!("pmf.glyph.conv{}.k", i + 1))?;
        let b = t.param(ps, &format!("pmf.glyph.conv{}.b", i + 1))?;
        x = t.conv2d(x, k, Some(b), 2, 1)?;
        x = t.relu(x)?;
    }
    let pooled = t.region_mean_pool(x, 1, 1)?;
    let flat = t.reshape(pooled, vec![cfg.channels[2]])?;
    let w = t.param(ps, "pmf.glyph.proj.w")?;
    let b = t.param(ps, "pmf.glyph.proj.b")?;
    Ok(t.linear1(flat, w, Some(b))?)
}

/// Pair score for one glyph/text embedding pair, as a [1] logit.
pub fn match_logit<E: Elem>(
    t: &mut Tape<E>,
    ps: &ParamSet,
    glyph_e: VarId,
    text_e: VarId,
) -> Result<VarId> {
    let prod = t.mul(glyph_e, text_e)?;
    let joint = t.concat_vecs(&[glyph_e, text_e, prod])?;
    let w = t.param(ps, "pmf.match.w")?;
    let b = t.param(ps, "pmf.match.b")?;
    Ok(t.linear1(joint, w, Some(b))?)
}

/// Cell-classification logits from a glyph embedding.
pub fn geo_logits<E: Elem>(t: &mut Tape<E>, ps: &ParamSet, glyph_e: VarId) -> Result<VarId> {
    let w = t.param(ps, "pmf.geo.w")?;
    let b = t.param(ps, "pmf.geo.b")?;
    Ok(t.linear1(glyph_e, w, Some(b))?)
}
