//! Base embeddings for the main encoder: an instruction token table with
//! positions and modality types, and a small CNN over perspective rasters.

use numerics::rng::stream;
use numerics::{Elem, Init, ParamSet, Tape, VarId};

use crate::error::{FlpmError, Result};

#[derive(Debug, Clone)]
pub struct EmbedCfg {
    pub vocab: usize,
    pub hidden: usize,
    /// Longest instruction accepted, in tokens.
    pub max_tokens: usize,
    /// Most recent perspectives kept in the sequence.
    pub window: usize,
}

impl Default for EmbedCfg {
    fn default() -> Self {
        EmbedCfg { vocab: 64, hidden: 64, max_tokens: 120, window: 8 }
    }
}

#[derive(Debug, Clone)]
pub struct PerspCfg {
    pub in_hw: usize,
    pub channels: [usize; 3],
    pub hidden: usize,
}

impl Default for PerspCfg {
    fn default() -> Self {
        PerspCfg { in_hw: 32, channels: [8, 16, 32], hidden: 64 }
    }
}

impl PerspCfg {
    /// Spatial side of the final feature map after three stride-2 convs.
    pub fn out_hw(&self) -> usize {
        self.in_hw / 8
    }
}

pub fn register_embeddings(ps: &mut ParamSet, cfg: &EmbedCfg, seed: u64) -> Result<()> {
    let mut rng = stream(seed, "emb-init", 0);
    let std = 0.02;
    let h = cfg.hidden;
    ps.register("enc_main.emb.tok", vec![cfg.vocab, h], Init::TruncNormal { std }, &mut rng)?;
    let rows = 1 + cfg.max_tokens + cfg.window;
    ps.register("enc_main.emb.pos", vec![rows, h], Init::TruncNormal { std }, &mut rng)?;
    ps.register("enc_main.emb.type", vec![2, h], Init::TruncNormal { std }, &mut rng)?;
    ps.register("enc_main.emb.cls", vec![1, h], Init::TruncNormal { std }, &mut rng)?;
    ps.register("enc_main.emb.ln.g", vec![h], Init::Const(1.0), &mut rng)?;
    ps.register("enc_main.emb.ln.b", vec![h], Init::Const(0.0), &mut rng)?;
    Ok(())
}

pub fn register_persp_cnn(ps: &mut ParamSet, cfg: &PerspCfg, seed: u64) -> Result<()> {
    let mut rng = stream(seed, "persp-init", 0);
    let chans = [3, cfg.channels[0], cfg.channels[1], cfg.channels[2]];
    for i in 0..3 {
        let (ci, co) = (chans[i], chans[i + 1]);
        let std = (2.0 / (ci * 9) as f64).sqrt();
        ps.register(
            &format!("enc_main.persp.conv{}.k", i + 1),
            vec![co, ci, 3, 3],
            Init::TruncNormal { std },
            &mut rng,
        )?;
        // slightly positive, as in the other conv stacks: keeps clipped
        // patches off the activation kink
        ps.register(
            &format!("enc_main.persp.conv{}.b", i + 1),
            vec![co],
            Init::Const(0.01),
            &mut rng,
        )?;
    }
    let c3 = cfg.channels[2];
    let std = (1.0 / c3 as f64).sqrt();
    ps.register("enc_main.persp.proj.w", vec![c3, cfg.hidden], Init::TruncNormal { std }, &mut rng)?;
    ps.register("enc_main.persp.proj.b", vec![cfg.hidden], Init::Const(0.0), &mut rng)?;
    Ok(())
}

/// Raster [3,S,S] to its [C,S/8,S/8] feature map. This map doubles as the
/// input the priority-map pipeline boosts.
pub fn persp_feature_map<E: Elem>(
    t: &mut Tape<E>,
    ps: &ParamSet,
    cfg: &PerspCfg,
    img: VarId,
) -> Result<VarId> {
    let shape = t.value(img).shape().to_vec();
    if shape != [3, cfg.in_hw, cfg.in_hw] {
        return Err(FlpmError::Data(format!(
            "perspective raster must be [3,{},{}], got {:?}",
            cfg.in_hw, cfg.in_hw, shape
        )));
    }
    let mut x = img;
    for i in 0..3 {
        let k = t.param(ps, &format!("enc_main.persp.conv{}.k", i + 1))?;
        let b = t.param(ps, &format!("enc_main.persp.conv{}.b", i + 1))?;
        x = t.conv2d(x, k, Some(b), 2, 1)?;
        x = t.relu(x)?;
    }
    Ok(x)
}

/// Pools a feature map into one hidden-width sequence element.
pub fn persp_token<E: Elem>(
    t: &mut Tape<E>,
    ps: &ParamSet,
    cfg: &PerspCfg,
    map: VarId,
) -> Result<VarId> {
    let c = t.value(map).shape()[0];
    if c != cfg.channels[2] {
        return Err(FlpmError::Data(format!(
            "feature map has {} channels, expected {}",
            c, cfg.channels[2]
        )));
    }
    let pooled = t.region_mean_pool(map, 1, 1)?;
    let w = t.param(ps, "enc_main.persp.proj.w")?;
    let b = t.param(ps, "enc_main.persp.proj.b")?;
    Ok(t.linear1(pooled, w, Some(b))?)
}

/// Builds the embedded joint sequence [summary slot; tokens; perspectives]
/// with positions and modality types, normalised.
pub fn embed_sequence<E: Elem>(
    t: &mut Tape<E>,
    ps: &ParamSet,
    cfg: &EmbedCfg,
    tokens: &[usize],
    persp_vecs: &[VarId],
) -> Result<VarId> {
    if tokens.is_empty() || tokens.len() > cfg.max_tokens {
        return Err(FlpmError::Data(format!(
            "instruction has {} tokens, accepted range is 1..={}",
            tokens.len(),
            cfg.max_tokens
        )));
    }
    if persp_vecs.is_empty() || persp_vecs.len() > cfg.window {
        return Err(FlpmError::Data(format!(
            "{} perspectives passed, accepted range is 1..={}",
            persp_vecs.len(),
            cfg.window
        )));
    }
    let table = t.param(ps, "enc_main.emb.tok")?;
    let tok_rows = t.gather_rows(table, tokens)?;
    let cls = t.param(ps, "enc_main.emb.cls")?;
    let persp_rows = t.stack_vecs(persp_vecs)?;
    let seq = t.concat_rows(&[cls, tok_rows, persp_rows])?;

    let len = 1 + tokens.len() + persp_vecs.len();
    let pos_table = t.param(ps, "enc_main.emb.pos")?;
    let pos_ids: Vec<usize> = (0..len).collect();
    let pos_rows = t.gather_rows(pos_table, &pos_ids)?;
    let type_table = t.param(ps, "enc_main.emb.type")?;
    let mut type_ids = vec![0usize; 1 + tokens.len()];
    type_ids.extend(std::iter::repeat(1).take(persp_vecs.len()));
    let type_rows = t.gather_rows(type_table, &type_ids)?;

    let x = t.add(seq, pos_rows)?;
    let x = t.add(x, type_rows)?;
    let g = t.param(ps, "enc_main.emb.ln.g")?;
    let b = t.param(ps, "enc_main.emb.ln.b")?;
    Ok(t.layer_norm(x, g, b, 1e-5)?)
}
