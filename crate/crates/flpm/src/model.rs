//! Full model assembly: instruction encoder, priority-map branch,
//! cross-modal fusion, and action head behind one config.

use std::sync::Once;

use numerics::{Array, Elem, ParamSet, Tape, VarId};
use pmvln::{register_pm, PmCfg, PriorityOutput};
use rand_chacha::ChaCha8Rng;

use crate::embed::{persp_token, register_embeddings, register_persp_cnn, EmbedCfg, PerspCfg};
use crate::encoder::{encode_main, register_stack, EncoderConfig};
use crate::error::{FlpmError, Result};
use crate::head::{combine_and_classify, register_head, HeadMode};
use crate::xmodal::{cross_modal_attend, fusion_dim, register_xmodal, FusionMode, XmodalCfg};

#[derive(Debug, Clone)]
pub struct FlpmCfg {
    pub enc: EncoderConfig,
    pub embed: EmbedCfg,
    pub persp: PerspCfg,
    pub fusion: FusionMode,
    pub head: HeadMode,
    pub pm: PmCfg,
}

impl Default for FlpmCfg {
    fn default() -> Self {
        FlpmCfg {
            enc: EncoderConfig::default(),
            embed: EmbedCfg::default(),
            persp: PerspCfg::default(),
            fusion: FusionMode::Attend,
            head: HeadMode::Maxout,
            pm: PmCfg::default(),
        }
    }
}

impl FlpmCfg {
    pub fn validate(&self) -> Result<()> {
        if self.enc.hidden == 0 || self.enc.heads == 0 || self.enc.layers == 0 {
            return Err(FlpmError::Config("encoder sizes must be positive".into()));
        }
        if self.enc.hidden % self.enc.heads != 0 {
            return Err(FlpmError::Config(format!(
                "hidden {} not divisible by {} heads",
                self.enc.hidden, self.enc.heads
            )));
        }
        if self.embed.hidden != self.enc.hidden {
            return Err(FlpmError::Config(format!(
                "embedding width {} must match encoder width {}",
                self.embed.hidden, self.enc.hidden
            )));
        }
        if self.persp.hidden != self.enc.hidden {
            return Err(FlpmError::Config(format!(
                "perspective projection {} must match encoder width {}",
                self.persp.hidden, self.enc.hidden
            )));
        }
        let c_out = *self.persp.channels.last().unwrap_or(&0);
        if self.pm.localise.vis_channels != c_out {
            return Err(FlpmError::Config(format!(
                "localisation expects {} map channels, perspective stack emits {}",
                self.pm.localise.vis_channels, c_out
            )));
        }
        if !(0.0..1.0).contains(&self.enc.dropout) {
            return Err(FlpmError::Config(format!("dropout {} outside [0,1)", self.enc.dropout)));
        }
        if self.embed.max_tokens == 0 || self.embed.window == 0 {
            return Err(FlpmError::Config("token and perspective capacities must be positive".into()));
        }
        Ok(())
    }

    /// Geometry the fusion stage sees, derived from the other parts.
    pub fn xmodal(&self) -> XmodalCfg {
        let hw = self.persp.out_hw();
        XmodalCfg {
            pm_embed: self.pm.localise.embed,
            vis_channels: *self.persp.channels.last().unwrap_or(&0),
            grid_h: hw,
            grid_w: hw,
        }
    }

    /// Width of the combined vector entering the head.
    pub fn z_dim(&self) -> usize {
        self.enc.hidden + fusion_dim(self.fusion, &self.enc)
    }
}

/// Registers every parameter group: the priority-map sections plus the
/// encoder, fusion, and head sections.
pub fn register_model(ps: &mut ParamSet, cfg: &FlpmCfg, vocab: usize, seed: u64) -> Result<()> {
    cfg.validate()?;
    register_pm(ps, &cfg.pm, vocab, seed)?;
    register_embeddings(ps, &cfg.embed, seed)?;
    register_persp_cnn(ps, &cfg.persp, seed)?;
    register_stack(ps, "enc_main", cfg.enc.layers, cfg.enc.hidden, cfg.enc.ffn(), seed)?;
    register_xmodal(ps, &cfg.enc, &cfg.xmodal(), seed)?;
    register_head(ps, cfg.head, cfg.z_dim(), cfg.enc.hidden, seed)?;
    Ok(())
}

static WINDOW_WARN: Once = Once::new();

/// Scores the four actions for one navigation step.
///
/// `persp_feats` are the feature maps of every perspective seen so far,
/// oldest first; only the most recent window is encoded. A `None`
/// priority output runs the model with that branch zeroed, which is the
/// standalone baseline.
pub fn step_logits<E: Elem>(
    t: &mut Tape<E>,
    ps: &ParamSet,
    cfg: &FlpmCfg,
    tokens: &[usize],
    persp_feats: &[VarId],
    pm_out: Option<&PriorityOutput>,
    train: bool,
    rng: &mut ChaCha8Rng,
) -> Result<VarId> {
    if persp_feats.is_empty() {
        return Err(FlpmError::Data("at least one perspective is required".into()));
    }
    let window = cfg.embed.window;
    let feats = if persp_feats.len() > window {
        WINDOW_WARN.call_once(|| {
            eprintln!(
                "note: perspective history exceeds the window; keeping the most recent {}",
                window
            );
        });
        &persp_feats[persp_feats.len() - window..]
    } else {
        persp_feats
    };
    let mut vecs = Vec::with_capacity(feats.len());
    for &f in feats {
        vecs.push(persp_token(t, ps, &cfg.persp, f)?);
    }
    let enc_out = encode_main(t, ps, &cfg.enc, &cfg.embed, tokens, &vecs, None)?;

    let xm = cfg.xmodal();
    let (e_l, e_v_prime) = match pm_out {
        Some(p) => (p.e_l, p.e_v_prime),
        None => {
            let l = t.constant(Array::zeros(vec![xm.pm_embed]))?;
            let v = t.constant(Array::zeros(vec![xm.vis_channels, xm.grid_h, xm.grid_w]))?;
            (l, v)
        }
    };
    let g = cross_modal_attend(t, ps, &cfg.enc, &xm, cfg.fusion, e_l, e_v_prime)?;
    combine_and_classify(t, ps, cfg.head, enc_out.pooled, g, cfg.enc.dropout, train, rng)
}
