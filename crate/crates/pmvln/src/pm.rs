//! Assembly of the priority-map pipeline: step-count estimate, trajectory
//! plan, boosted visual map, and per-step span localisation.

use numerics::rng::stream;
use numerics::{Array, Elem, Init, ParamSet, Tape, VarId};

use crate::error::Result;
use crate::glyphnet::{register_glyphnet, GlyphCfg};
use crate::localise::{localise_span, register_localise, LocaliseCfg, PriorityOutput};
use crate::plan::{predict_span, Span, TrajectoryPlan};
use crate::tracenet::{estimate_step_count, register_tracenet, TraceNetCfg};
use crate::vbf::{usm_filter, vbf_boost, UsmCfg, VbfMode};

/// Parameter-name prefix of the trace classifier section.
pub const SECTION_PMTP: &str = "pmtp.";
/// Parameter-name prefix of the fusion-side section.
pub const SECTION_PMF: &str = "pmf.";

#[derive(Debug, Clone)]
pub struct PmCfg {
    pub trace: TraceNetCfg,
    pub glyph: GlyphCfg,
    pub usm: UsmCfg,
    pub localise: LocaliseCfg,
    pub mode: VbfMode,
    /// Turning this off passes the perspective map through unboosted.
    pub vbf_enabled: bool,
    /// Turning this off drops the carried span so queries hold only the
    /// current one.
    pub carry_spans: bool,
    /// Overrides the classifier's step-count estimate when set.
    pub fixed_cnt: Option<usize>,
}

impl Default for PmCfg {
    fn default() -> Self {
        PmCfg {
            trace: TraceNetCfg::default(),
            glyph: GlyphCfg::default(),
            usm: UsmCfg::default(),
            localise: LocaliseCfg::default(),
            mode: VbfMode::Eq4Literal,
            vbf_enabled: true,
            carry_spans: true,
            fixed_cnt: None,
        }
    }
}

/// Registers every parameter of both sections.
pub fn register_pm(ps: &mut ParamSet, cfg: &PmCfg, vocab: usize, seed: u64) -> Result<()> {
    register_tracenet(ps, &cfg.trace, seed)?;
    register_glyphnet(ps, &cfg.glyph, seed)?;
    register_localise(ps, &cfg.localise, vocab, seed)?;
    let mut rng = stream(seed, "vbf-init", 0);
    ps.register("pmf.vbf.lambda", vec![1], Init::Const(1.5), &mut rng)?;
    ps.register("pmf.vbf.beta", vec![1], Init::Const(0.5), &mut rng)?;
    Ok(())
}

/// Names in one section, in registration-independent sorted order.
pub fn section_names(ps: &ParamSet, prefix: &str) -> Vec<String> {
    let mut v: Vec<String> =
        ps.names().filter(|n| n.starts_with(prefix)).map(String::from).collect();
    v.sort();
    v
}

/// Step count for a route, from the override or the trace classifier.
pub fn estimate_cnt(ps: &ParamSet, cfg: &PmCfg, trace: &Array<f32>) -> Result<usize> {
    if let Some(c) = cfg.fixed_cnt {
        return Ok(c);
    }
    estimate_step_count(ps, &cfg.trace, trace)
}

/// One step of the module. `prev` is the span chosen at the previous
/// step, `psi_feat` the perspective feature map for this step.
pub fn pm_step<E: Elem>(
    t: &mut Tape<E>,
    ps: &ParamSet,
    cfg: &PmCfg,
    plan: &TrajectoryPlan,
    step_t: usize,
    prev: Option<Span>,
    tokens: &[usize],
    psi_feat: VarId,
) -> Result<PriorityOutput> {
    let eff_prev = if cfg.carry_spans { prev } else { None };
    let query = predict_span(plan, step_t, eff_prev);
    let e_v_prime = if cfg.vbf_enabled {
        let e_v = usm_filter(t, psi_feat, &cfg.usm)?;
        let lambda = t.param(ps, "pmf.vbf.lambda")?;
        let beta = t.param(ps, "pmf.vbf.beta")?;
        vbf_boost(t, e_v, psi_feat, lambda, beta, cfg.mode, &cfg.usm)?
    } else {
        psi_feat
    };
    localise_span(t, ps, &cfg.localise, &query, tokens, e_v_prime)
}
