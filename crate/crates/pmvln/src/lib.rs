//! Priority-map module: a trace-based trajectory plan over instruction
//! tokens, visual boost filtering of perspective features, and recurrent
//! span localisation, with the pretraining heads that warm its weights.

pub mod error;
pub mod glyphnet;
pub mod localise;
pub mod plan;
pub mod pm;
pub mod tracenet;
pub mod vbf;

pub use error::{PmError, Result};
pub use glyphnet::{geo_logits, glyph_embed, match_logit, register_glyphnet, GlyphCfg};
pub use localise::{
    localise_span, mean_token_embed, register_localise, LocaliseCfg, PriorityOutput,
};
pub use plan::{build_trajectory_plan, predict_span, Span, SpanQuery, TrajectoryPlan};
pub use pm::{
    estimate_cnt, pm_step, register_pm, section_names, PmCfg, SECTION_PMF, SECTION_PMTP,
};
pub use tracenet::{estimate_step_count, register_tracenet, tracenet_logits, TraceNetCfg};
pub use vbf::{usm_filter, vbf_boost, UsmCfg, VbfMode};
