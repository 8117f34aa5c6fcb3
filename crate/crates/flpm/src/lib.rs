//! Fusion framework around the priority-map module: a transformer
//! encoder over instruction summaries and perspective history, a
//! cross-modal stage over the localisation and boosted-map outputs,
//! and a maxout action head.

pub mod embed;
pub mod encoder;
pub mod error;
pub mod head;
pub mod model;
pub mod xmodal;

pub use embed::{
    embed_sequence, persp_feature_map, persp_token, register_embeddings, register_persp_cnn,
    EmbedCfg, PerspCfg,
};
pub use encoder::{
    attn_out, encode_main, layer_forward, register_stack, stack_forward, EncoderConfig,
    MainEncoding,
};
pub use error::{FlpmError, Result};
pub use head::{combine_and_classify, register_head, HeadMode, N_ACTIONS};
pub use model::{register_model, step_logits, FlpmCfg};
pub use xmodal::{
    assemble_joint_rows, cross_modal_attend, fusion_dim, register_xmodal, FusionMode, XmodalCfg,
};
