//! Step-count estimation from path-trace rasters: a small strided conv
//! stack with a global-pool linear head.

use numerics::rng::stream;
use numerics::{Array, Elem, Init, ParamSet, Tape, VarId};

use crate::error::{PmError, Result};

#[derive(Debug, Clone, Copy)]
pub struct TraceNetCfg {
    pub in_h: usize,
    pub in_w: usize,
    pub channels: [usize; 3],
    pub m_classes: usize,
}

impl Default for TraceNetCfg {
    fn default() -> Self {
        TraceNetCfg { in_h: 64, in_w: 64, channels: [8, 16, 32], m_classes: 16 }
    }
}

/// Register the trace classifier under the "pmtp." prefix.
pub fn register_tracenet(ps: &mut ParamSet, cfg: &TraceNetCfg, seed: u64) -> Result<()> {
    let mut rng = stream(seed, "pmtp-init", 0);
    let [c1, c2, c3] = cfg.channels;
    let convs = [("pmtp.conv1", 1, c1), ("pmtp.conv2", c1, c2), ("pmtp.conv3", c2, c3)];
    for (name, ci, co) in convs {
        let std = (2.0 / (ci as f64 * 9.0)).sqrt();
        ps.register(&format!("{}.k", name), vec![co, ci, 3, 3], Init::TruncNormal { std }, &mut rng)?;
        // slightly positive so a fully clipped receptive field lands in
        // the linear region instead of exactly on the activation kink
        ps.register(&format!("{}.b", name), vec![co], Init::Const(0.01), &mut rng)?;
    }
    ps.register(
        "pmtp.head.w",
        vec![c3, cfg.m_classes],
        Init::TruncNormal { std: (1.0 / c3 as f64).sqrt() },
        &mut rng,
    )?;
    ps.register("pmtp.head.b", vec![cfg.m_classes], Init::Const(0.0), &mut rng)?;
    Ok(())
}

/// Logits [m_classes] for one [1,H,W] trace raster.
pub fn tracenet_logits<E: Elem>(
    t: &mut Tape<E>,
    ps: &ParamSet,
    cfg: &TraceNetCfg,
    img: VarId,
) -> Result<VarId> {
    let shape = t.value(img).shape().to_vec();
    if shape != [1, cfg.in_h, cfg.in_w] {
        return Err(PmError::Data(format!(
            "trace raster {:?} does not match configured input [1, {}, {}]",
            shape, cfg.in_h, cfg.in_w
        )));
    }
    let mut x = img;
    for name in ["pmtp.conv1", "pmtp.conv2", "pmtp.conv3"] {
        let k = t.param(ps, &format!("{}.k", name))?;
        let b = t.param(ps, &format!("{}.b", name))?;
        x = t.conv2d(x, k, Some(b), 2, 1)?;
        x = t.relu(x)?;
    }
    let c3 = cfg.channels[2];
    let pooled = t.region_mean_pool(x, 1, 1)?;
    let flat = t.reshape(pooled, vec![c3])?;
    let w = t.param(ps, "pmtp.head.w")?;
    let b = t.param(ps, "pmtp.head.b")?;
    Ok(t.linear1(flat, w, Some(b))?)
}

/// Estimated step count in {1..m_classes}: argmax class index plus one.
pub fn estimate_step_count(ps: &ParamSet, cfg: &TraceNetCfg, img: &Array<f32>) -> Result<usize> {
    let mut t: Tape<f32> = Tape::new();
    let x = t.constant(img.clone())?;
    let logits = tracenet_logits(&mut t, ps, cfg, x)?;
    let v = t.value(logits).data();
    let mut best = 0;
    for i in 1..v.len() {
        if v[i] > v[best] {
            best = i;
        }
    }
    Ok(best + 1)
}
