//! AdamW with decoupled weight decay, plus global-norm gradient clipping.

use std::collections::BTreeMap;

use crate::array::Array;
use crate::elem::Elem;
use crate::error::{NumericsError, Result};
use crate::params::ParamSet;

/// Convert a gradient map from the tape's element type to the f32 master
/// precision the optimizer works in.
pub fn grads_to_f32<E: Elem>(grads: &BTreeMap<String, Array<E>>) -> BTreeMap<String, Array<f32>> {
    grads.iter().map(|(k, v)| (k.clone(), v.to_f32())).collect()
}

/// Scale all gradients so their joint Euclidean norm is at most `max_norm`.
/// Returns the norm before clipping.
pub fn clip_global_norm(grads: &mut BTreeMap<String, Array<f32>>, max_norm: f32) -> f32 {
    let mut sq = 0.0f64;
    for g in grads.values() {
        for &v in g.data() {
            sq += (v as f64) * (v as f64);
        }
    }
    let norm = sq.sqrt() as f32;
    if norm > max_norm && norm > 0.0 {
        let scale = max_norm / norm;
        for g in grads.values_mut() {
            for v in g.data_mut() {
                *v *= scale;
            }
        }
    }
    norm
}

/// Per-parameter first/second moment buffers.
#[derive(Debug, Clone, Default)]
pub struct Moments {
    pub m: Vec<f32>,
    pub v: Vec<f32>,
}

/// AdamW. Weight decay is decoupled from the gradient and applied
/// multiplicatively to the parameter before the adaptive update, so decay
/// strength never passes through the moment estimates.
#[derive(Debug, Clone)]
pub struct AdamW {
    pub lr: f32,
    pub beta1: f32,
    pub beta2: f32,
    pub eps: f32,
    pub weight_decay: f32,
    /// Completed steps; bias correction uses t+1 on the next call.
    pub t: u64,
    pub state: BTreeMap<String, Moments>,
}

impl AdamW {
    pub fn new(lr: f32, weight_decay: f32) -> Self {
        AdamW {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay,
            t: 0,
            state: BTreeMap::new(),
        }
    }

    /// Apply one update. Parameters missing from `grads` are treated as
    /// having zero gradient: they still decay and their momentum coasts.
    pub fn step(
        &mut self,
        params: &mut ParamSet,
        grads: &BTreeMap<String, Array<f32>>,
    ) -> Result<()> {
        for (name, g) in grads {
            let p = params.get(name)?;
            if p.shape() != g.shape() {
                return Err(NumericsError::InvalidArg {
                    op: "adamw",
                    detail: format!(
                        "gradient shape {:?} vs parameter {:?} for {}",
                        g.shape(),
                        p.shape(),
                        name
                    ),
                });
            }
        }
        self.t += 1;
        let t = self.t as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        let names: Vec<String> = params.names().map(String::from).collect();
        for name in names {
            let zero;
            let g = match grads.get(&name) {
                Some(g) => g.data(),
                None => {
                    zero = vec![0.0f32; params.get(&name)?.numel()];
                    &zero
                }
            };
            let p = params.get_mut(&name)?;
            let st = self.state.entry(name.clone()).or_insert_with(|| Moments {
                m: vec![0.0; p.numel()],
                v: vec![0.0; p.numel()],
            });
            if st.m.len() != p.numel() {
                return Err(NumericsError::InvalidArg {
                    op: "adamw",
                    detail: format!("stale optimizer state for {}", name),
                });
            }
            let decay = 1.0 - self.lr * self.weight_decay;
            for (i, w) in p.data_mut().iter_mut().enumerate() {
                *w *= decay;
                let gi = g[i];
                st.m[i] = self.beta1 * st.m[i] + (1.0 - self.beta1) * gi;
                st.v[i] = self.beta2 * st.v[i] + (1.0 - self.beta2) * gi * gi;
                let mhat = st.m[i] / bc1;
                let vhat = st.v[i] / bc2;
                *w -= self.lr * mhat / (vhat.sqrt() + self.eps);
            }
        }
        Ok(())
    }
}
