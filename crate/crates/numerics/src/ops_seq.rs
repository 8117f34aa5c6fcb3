//! Layer norm, multi-head self-attention and the LSTM step.

use crate::array::Array;
use crate::elem::Elem;
use crate::error::{NumericsError, Result};
use crate::tape::{Tape, VarId};

impl<E: Elem> Tape<E> {
    /// Row-wise layer normalisation with learned gain/offset.
    pub fn layer_norm(&mut self, x: VarId, gamma: VarId, beta: VarId, eps: f64) -> Result<VarId> {
        let (vx, vg, vb) = (self.value(x), self.value(gamma), self.value(beta));
        if vx.rank() != 2 || vg.numel() != vx.shape()[1] || vb.numel() != vx.shape()[1] {
            return Err(NumericsError::Shape {
                op: "layer_norm",
                detail: format!("x {:?}, gamma {:?}, beta {:?}", vx.shape(), vg.shape(), vb.shape()),
            });
        }
        let (n, d) = (vx.shape()[0], vx.shape()[1]);
        let epse = E::from_f64(eps);
        let invd = E::from_f64(1.0 / d as f64);
        let mut data = vec![E::zero(); n * d];
        let mut xhat = vec![E::zero(); n * d];
        let mut inv_std = vec![E::zero(); n];
        for i in 0..n {
            let row = vx.row(i);
            let mut mu = E::zero();
            for &v in row {
                mu = mu + v;
            }
            mu = mu * invd;
            let mut var = E::zero();
            for &v in row {
                let dlt = v - mu;
                var = var + dlt * dlt;
            }
            var = var * invd;
            let istd = E::one() / (var + epse).sqrt();
            inv_std[i] = istd;
            for j in 0..d {
                let h = (row[j] - mu) * istd;
                xhat[i * d + j] = h;
                data[i * d + j] = h * vg.data()[j] + vb.data()[j];
            }
        }
        let req = self.wants_grad(x) || self.wants_grad(gamma) || self.wants_grad(beta);
        let out = self.out("layer_norm", Array::new(vec![n, d], data)?, req)?;
        if req {
            let (gx, gg, gb) = (self.wants_grad(x), self.wants_grad(gamma), self.wants_grad(beta));
            self.record(move |vals, grads| {
                let Some(go) = grads.cloned(out) else { return };
                let vg = vals[gamma.0].data();
                if gg {
                    let mut dg = vec![E::zero(); d];
                    for i in 0..n {
                        for j in 0..d {
                            dg[j] = dg[j] + go[i * d + j] * xhat[i * d + j];
                        }
                    }
                    grads.add(gamma, dg);
                }
                if gb {
                    let mut db = vec![E::zero(); d];
                    for i in 0..n {
                        for j in 0..d {
                            db[j] = db[j] + go[i * d + j];
                        }
                    }
                    grads.add(beta, db);
                }
                if gx {
                    let mut dx = vec![E::zero(); n * d];
                    for i in 0..n {
                        let mut mean_dh = E::zero();
                        let mut mean_dh_h = E::zero();
                        for j in 0..d {
                            let dh = go[i * d + j] * vg[j];
                            mean_dh = mean_dh + dh;
                            mean_dh_h = mean_dh_h + dh * xhat[i * d + j];
                        }
                        mean_dh = mean_dh * invd;
                        mean_dh_h = mean_dh_h * invd;
                        for j in 0..d {
                            let dh = go[i * d + j] * vg[j];
                            dx[i * d + j] =
                                inv_std[i] * (dh - mean_dh - xhat[i * d + j] * mean_dh_h);
                        }
                    }
                    grads.add(x, dx);
                }
            });
        }
        Ok(out)
    }

    /// Scaled dot-product attention over pre-projected q/k/v, split into
    /// `heads` equal column blocks. `mask[i*L+j] == false` forbids position i
    /// attending to position j. Each attention row is a probability vector.
    pub fn mhsa_core(
        &mut self,
        q: VarId,
        k: VarId,
        v: VarId,
        heads: usize,
        mask: Option<&[bool]>,
    ) -> Result<VarId> {
        let (vq, vk, vv) = (self.value(q), self.value(k), self.value(v));
        let shape = vq.shape().to_vec();
        if vq.rank() != 2 || vk.shape() != &shape[..] || vv.shape() != &shape[..] {
            return Err(NumericsError::Shape {
                op: "mhsa_core",
                detail: format!("q {:?}, k {:?}, v {:?}", vq.shape(), vk.shape(), vv.shape()),
            });
        }
        let (l, d) = (shape[0], shape[1]);
        if heads == 0 || d % heads != 0 {
            return Err(NumericsError::InvalidArg {
                op: "mhsa_core",
                detail: format!("width {} not divisible by {} heads", d, heads),
            });
        }
        if let Some(m) = mask {
            if m.len() != l * l {
                return Err(NumericsError::Shape {
                    op: "mhsa_core",
                    detail: format!("mask len {} vs L*L {}", m.len(), l * l),
                });
            }
            for i in 0..l {
                if !m[i * l..(i + 1) * l].iter().any(|&a| a) {
                    return Err(NumericsError::InvalidArg {
                        op: "mhsa_core",
                        detail: format!("attention row {} is fully masked", i),
                    });
                }
            }
        }
        let dh = d / heads;
        let scale = E::from_f64(1.0 / (dh as f64).sqrt());
        let mask_owned: Option<Vec<bool>> = mask.map(|m| m.to_vec());

        // probs[head][i*l + j]
        let mut probs = vec![E::zero(); heads * l * l];
        let mut data = vec![E::zero(); l * d];
        for h in 0..heads {
            let col = h * dh;
            for i in 0..l {
                let qrow = &vq.row(i)[col..col + dh];
                let prow = &mut probs[(h * l + i) * l..(h * l + i) * l + l];
                let mut mx = E::from_f64(f64::NEG_INFINITY);
                for j in 0..l {
                    let allowed = mask_owned.as_ref().map_or(true, |m| m[i * l + j]);
                    if !allowed {
                        continue;
                    }
                    let krow = &vk.row(j)[col..col + dh];
                    let mut dot = E::zero();
                    for (a, b) in qrow.iter().zip(krow) {
                        dot = dot + *a * *b;
                    }
                    let s = dot * scale;
                    prow[j] = s;
                    if s > mx {
                        mx = s;
                    }
                }
                let mut sum = E::zero();
                for j in 0..l {
                    let allowed = mask_owned.as_ref().map_or(true, |m| m[i * l + j]);
                    if allowed {
                        let e = (prow[j] - mx).exp();
                        prow[j] = e;
                        sum = sum + e;
                    } else {
                        prow[j] = E::zero();
                    }
                }
                let inv = E::one() / sum;
                for j in 0..l {
                    prow[j] = prow[j] * inv;
                }
                // mix values
                let orow = &mut data[i * d + col..i * d + col + dh];
                for j in 0..l {
                    let p = prow[j];
                    if p == E::zero() {
                        continue;
                    }
                    let vrow = &vv.row(j)[col..col + dh];
                    for (o, &x) in orow.iter_mut().zip(vrow) {
                        *o = *o + p * x;
                    }
                }
            }
        }

        let req = self.wants_grad(q) || self.wants_grad(k) || self.wants_grad(v);
        let out = self.out("mhsa_core", Array::new(vec![l, d], data)?, req)?;
        if req {
            let (gq, gk, gv) = (self.wants_grad(q), self.wants_grad(k), self.wants_grad(v));
            self.record(move |vals, grads| {
                let Some(go) = grads.cloned(out) else { return };
                let (vq, vk, vv) = (&vals[q.0], &vals[k.0], &vals[v.0]);
                let mut dq = vec![E::zero(); l * d];
                let mut dk = vec![E::zero(); l * d];
                let mut dv = vec![E::zero(); l * d];
                let mut dp = vec![E::zero(); l]; // one attention row at a time
                for h in 0..heads {
                    let col = h * dh;
                    for i in 0..l {
                        let prow = &probs[(h * l + i) * l..(h * l + i) * l + l];
                        let gorow = &go[i * d + col..i * d + col + dh];
                        // dV += P^T go ; dP = go V^T
                        for j in 0..l {
                            let p = prow[j];
                            let vrow = &vv.row(j)[col..col + dh];
                            let mut acc = E::zero();
                            for (g, &x) in gorow.iter().zip(vrow) {
                                acc = acc + *g * x;
                            }
                            dp[j] = acc;
                            if p != E::zero() {
                                let dvrow = &mut dv[j * d + col..j * d + col + dh];
                                for (o, &g) in dvrow.iter_mut().zip(gorow) {
                                    *o = *o + p * g;
                                }
                            }
                        }
                        // dS = P .* (dP - sum(dP .* P))
                        let mut dot = E::zero();
                        for j in 0..l {
                            dot = dot + dp[j] * prow[j];
                        }
                        for j in 0..l {
                            let ds = prow[j] * (dp[j] - dot) * scale;
                            if ds == E::zero() {
                                continue;
                            }
                            // dQ_i += ds * K_j ; dK_j += ds * Q_i
                            let krow = &vk.row(j)[col..col + dh];
                            let qrow = &vq.row(i)[col..col + dh];
                            let dqrow = &mut dq[i * d + col..i * d + col + dh];
                            for (o, &x) in dqrow.iter_mut().zip(krow) {
                                *o = *o + ds * x;
                            }
                            let dkrow = &mut dk[j * d + col..j * d + col + dh];
                            for (o, &x) in dkrow.iter_mut().zip(qrow) {
                                *o = *o + ds * x;
                            }
                        }
                    }
                }
                if gq {
                    grads.add(q, dq);
                }
                if gk {
                    grads.add(k, dk);
                }
                if gv {
                    grads.add(v, dv);
                }
            });
        }
        Ok(out)
    }
}

/// Projection weights for one attention block. All matrices are [d,d] in
/// input-major layout; biases are [d].
#[derive(Debug, Clone, Copy)]
pub struct AttnWeights {
    pub wq: VarId,
    pub bq: VarId,
    pub wk: VarId,
    pub bk: VarId,
    pub wv: VarId,
    pub bv: VarId,
    pub wo: VarId,
    pub bo: VarId,
}

/// Full multi-head self-attention: project, attend, project back.
/// With L=1 and no mask this reduces to value-then-output projection.
pub fn mhsa<E: Elem>(
    t: &mut Tape<E>,
    x: VarId,
    w: &AttnWeights,
    heads: usize,
    mask: Option<&[bool]>,
) -> Result<VarId> {
    let q = t.linear(x, w.wq, Some(w.bq))?;
    let k = t.linear(x, w.wk, Some(w.bk))?;
    let v = t.linear(x, w.wv, Some(w.bv))?;
    let core = t.mhsa_core(q, k, v, heads, mask)?;
    t.linear(core, w.wo, Some(w.bo))
}

/// LSTM step weights. Gate layout along the 4*dh axis is [i, f, g, o].
#[derive(Debug, Clone, Copy)]
pub struct LstmWeights {
    /// [d_in, 4*dh]
    pub w_ih: VarId,
    /// [dh, 4*dh]
    pub w_hh: VarId,
    /// [4*dh]
    pub b: VarId,
}

/// One LSTM cell update. Inputs are rank-1: x [d_in], h and c [dh].
/// Returns (h', c').
pub fn lstm_step<E: Elem>(
    t: &mut Tape<E>,
    x: VarId,
    h: VarId,
    c: VarId,
    w: &LstmWeights,
) -> Result<(VarId, VarId)> {
    let dh = t.value(h).numel();
    if t.value(c).numel() != dh {
        return Err(NumericsError::Shape {
            op: "lstm_step",
            detail: format!("h {:?} vs c {:?}", t.value(h).shape(), t.value(c).shape()),
        });
    }
    let zx = t.linear1(x, w.w_ih, Some(w.b))?;
    let zh = t.linear1(h, w.w_hh, None)?;
    let z = t.add(zx, zh)?;
    if t.value(z).numel() != 4 * dh {
        return Err(NumericsError::Shape {
            op: "lstm_step",
            detail: format!("gate vector {:?} vs 4*dh {}", t.value(z).shape(), 4 * dh),
        });
    }
    let zi = t.slice_vec(z, 0, dh)?;
    let zf = t.slice_vec(z, dh, 2 * dh)?;
    let zg = t.slice_vec(z, 2 * dh, 3 * dh)?;
    let zo = t.slice_vec(z, 3 * dh, 4 * dh)?;
    let i = t.sigmoid(zi)?;
    let f = t.sigmoid(zf)?;
    let g = t.tanh(zg)?;
    let o = t.sigmoid(zo)?;
    let fc = t.mul(f, c)?;
    let ig = t.mul(i, g)?;
    let c_next = t.add(fc, ig)?;
    let tc = t.tanh(c_next)?;
    let h_next = t.mul(o, tc)?;
    Ok((h_next, c_next))
}
