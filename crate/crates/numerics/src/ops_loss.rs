//! Softmax and classification losses.

use crate::array::Array;
use crate::elem::Elem;
use crate::error::{NumericsError, Result};
use crate::tape::{Tape, VarId};

fn softmax_row<E: Elem>(row: &[E], out: &mut [E]) {
    let mut mx = row[0];
    for &v in row {
        if v > mx {
            mx = v;
        }
    }
    let mut sum = E::zero();
    for (o, &v) in out.iter_mut().zip(row) {
        let e = (v - mx).exp();
        *o = e;
        sum = sum + e;
    }
    let inv = E::one() / sum;
    for o in out.iter_mut() {
        *o = *o * inv;
    }
}

impl<E: Elem> Tape<E> {
    /// Row-wise softmax of a rank-2 array.
    pub fn softmax_rows(&mut self, a: VarId) -> Result<VarId> {
        let va = self.value(a);
        if va.rank() != 2 {
            return Err(NumericsError::Shape {
                op: "softmax_rows",
                detail: format!("rank-2 expected, got {:?}", va.shape()),
            });
        }
        let (n, d) = (va.shape()[0], va.shape()[1]);
        let mut data = vec![E::zero(); n * d];
        for i in 0..n {
            softmax_row(va.row(i), &mut data[i * d..(i + 1) * d]);
        }
        let req = self.wants_grad(a);
        let out = self.out("softmax_rows", Array::new(vec![n, d], data)?, req)?;
        if req {
            self.record(move |vals, grads| {
                let Some(go) = grads.cloned(out) else { return };
                let y = vals[out.0].data();
                let mut contrib = vec![E::zero(); n * d];
                for i in 0..n {
                    let ys = &y[i * d..(i + 1) * d];
                    let gs = &go[i * d..(i + 1) * d];
                    let mut dot = E::zero();
                    for (a, b) in gs.iter().zip(ys) {
                        dot = dot + *a * *b;
                    }
                    for j in 0..d {
                        contrib[i * d + j] = ys[j] * (gs[j] - dot);
                    }
                }
                grads.add(a, contrib);
            });
        }
        Ok(out)
    }

    /// Mean cross-entropy of row-wise class logits against integer targets.
    pub fn cross_entropy_rows(&mut self, logits: VarId, targets: &[usize]) -> Result<VarId> {
        let vl = self.value(logits);
        if vl.rank() != 2 || vl.shape()[0] != targets.len() {
            return Err(NumericsError::Shape {
                op: "cross_entropy_rows",
                detail: format!("logits {:?} vs {} targets", vl.shape(), targets.len()),
            });
        }
        let (n, k) = (vl.shape()[0], vl.shape()[1]);
        if let Some(&bad) = targets.iter().find(|&&t| t >= k) {
            return Err(NumericsError::InvalidArg {
                op: "cross_entropy_rows",
                detail: format!("target {} out of range for {} classes", bad, k),
            });
        }
        let mut total = E::zero();
        for (i, &tgt) in targets.iter().enumerate() {
            let row = vl.row(i);
            let mut mx = row[0];
            for &v in row {
                if v > mx {
                    mx = v;
                }
            }
            let mut lse = E::zero();
            for &v in row {
                lse = lse + (v - mx).exp();
            }
            total = total + (mx + lse.ln() - row[tgt]);
        }
        let invn = E::from_f64(1.0 / n as f64);
        let req = self.wants_grad(logits);
        let out = self.out("cross_entropy_rows", Array::scalar(total * invn), req)?;
        if req {
            let targets = targets.to_vec();
            self.record(move |vals, grads| {
                let Some(go) = grads.cloned(out) else { return };
                let g = go[0] * invn;
                let vl = &vals[logits.0];
                let mut contrib = vec![E::zero(); n * k];
                for (i, &tgt) in targets.iter().enumerate() {
                    softmax_row(vl.row(i), &mut contrib[i * k..(i + 1) * k]);
                    contrib[i * k + tgt] = contrib[i * k + tgt] - E::one();
                    for v in &mut contrib[i * k..(i + 1) * k] {
                        *v = *v * g;
                    }
                }
                grads.add(logits, contrib);
            });
        }
        Ok(out)
    }

    /// Mean binary cross-entropy of logits (rank 1) against 0/1 targets,
    /// computed in the numerically stable log1p form.
    pub fn bce_with_logits(&mut self, logits: VarId, targets: &[f64]) -> Result<VarId> {
        let vl = self.value(logits);
        if vl.rank() != 1 || vl.numel() != targets.len() {
            return Err(NumericsError::Shape {
                op: "bce_with_logits",
                detail: format!("logits {:?} vs {} targets", vl.shape(), targets.len()),
            });
        }
        let n = targets.len();
        let mut total = E::zero();
        for (&x, &tf) in vl.data().iter().zip(targets) {
            let t = E::from_f64(tf);
            let pos = if x > E::zero() { x } else { E::zero() };
            total = total + pos - x * t + (E::one() + (-x.abs()).exp()).ln();
        }
        let invn = E::from_f64(1.0 / n as f64);
        let req = self.wants_grad(logits);
        let out = self.out("bce_with_logits", Array::scalar(total * invn), req)?;
        if req {
            let targets = targets.to_vec();
            self.record(move |vals, grads| {
                let Some(go) = grads.cloned(out) else { return };
                let g = go[0] * invn;
                let contrib: Vec<E> = vals[logits.0]
                    .data()
                    .iter()
                    .zip(&targets)
                    .map(|(&x, &tf)| {
                        let p = E::one() / (E::one() + (-x).exp());
                        (p - E::from_f64(tf)) * g
                    })
                    .collect();
                grads.add(logits, contrib);
            });
        }
        Ok(out)
    }
}
