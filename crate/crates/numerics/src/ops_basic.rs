//! Elementwise, shape and dense linear-algebra ops.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::array::Array;
use crate::elem::Elem;
use crate::error::{NumericsError, Result};
use crate::tape::{Tape, VarId};

fn shape_err(op: &'static str, detail: String) -> NumericsError {
    NumericsError::Shape { op, detail }
}

/// c[m,n] += a[m,k] @ b[k,n]
pub(crate) fn gemm<E: Elem>(m: usize, k: usize, n: usize, a: &[E], b: &[E], c: &mut [E]) {
    for i in 0..m {
        let crow = &mut c[i * n..(i + 1) * n];
        for l in 0..k {
            let ail = a[i * k + l];
            if ail == E::zero() {
                continue;
            }
            let brow = &b[l * n..(l + 1) * n];
            for (cv, bv) in crow.iter_mut().zip(brow) {
                *cv = *cv + ail * *bv;
            }
        }
    }
}

/// c[m,n] += a[m,k] @ b[n,k]^T
pub(crate) fn gemm_nt<E: Elem>(m: usize, k: usize, n: usize, a: &[E], b: &[E], c: &mut [E]) {
    for i in 0..m {
        let arow = &a[i * k..(i + 1) * k];
        for j in 0..n {
            let brow = &b[j * k..(j + 1) * k];
            let mut acc = E::zero();
            for (av, bv) in arow.iter().zip(brow) {
                acc = acc + *av * *bv;
            }
            c[i * n + j] = c[i * n + j] + acc;
        }
    }
}

/// c[m,n] += a[k,m]^T @ b[k,n]
pub(crate) fn gemm_tn<E: Elem>(m: usize, k: usize, n: usize, a: &[E], b: &[E], c: &mut [E]) {
    for l in 0..k {
        let brow = &b[l * n..(l + 1) * n];
        for i in 0..m {
            let ali = a[l * m + i];
            if ali == E::zero() {
                continue;
            }
            let crow = &mut c[i * n..(i + 1) * n];
            for (cv, bv) in crow.iter_mut().zip(brow) {
                *cv = *cv + ali * *bv;
            }
        }
    }
}

impl<E: Elem> Tape<E> {
    fn binary_same_shape(
        &mut self,
        op: &'static str,
        a: VarId,
        b: VarId,
        f: impl Fn(E, E) -> E,
        // d(out)/da and d(out)/db as functions of (a, b)
        dfa: impl Fn(E, E) -> E + 'static,
        dfb: impl Fn(E, E) -> E + 'static,
    ) -> Result<VarId> {
        let (va, vb) = (self.value(a), self.value(b));
        if va.shape() != vb.shape() {
            return Err(shape_err(op, format!("{:?} vs {:?}", va.shape(), vb.shape())));
        }
        let data: Vec<E> =
            va.data().iter().zip(vb.data()).map(|(&x, &y)| f(x, y)).collect();
        let val = Array::new(va.shape().to_vec(), data)?;
        let req = self.wants_grad(a) || self.wants_grad(b);
        let out = self.out(op, val, req)?;
        if req {
            let (ga, gb) = (self.wants_grad(a), self.wants_grad(b));
            self.record(move |vals, grads| {
                let Some(go) = grads.cloned(out) else { return };
                let (xa, xb) = (vals[a.0].data(), vals[b.0].data());
                if ga {
                    let contrib: Vec<E> = go
                        .iter()
                        .zip(xa.iter().zip(xb))
                        .map(|(&g, (&x, &y))| g * dfa(x, y))
                        .collect();
                    grads.add(a, contrib);
                }
                if gb {
                    let contrib: Vec<E> = go
                        .iter()
                        .zip(xa.iter().zip(xb))
                        .map(|(&g, (&x, &y))| g * dfb(x, y))
                        .collect();
                    grads.add(b, contrib);
                }
            });
        }
        Ok(out)
    }

    fn unary(
        &mut self,
        op: &'static str,
        a: VarId,
        f: impl Fn(E) -> E,
        // derivative as a function of (input, output)
        df: impl Fn(E, E) -> E + 'static,
    ) -> Result<VarId> {
        let va = self.value(a);
        let val = Array::new(va.shape().to_vec(), va.data().iter().map(|&x| f(x)).collect())?;
        let req = self.wants_grad(a);
        let out = self.out(op, val, req)?;
        if req {
            self.record(move |vals, grads| {
                let Some(go) = grads.cloned(out) else { return };
                let contrib: Vec<E> = go
                    .iter()
                    .zip(vals[a.0].data().iter().zip(vals[out.0].data()))
                    .map(|(&g, (&x, &y))| g * df(x, y))
                    .collect();
                grads.add(a, contrib);
            });
        }
        Ok(out)
    }

    pub fn add(&mut self, a: VarId, b: VarId) -> Result<VarId> {
        self.binary_same_shape("add", a, b, |x, y| x + y, |_, _| E::one(), |_, _| E::one())
    }

    pub fn sub(&mut self, a: VarId, b: VarId) -> Result<VarId> {
        self.binary_same_shape(
            "sub",
            a,
            b,
            |x, y| x - y,
            |_, _| E::one(),
            |_, _| -E::one(),
        )
    }

    pub fn mul(&mut self, a: VarId, b: VarId) -> Result<VarId> {
        self.binary_same_shape("mul", a, b, |x, y| x * y, |_, y| y, |x, _| x)
    }

    /// Elementwise max; at ties the gradient goes to the first argument.
    pub fn maximum(&mut self, a: VarId, b: VarId) -> Result<VarId> {
        self.binary_same_shape(
            "maximum",
            a,
            b,
            |x, y| if x >= y { x } else { y },
            |x, y| if x >= y { E::one() } else { E::zero() },
            |x, y| if x >= y { E::zero() } else { E::one() },
        )
    }

    pub fn neg(&mut self, a: VarId) -> Result<VarId> {
        self.unary("neg", a, |x| -x, |_, _| -E::one())
    }

    pub fn scale(&mut self, a: VarId, c: f64) -> Result<VarId> {
        let cc = E::from_f64(c);
        self.unary("scale", a, move |x| x * cc, move |_, _| cc)
    }

    pub fn add_scalar(&mut self, a: VarId, c: f64) -> Result<VarId> {
        let cc = E::from_f64(c);
        self.unary("add_scalar", a, move |x| x + cc, |_, _| E::one())
    }

    pub fn relu(&mut self, a: VarId) -> Result<VarId> {
        self.unary(
            "relu",
            a,
            |x| if x > E::zero() { x } else { E::zero() },
            |x, _| if x > E::zero() { E::one() } else { E::zero() },
        )
    }

    pub fn sigmoid(&mut self, a: VarId) -> Result<VarId> {
        self.unary(
            "sigmoid",
            a,
            |x| E::one() / (E::one() + (-x).exp()),
            |_, y| y * (E::one() - y),
        )
    }

    pub fn tanh(&mut self, a: VarId) -> Result<VarId> {
        self.unary("tanh", a, |x| x.tanh(), |_, y| E::one() - y * y)
    }

    pub fn abs(&mut self, a: VarId) -> Result<VarId> {
        self.unary(
            "abs",
            a,
            |x| x.abs(),
            |x, _| if x >= E::zero() { E::one() } else { -E::one() },
        )
    }

    /// Multiply every element of `a` by a tape scalar `s` (shape [1]).
    pub fn mul_scalar_var(&mut self, a: VarId, s: VarId) -> Result<VarId> {
        let vs = self.value(s);
        if vs.numel() != 1 {
            return Err(shape_err("mul_scalar_var", format!("scalar operand has shape {:?}", vs.shape())));
        }
        let sv = vs.item();
        let va = self.value(a);
        let val = Array::new(va.shape().to_vec(), va.data().iter().map(|&x| x * sv).collect())?;
        let req = self.wants_grad(a) || self.wants_grad(s);
        let out = self.out("mul_scalar_var", val, req)?;
        if req {
            let (ga, gs) = (self.wants_grad(a), self.wants_grad(s));
            self.record(move |vals, grads| {
                let Some(go) = grads.cloned(out) else { return };
                let sv = vals[s.0].item();
                if ga {
                    grads.add(a, go.iter().map(|&g| g * sv).collect());
                }
                if gs {
                    let mut acc = E::zero();
                    for (&g, &x) in go.iter().zip(vals[a.0].data()) {
                        acc = acc + g * x;
                    }
                    grads.add(s, vec![acc]);
                }
            });
        }
        Ok(out)
    }

    /// Scale row i of `a` ([n,d]) by `w[i]` (`w` shape [n]).
    pub fn weight_rows(&mut self, a: VarId, w: VarId) -> Result<VarId> {
        let (va, vw) = (self.value(a), self.value(w));
        if va.rank() != 2 || vw.rank() != 1 || va.shape()[0] != vw.shape()[0] {
            return Err(shape_err(
                "weight_rows",
                format!("{:?} vs {:?}", va.shape(), vw.shape()),
            ));
        }
        let (n, d) = (va.shape()[0], va.shape()[1]);
        let mut data = va.data().to_vec();
        for i in 0..n {
            let wi = vw.data()[i];
            for v in &mut data[i * d..(i + 1) * d] {
                *v = *v * wi;
            }
        }
        let req = self.wants_grad(a) || self.wants_grad(w);
        let out = self.out("weight_rows", Array::new(vec![n, d], data)?, req)?;
        if req {
            let (ga, gw) = (self.wants_grad(a), self.wants_grad(w));
            self.record(move |vals, grads| {
                let Some(go) = grads.cloned(out) else { return };
                let (xa, xw) = (vals[a.0].data(), vals[w.0].data());
                if ga {
                    let mut contrib = go.clone();
                    for i in 0..n {
                        let wi = xw[i];
                        for v in &mut contrib[i * d..(i + 1) * d] {
                            *v = *v * wi;
                        }
                    }
                    grads.add(a, contrib);
                }
                if gw {
                    let mut contrib = vec![E::zero(); n];
                    for i in 0..n {
                        let mut acc = E::zero();
                        for j in 0..d {
                            acc = acc + go[i * d + j] * xa[i * d + j];
                        }
                        contrib[i] = acc;
                    }
                    grads.add(w, contrib);
                }
            });
        }
        Ok(out)
    }

    pub fn reshape(&mut self, a: VarId, shape: Vec<usize>) -> Result<VarId> {
        let va = self.value(a);
        let val = Array::new(shape, va.data().to_vec())?;
        let req = self.wants_grad(a);
        let out = self.out("reshape", val, req)?;
        if req {
            self.record(move |_, grads| {
                let Some(go) = grads.cloned(out) else { return };
                grads.add(a, go);
            });
        }
        Ok(out)
    }

    /// Concatenate rank-2 arrays with equal column counts along axis 0.
    pub fn concat_rows(&mut self, parts: &[VarId]) -> Result<VarId> {
        if parts.is_empty() {
            return Err(NumericsError::InvalidArg { op: "concat_rows", detail: "no inputs".into() });
        }
        let d = self.value(parts[0]).shape().get(1).copied().ok_or_else(|| {
            shape_err("concat_rows", format!("rank-2 expected, got {:?}", self.value(parts[0]).shape()))
        })?;
        let mut data = Vec::new();
        let mut rows = Vec::with_capacity(parts.len());
        let mut req = false;
        for &p in parts {
            let vp = self.value(p);
            if vp.rank() != 2 || vp.shape()[1] != d {
                return Err(shape_err("concat_rows", format!("{:?} vs cols {}", vp.shape(), d)));
            }
            rows.push(vp.shape()[0]);
            data.extend_from_slice(vp.data());
            req |= self.wants_grad(p);
        }
        let n: usize = rows.iter().sum();
        let out = self.out("concat_rows", Array::new(vec![n, d], data)?, req)?;
        if req {
            let parts: Vec<VarId> = parts.to_vec();
            self.record(move |_, grads| {
                let Some(go) = grads.cloned(out) else { return };
                let mut off = 0;
                for (&p, &r) in parts.iter().zip(&rows) {
                    grads.add(p, go[off * d..(off + r) * d].to_vec());
                    off += r;
                }
            });
        }
        Ok(out)
    }

    /// Stack rank-1 arrays of equal length into a rank-2 array.
    pub fn stack_vecs(&mut self, parts: &[VarId]) -> Result<VarId> {
        if parts.is_empty() {
            return Err(NumericsError::InvalidArg { op: "stack_vecs", detail: "no inputs".into() });
        }
        let d = self.value(parts[0]).numel();
        let mut data = Vec::with_capacity(parts.len() * d);
        let mut req = false;
        for &p in parts {
            let vp = self.value(p);
            if vp.rank() != 1 || vp.numel() != d {
                return Err(shape_err("stack_vecs", format!("{:?} vs len {}", vp.shape(), d)));
            }
            data.extend_from_slice(vp.data());
            req |= self.wants_grad(p);
        }
        let out = self.out("stack_vecs", Array::new(vec![parts.len(), d], data)?, req)?;
        if req {
            let parts: Vec<VarId> = parts.to_vec();
            self.record(move |_, grads| {
                let Some(go) = grads.cloned(out) else { return };
                for (i, &p) in parts.iter().enumerate() {
                    grads.add(p, go[i * d..(i + 1) * d].to_vec());
                }
            });
        }
        Ok(out)
    }

    /// Rows `lo..hi` of a rank-2 array.
    pub fn slice_rows(&mut self, a: VarId, lo: usize, hi: usize) -> Result<VarId> {
        let va = self.value(a);
        if va.rank() != 2 || hi > va.shape()[0] || lo >= hi {
            return Err(shape_err(
                "slice_rows",
                format!("rows {}..{} of {:?}", lo, hi, va.shape()),
            ));
        }
        let (n, d) = (va.shape()[0], va.shape()[1]);
        let val = Array::new(vec![hi - lo, d], va.data()[lo * d..hi * d].to_vec())?;
        let req = self.wants_grad(a);
        let out = self.out("slice_rows", val, req)?;
        if req {
            self.record(move |_, grads| {
                let Some(go) = grads.cloned(out) else { return };
                let mut contrib = vec![E::zero(); n * d];
                contrib[lo * d..hi * d].copy_from_slice(&go);
                grads.add(a, contrib);
            });
        }
        Ok(out)
    }

    /// Row `i` of a rank-2 array as a rank-1 array.
    pub fn row_vec(&mut self, a: VarId, i: usize) -> Result<VarId> {
        let sliced = self.slice_rows(a, i, i + 1)?;
        let d = self.value(sliced).shape()[1];
        self.reshape(sliced, vec![d])
    }

    /// Elements `lo..hi` of a rank-1 array.
    pub fn slice_vec(&mut self, a: VarId, lo: usize, hi: usize) -> Result<VarId> {
        let va = self.value(a);
        if va.rank() != 1 || hi > va.numel() || lo >= hi {
            return Err(shape_err("slice_vec", format!("{}..{} of {:?}", lo, hi, va.shape())));
        }
        let n = va.numel();
        let val = Array::new(vec![hi - lo], va.data()[lo..hi].to_vec())?;
        let req = self.wants_grad(a);
        let out = self.out("slice_vec", val, req)?;
        if req {
            self.record(move |_, grads| {
                let Some(go) = grads.cloned(out) else { return };
                let mut contrib = vec![E::zero(); n];
                contrib[lo..hi].copy_from_slice(&go);
                grads.add(a, contrib);
            });
        }
        Ok(out)
    }

    pub fn concat_vecs(&mut self, parts: &[VarId]) -> Result<VarId> {
        if parts.is_empty() {
            return Err(NumericsError::InvalidArg { op: "concat_vecs", detail: "no inputs".into() });
        }
        let mut data = Vec::new();
        let mut lens = Vec::with_capacity(parts.len());
        let mut req = false;
        for &p in parts {
            let vp = self.value(p);
            if vp.rank() != 1 {
                return Err(shape_err("concat_vecs", format!("rank-1 expected, got {:?}", vp.shape())));
            }
            lens.push(vp.numel());
            data.extend_from_slice(vp.data());
            req |= self.wants_grad(p);
        }
        let total = data.len();
        let out = self.out("concat_vecs", Array::new(vec![total], data)?, req)?;
        if req {
            let parts: Vec<VarId> = parts.to_vec();
            self.record(move |_, grads| {
                let Some(go) = grads.cloned(out) else { return };
                let mut off = 0;
                for (&p, &l) in parts.iter().zip(&lens) {
                    grads.add(p, go[off..off + l].to_vec());
                    off += l;
                }
            });
        }
        Ok(out)
    }

    /// Mean over rows: [n,d] -> [d].
    pub fn mean_rows(&mut self, a: VarId) -> Result<VarId> {
        let va = self.value(a);
        if va.rank() != 2 {
            return Err(shape_err("mean_rows", format!("rank-2 expected, got {:?}", va.shape())));
        }
        let (n, d) = (va.shape()[0], va.shape()[1]);
        let inv = E::from_f64(1.0 / n as f64);
        let mut data = vec![E::zero(); d];
        for i in 0..n {
            for (acc, &v) in data.iter_mut().zip(va.row(i)) {
                *acc = *acc + v * inv;
            }
        }
        let req = self.wants_grad(a);
        let out = self.out("mean_rows", Array::new(vec![d], data)?, req)?;
        if req {
            self.record(move |_, grads| {
                let Some(go) = grads.cloned(out) else { return };
                let mut contrib = vec![E::zero(); n * d];
                for i in 0..n {
                    for j in 0..d {
                        contrib[i * d + j] = go[j] * inv;
                    }
                }
                grads.add(a, contrib);
            });
        }
        Ok(out)
    }

    pub fn mean_all(&mut self, a: VarId) -> Result<VarId> {
        let va = self.value(a);
        let n = va.numel();
        let inv = E::from_f64(1.0 / n as f64);
        let mut acc = E::zero();
        for &v in va.data() {
            acc = acc + v;
        }
        let req = self.wants_grad(a);
        let out = self.out("mean_all", Array::scalar(acc * inv), req)?;
        if req {
            self.record(move |_, grads| {
                let Some(go) = grads.cloned(out) else { return };
                grads.add(a, vec![go[0] * inv; n]);
            });
        }
        Ok(out)
    }

    pub fn sum_all(&mut self, a: VarId) -> Result<VarId> {
        let va = self.value(a);
        let n = va.numel();
        let mut acc = E::zero();
        for &v in va.data() {
            acc = acc + v;
        }
        let req = self.wants_grad(a);
        let out = self.out("sum_all", Array::scalar(acc), req)?;
        if req {
            self.record(move |_, grads| {
                let Some(go) = grads.cloned(out) else { return };
                grads.add(a, vec![go[0]; n]);
            });
        }
        Ok(out)
    }

    pub fn matmul(&mut self, a: VarId, b: VarId) -> Result<VarId> {
        let (va, vb) = (self.value(a), self.value(b));
        if va.rank() != 2 || vb.rank() != 2 || va.shape()[1] != vb.shape()[0] {
            return Err(shape_err("matmul", format!("{:?} @ {:?}", va.shape(), vb.shape())));
        }
        let (m, k, n) = (va.shape()[0], va.shape()[1], vb.shape()[1]);
        let mut data = vec![E::zero(); m * n];
        gemm(m, k, n, va.data(), vb.data(), &mut data);
        let req = self.wants_grad(a) || self.wants_grad(b);
        let out = self.out("matmul", Array::new(vec![m, n], data)?, req)?;
        if req {
            let (ga, gb) = (self.wants_grad(a), self.wants_grad(b));
            self.record(move |vals, grads| {
                let Some(go) = grads.cloned(out) else { return };
                if ga {
                    let mut da = vec![E::zero(); m * k];
                    gemm_nt(m, n, k, &go, vals[b.0].data(), &mut da);
                    grads.add(a, da);
                }
                if gb {
                    let mut db = vec![E::zero(); k * n];
                    gemm_tn(k, m, n, vals[a.0].data(), &go, &mut db);
                    grads.add(b, db);
                }
            });
        }
        Ok(out)
    }

    /// x[n,din] @ w[din,dout] + b, bias broadcast over rows.
    pub fn linear(&mut self, x: VarId, w: VarId, b: Option<VarId>) -> Result<VarId> {
        let (vx, vw) = (self.value(x), self.value(w));
        if vx.rank() != 2 || vw.rank() != 2 || vx.shape()[1] != vw.shape()[0] {
            return Err(shape_err("linear", format!("{:?} @ {:?}", vx.shape(), vw.shape())));
        }
        let (n, din, dout) = (vx.shape()[0], vx.shape()[1], vw.shape()[1]);
        let mut data = vec![E::zero(); n * dout];
        gemm(n, din, dout, vx.data(), vw.data(), &mut data);
        let mut req = self.wants_grad(x) || self.wants_grad(w);
        if let Some(bi) = b {
            let vb = self.value(bi);
            if vb.rank() != 1 || vb.numel() != dout {
                return Err(shape_err("linear", format!("bias {:?} vs dout {}", vb.shape(), dout)));
            }
            for i in 0..n {
                for (v, &bv) in data[i * dout..(i + 1) * dout].iter_mut().zip(vb.data()) {
                    *v = *v + bv;
                }
            }
            req |= self.wants_grad(bi);
        }
        let out = self.out("linear", Array::new(vec![n, dout], data)?, req)?;
        if req {
            let (gx, gw) = (self.wants_grad(x), self.wants_grad(w));
            let gb = b.map(|bi| (bi, self.wants_grad(bi)));
            self.record(move |vals, grads| {
                let Some(go) = grads.cloned(out) else { return };
                if gx {
                    let mut dx = vec![E::zero(); n * din];
                    gemm_nt(n, dout, din, &go, vals[w.0].data(), &mut dx);
                    grads.add(x, dx);
                }
                if gw {
                    let mut dw = vec![E::zero(); din * dout];
                    gemm_tn(din, n, dout, vals[x.0].data(), &go, &mut dw);
                    grads.add(w, dw);
                }
                if let Some((bi, true)) = gb {
                    let mut db = vec![E::zero(); dout];
                    for i in 0..n {
                        for (acc, &g) in db.iter_mut().zip(&go[i * dout..(i + 1) * dout]) {
                            *acc = *acc + g;
                        }
                    }
                    grads.add(bi, db);
                }
            });
        }
        Ok(out)
    }

    /// Rank-1 convenience: x[din] @ w[din,dout] + b -> [dout].
    pub fn linear1(&mut self, x: VarId, w: VarId, b: Option<VarId>) -> Result<VarId> {
        let din = self.value(x).numel();
        let x2 = self.reshape(x, vec![1, din])?;
        let y2 = self.linear(x2, w, b)?;
        let dout = self.value(y2).shape()[1];
        self.reshape(y2, vec![dout])
    }

    /// Embedding lookup: rows of `table` ([v,d]) selected by `ids`.
    pub fn gather_rows(&mut self, table: VarId, ids: &[usize]) -> Result<VarId> {
        let vt = self.value(table);
        if vt.rank() != 2 {
            return Err(shape_err("gather_rows", format!("rank-2 expected, got {:?}", vt.shape())));
        }
        let (v, d) = (vt.shape()[0], vt.shape()[1]);
        if let Some(&bad) = ids.iter().find(|&&i| i >= v) {
            return Err(NumericsError::InvalidArg {
                op: "gather_rows",
                detail: format!("id {} out of range for table with {} rows", bad, v),
            });
        }
        let mut data = Vec::with_capacity(ids.len() * d);
        for &i in ids {
            data.extend_from_slice(vt.row(i));
        }
        let req = self.wants_grad(table);
        let out = self.out("gather_rows", Array::new(vec![ids.len(), d], data)?, req)?;
        if req {
            let ids = ids.to_vec();
            self.record(move |_, grads| {
                let Some(go) = grads.cloned(out) else { return };
                let mut contrib = vec![E::zero(); v * d];
                for (r, &i) in ids.iter().enumerate() {
                    for j in 0..d {
                        contrib[i * d + j] = contrib[i * d + j] + go[r * d + j];
                    }
                }
                grads.add(table, contrib);
            });
        }
        Ok(out)
    }

    /// Mean-pool a [C,H,W] map over a gh x gw grid of equal-ish regions.
    /// Output layout: region-major, channel-minor -> [gh*gw*C].
    pub fn region_mean_pool(&mut self, a: VarId, gh: usize, gw: usize) -> Result<VarId> {
        let va = self.value(a);
        if va.rank() != 3 || gh == 0 || gw == 0 {
            return Err(shape_err("region_mean_pool", format!("{:?} into {}x{}", va.shape(), gh, gw)));
        }
        let (c, h, w) = (va.shape()[0], va.shape()[1], va.shape()[2]);
        if gh > h || gw > w {
            return Err(shape_err("region_mean_pool", format!("grid {}x{} over {}x{}", gh, gw, h, w)));
        }
        let bounds = |n: usize, g: usize, i: usize| -> (usize, usize) {
            (i * n / g, (i + 1) * n / g)
        };
        let mut data = vec![E::zero(); gh * gw * c];
        for gy in 0..gh {
            let (y0, y1) = bounds(h, gh, gy);
            for gx in 0..gw {
                let (x0, x1) = bounds(w, gw, gx);
                let inv = E::from_f64(1.0 / ((y1 - y0) * (x1 - x0)) as f64);
                for ch in 0..c {
                    let mut acc = E::zero();
                    for y in y0..y1 {
                        for x in x0..x1 {
                            acc = acc + va.at3(ch, y, x);
                        }
                    }
                    data[(gy * gw + gx) * c + ch] = acc * inv;
                }
            }
        }
        let req = self.wants_grad(a);
        let out = self.out("region_mean_pool", Array::new(vec![gh * gw * c], data)?, req)?;
        if req {
            self.record(move |_, grads| {
                let Some(go) = grads.cloned(out) else { return };
                let mut contrib = vec![E::zero(); c * h * w];
                for gy in 0..gh {
                    let (y0, y1) = bounds(h, gh, gy);
                    for gx in 0..gw {
                        let (x0, x1) = bounds(w, gw, gx);
                        let inv = E::from_f64(1.0 / ((y1 - y0) * (x1 - x0)) as f64);
                        for ch in 0..c {
                            let g = go[(gy * gw + gx) * c + ch] * inv;
                            for y in y0..y1 {
                                for x in x0..x1 {
                                    let idx = (ch * h + y) * w + x;
                                    contrib[idx] = contrib[idx] + g;
                                }
                            }
                        }
                    }
                }
                grads.add(a, contrib);
            });
        }
        Ok(out)
    }

    /// Inverted dropout: keep with probability 1-p and scale kept values by
    /// 1/(1-p). Callers skip this op entirely in evaluation mode.
    pub fn dropout(&mut self, a: VarId, p: f64, rng: &mut ChaCha8Rng) -> Result<VarId> {
        if !(0.0..1.0).contains(&p) {
            return Err(NumericsError::InvalidArg {
                op: "dropout",
                detail: format!("rate {} outside [0,1)", p),
            });
        }
        if p == 0.0 {
            return Ok(a);
        }
        let va = self.value(a);
        let keep = E::from_f64(1.0 / (1.0 - p));
        let mask: Vec<bool> = (0..va.numel()).map(|_| rng.gen::<f64>() >= p).collect();
        let data: Vec<E> = va
            .data()
            .iter()
            .zip(&mask)
            .map(|(&v, &m)| if m { v * keep } else { E::zero() })
            .collect();
        let val = Array::new(va.shape().to_vec(), data)?;
        let req = self.wants_grad(a);
        let out = self.out("dropout", val, req)?;
        if req {
            self.record(move |_, grads| {
                let Some(go) = grads.cloned(out) else { return };
                let contrib: Vec<E> = go
                    .iter()
                    .zip(&mask)
                    .map(|(&g, &m)| if m { g * keep } else { E::zero() })
                    .collect();
                grads.add(a, contrib);
            });
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    fn arr2(rows: usize, cols: usize, vals: &[f64]) -> Array<f64> {
        Array::new(vec![rows, cols], vals.to_vec()).unwrap()
    }

    #[test]
    fn matmul_matches_hand_result() {
        let mut t: Tape<f64> = Tape::new();
        let a = t.var(arr2(2, 3, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0])).unwrap();
        let b = t.var(arr2(3, 2, &[7.0, 8.0, 9.0, 10.0, 11.0, 12.0])).unwrap();
        let c = t.matmul(a, b).unwrap();
        assert_eq!(t.value(c).data(), &[58.0, 64.0, 139.0, 154.0]);
    }

    #[test]
    fn gather_rows_scatter_adds_repeats() {
        let mut t: Tape<f64> = Tape::new();
        let table = t.var(arr2(3, 2, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0])).unwrap();
        let picked = t.gather_rows(table, &[1, 1, 0]).unwrap();
        let loss = t.sum_all(picked).unwrap();
        t.backward(loss).unwrap();
        // row 1 picked twice, row 0 once, row 2 never
        assert_eq!(t.grad(table).unwrap(), &[1.0, 1.0, 2.0, 2.0, 0.0, 0.0]);
    }

    #[test]
    fn dropout_is_inverted_and_masked() {
        let mut t: Tape<f64> = Tape::new();
        let x = t.var(Array::full(vec![1000], 1.0)).unwrap();
        let mut rng = stream(11, "dropout", 0);
        let y = t.dropout(x, 0.25, &mut rng).unwrap();
        let data = t.value(y).data();
        let kept = data.iter().filter(|&&v| v != 0.0).count();
        assert!(data.iter().all(|&v| v == 0.0 || (v - 1.0 / 0.75).abs() < 1e-12));
        // Keep rate should be near 75%.
        assert!((kept as f64 / 1000.0 - 0.75).abs() < 0.05, "kept {}", kept);
        // Expected value preserved to within sampling noise.
        let mean: f64 = data.iter().sum::<f64>() / 1000.0;
        assert!((mean - 1.0).abs() < 0.08, "mean {}", mean);
    }

    #[test]
    fn region_pool_means_quadrants() {
        let mut t: Tape<f64> = Tape::new();
        // 1 channel, 2x2: quadrants of a 2x2 grid are the 4 single pixels.
        let x = t.var(Array::new(vec![1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap()).unwrap();
        let y = t.region_mean_pool(x, 2, 2).unwrap();
        assert_eq!(t.value(y).data(), &[1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn maximum_routes_gradient_to_larger_input() {
        let mut t: Tape<f64> = Tape::new();
        let a = t.var(Array::new(vec![2], vec![3.0, 1.0]).unwrap()).unwrap();
        let b = t.var(Array::new(vec![2], vec![2.0, 5.0]).unwrap()).unwrap();
        let m = t.maximum(a, b).unwrap();
        let loss = t.sum_all(m).unwrap();
        t.backward(loss).unwrap();
        assert_eq!(t.grad(a).unwrap(), &[1.0, 0.0]);
        assert_eq!(t.grad(b).unwrap(), &[0.0, 1.0]);
    }
}
