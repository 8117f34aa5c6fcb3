//! 2-D convolution over [C,H,W] maps, zero padding.

use crate::array::Array;
use crate::elem::Elem;
use crate::error::{NumericsError, Result};
use crate::tape::{Tape, VarId};

fn out_extent(n: usize, pad: usize, k: usize, stride: usize) -> Option<usize> {
    let span = n + 2 * pad;
    if span < k || stride == 0 {
        return None;
    }
    Some((span - k) / stride + 1)
}

impl<E: Elem> Tape<E> {
    /// x[C,H,W] * k[F,C,kh,kw] -> [F,H',W'] with H' = (H+2p-kh)/s + 1.
    /// Kernel extents must be odd; padding is zero-fill.
    pub fn conv2d(
        &mut self,
        x: VarId,
        k: VarId,
        bias: Option<VarId>,
        stride: usize,
        pad: usize,
    ) -> Result<VarId> {
        let (vx, vk) = (self.value(x), self.value(k));
        if vx.rank() != 3 || vk.rank() != 4 {
            return Err(NumericsError::Shape {
                op: "conv2d",
                detail: format!("input {:?}, kernel {:?}", vx.shape(), vk.shape()),
            });
        }
        let (c, h, w) = (vx.shape()[0], vx.shape()[1], vx.shape()[2]);
        let (f, kc, kh, kw) = (vk.shape()[0], vk.shape()[1], vk.shape()[2], vk.shape()[3]);
        if kc != c {
            return Err(NumericsError::Shape {
                op: "conv2d",
                detail: format!("channel axes disagree: input C={}, kernel C={}", c, kc),
            });
        }
        if kh % 2 == 0 || kw % 2 == 0 {
            return Err(NumericsError::InvalidArg {
                op: "conv2d",
                detail: format!("kernel extents must be odd, got {}x{}", kh, kw),
            });
        }
        let (oh, ow) = match (out_extent(h, pad, kh, stride), out_extent(w, pad, kw, stride)) {
            (Some(a), Some(b)) => (a, b),
            _ => {
                return Err(NumericsError::InvalidArg {
                    op: "conv2d",
                    detail: format!(
                        "kernel {}x{} stride {} pad {} does not fit {}x{}",
                        kh, kw, stride, pad, h, w
                    ),
                })
            }
        };
        if let Some(b) = bias {
            let vb = self.value(b);
            if vb.rank() != 1 || vb.numel() != f {
                return Err(NumericsError::Shape {
                    op: "conv2d",
                    detail: format!("bias {:?} vs {} filters", vb.shape(), f),
                });
            }
        }

        let xd = vx.data();
        let kd = vk.data();
        let mut data = vec![E::zero(); f * oh * ow];
        for fi in 0..f {
            let kbase = fi * c * kh * kw;
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut acc = E::zero();
                    for ci in 0..c {
                        for ky in 0..kh {
                            let iy = (oy * stride + ky) as isize - pad as isize;
                            if iy < 0 || iy >= h as isize {
                                continue;
                            }
                            let xrow = (ci * h + iy as usize) * w;
                            let krow = kbase + (ci * kh + ky) * kw;
                            for kx in 0..kw {
                                let ix = (ox * stride + kx) as isize - pad as isize;
                                if ix < 0 || ix >= w as isize {
                                    continue;
                                }
                                acc = acc + xd[xrow + ix as usize] * kd[krow + kx];
                            }
                        }
                    }
                    data[(fi * oh + oy) * ow + ox] = acc;
                }
            }
            if let Some(b) = bias {
                let bv = self.value(b).data()[fi];
                for v in &mut data[fi * oh * ow..(fi + 1) * oh * ow] {
                    *v = *v + bv;
                }
            }
        }

        let mut req = self.wants_grad(x) || self.wants_grad(k);
        if let Some(b) = bias {
            req |= self.wants_grad(b);
        }
        let out = self.out("conv2d", Array::new(vec![f, oh, ow], data)?, req)?;
        if req {
            let (gx, gk) = (self.wants_grad(x), self.wants_grad(k));
            let gb = bias.map(|b| (b, self.wants_grad(b)));
            self.record(move |vals, grads| {
                let Some(go) = grads.cloned(out) else { return };
                let xd = vals[x.0].data();
                let kd = vals[k.0].data();
                let mut dx = if gx { vec![E::zero(); c * h * w] } else { Vec::new() };
                let mut dk = if gk { vec![E::zero(); f * c * kh * kw] } else { Vec::new() };
                for fi in 0..f {
                    let kbase = fi * c * kh * kw;
                    for oy in 0..oh {
                        for ox in 0..ow {
                            let g = go[(fi * oh + oy) * ow + ox];
                            if g == E::zero() {
                                continue;
                            }
                            for ci in 0..c {
                                for ky in 0..kh {
                                    let iy = (oy * stride + ky) as isize - pad as isize;
                                    if iy < 0 || iy >= h as isize {
                                        continue;
                                    }
                                    let xrow = (ci * h + iy as usize) * w;
                                    let krow = kbase + (ci * kh + ky) * kw;
                                    for kx in 0..kw {
                                        let ix = (ox * stride + kx) as isize - pad as isize;
                                        if ix < 0 || ix >= w as isize {
                                            continue;
                                        }
                                        if gx {
                                            dx[xrow + ix as usize] =
                                                dx[xrow + ix as usize] + g * kd[krow + kx];
                                        }
                                        if gk {
                                            dk[krow + kx] =
                                                dk[krow + kx] + g * xd[xrow + ix as usize];
                                        }
                                    }
                                }
                            }
                        }
                    }
                }
                if gx {
                    grads.add(x, dx);
                }
                if gk {
                    grads.add(k, dk);
                }
                if let Some((b, true)) = gb {
                    let mut db = vec![E::zero(); f];
                    for fi in 0..f {
                        let mut acc = E::zero();
                        for &g in &go[fi * oh * ow..(fi + 1) * oh * ow] {
                            acc = acc + g;
                        }
                        db[fi] = acc;
                    }
                    grads.add(b, db);
                }
            });
        }
        Ok(out)
    }

    /// Depthwise convolution with one fixed (non-learned) 2-D kernel applied
    /// to every channel, stride 1, zero "same" padding; shape-preserving.
    pub fn depthwise_conv2d_const(&mut self, x: VarId, kernel: &Array<E>) -> Result<VarId> {
        let vx = self.value(x);
        if vx.rank() != 3 || kernel.rank() != 2 {
            return Err(NumericsError::Shape {
                op: "depthwise_conv2d_const",
                detail: format!("input {:?}, kernel {:?}", vx.shape(), kernel.shape()),
            });
        }
        let (kh, kw) = (kernel.shape()[0], kernel.shape()[1]);
        if kh % 2 == 0 || kw % 2 == 0 {
            return Err(NumericsError::InvalidArg {
                op: "depthwise_conv2d_const",
                detail: format!("kernel extents must be odd, got {}x{}", kh, kw),
            });
        }
        let (c, h, w) = (vx.shape()[0], vx.shape()[1], vx.shape()[2]);
        let (py, px) = (kh / 2, kw / 2);
        let xd = vx.data();
        let kd = kernel.data().to_vec();
        let mut data = vec![E::zero(); c * h * w];
        for ci in 0..c {
            for oy in 0..h {
                for ox in 0..w {
                    let mut acc = E::zero();
                    for ky in 0..kh {
                        let iy = oy as isize + ky as isize - py as isize;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        let xrow = (ci * h + iy as usize) * w;
                        for kx in 0..kw {
                            let ix = ox as isize + kx as isize - px as isize;
                            if ix < 0 || ix >= w as isize {
                                continue;
                            }
                            acc = acc + xd[xrow + ix as usize] * kd[ky * kw + kx];
                        }
                    }
                    data[(ci * h + oy) * w + ox] = acc;
                }
            }
        }
        let req = self.wants_grad(x);
        let out = self.out("depthwise_conv2d_const", Array::new(vec![c, h, w], data)?, req)?;
        if req {
            self.record(move |_, grads| {
                let Some(go) = grads.cloned(out) else { return };
                let mut dx = vec![E::zero(); c * h * w];
                for ci in 0..c {
                    for oy in 0..h {
                        for ox in 0..w {
                            let g = go[(ci * h + oy) * w + ox];
                            if g == E::zero() {
                                continue;
                            }
                            for ky in 0..kh {
                                let iy = oy as isize + ky as isize - py as isize;
                                if iy < 0 || iy >= h as isize {
                                    continue;
                                }
                                let xrow = (ci * h + iy as usize) * w;
                                for kx in 0..kw {
                                    let ix = ox as isize + kx as isize - px as isize;
                                    if ix < 0 || ix >= w as isize {
                                        continue;
                                    }
                                    dx[xrow + ix as usize] =
                                        dx[xrow + ix as usize] + g * kd[ky * kw + kx];
                                }
                            }
                        }
                    }
                }
                grads.add(x, dx);
            });
        }
        Ok(out)
    }
}
