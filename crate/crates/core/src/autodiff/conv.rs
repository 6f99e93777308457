use super::gemm::{gemm, Mat};
use super::{Accumulator, Graph, Op, Var};
use crate::tensor::{Dims, Tensor, TensorError};

#[derive(Clone, Copy)]
struct Geometry {
    cin: usize,
    h: usize,
    w: usize,
    kh: usize,
    kw: usize,
    stride: usize,
    pad: usize,
    ho: usize,
    wo: usize,
}

impl Geometry {
    fn k(&self) -> usize {
        self.cin * self.kh * self.kw
    }

    fn p(&self) -> usize {
        self.ho * self.wo
    }

    fn pointwise(&self) -> bool {
        self.kh == 1 && self.kw == 1 && self.stride == 1 && self.pad == 0
    }

    /// Output columns `ox` whose input column `ox*stride + kj - pad` is in range.
    fn valid_cols(&self, kj: usize) -> (usize, usize) {
        let s = self.stride as isize;
        let off = kj as isize - self.pad as isize;
        let lo = if off >= 0 { 0 } else { (-off + s - 1) / s };
        let hi = (self.w as isize - 1 - off).div_euclid(s) + 1;
        let hi = hi.clamp(0, self.wo as isize);
        (lo.min(hi) as usize, hi as usize)
    }
}

fn im2col(x: &[f32], g: &Geometry, cols: &mut [f32]) {
    let p = g.p();
    for c in 0..g.cin {
        let plane = &x[c * g.h * g.w..(c + 1) * g.h * g.w];
        for ki in 0..g.kh {
            for kj in 0..g.kw {
                let row = ((c * g.kh + ki) * g.kw + kj) * p;
                let (lo, hi) = g.valid_cols(kj);
                for oy in 0..g.ho {
                    let dst = &mut cols[row + oy * g.wo..row + (oy + 1) * g.wo];
                    let iy = (oy * g.stride + ki) as isize - g.pad as isize;
                    if iy < 0 || iy >= g.h as isize || lo >= hi {
                        dst.fill(0.0);
                        continue;
                    }
                    let src = &plane[iy as usize * g.w..(iy as usize + 1) * g.w];
                    dst[..lo].fill(0.0);
                    dst[hi..].fill(0.0);
                    let ix0 = lo * g.stride + kj - g.pad;
                    if g.stride == 1 {
                        dst[lo..hi].copy_from_slice(&src[ix0..ix0 + (hi - lo)]);
                    } else {
                        for (i, d) in dst[lo..hi].iter_mut().enumerate() {
                            *d = src[ix0 + i * g.stride];
                        }
                    }
                }
            }
        }
    }
}

fn col2im(cols: &[f32], g: &Geometry, x: &mut [f32]) {
    let p = g.p();
    for c in 0..g.cin {
        let plane = &mut x[c * g.h * g.w..(c + 1) * g.h * g.w];
        for ki in 0..g.kh {
            for kj in 0..g.kw {
                let row = ((c * g.kh + ki) * g.kw + kj) * p;
                let (lo, hi) = g.valid_cols(kj);
                if lo >= hi {
                    continue;
                }
                for oy in 0..g.ho {
                    let iy = (oy * g.stride + ki) as isize - g.pad as isize;
                    if iy < 0 || iy >= g.h as isize {
                        continue;
                    }
                    let src = &cols[row + oy * g.wo + lo..row + oy * g.wo + hi];
                    let dst = &mut plane[iy as usize * g.w..(iy as usize + 1) * g.w];
                    let ix0 = lo * g.stride + kj - g.pad;
                    for (i, s) in src.iter().enumerate() {
                        dst[ix0 + i * g.stride] += *s;
                    }
                }
            }
        }
    }
}

fn geometry(x: Dims, w: Dims, stride: usize, pad: usize) -> Result<Geometry, TensorError> {
    let [_, cin, h, wd] = x.0;
    let [_, wcin, kh, kw] = w.0;
    if cin != wcin {
        return Err(TensorError::shape(
            "conv2d",
            format!("input {x} has {cin} channels, weight {w} expects {wcin}"),
        ));
    }
    if stride == 0 {
        return Err(TensorError::invalid("conv2d", "stride must be >= 1"));
    }
    if h + 2 * pad < kh || wd + 2 * pad < kw {
        return Err(TensorError::shape(
            "conv2d",
            format!("kernel {kh}x{kw} larger than padded input {x} (pad {pad})"),
        ));
    }
    let ho = (h + 2 * pad - kh) / stride + 1;
    let wo = (wd + 2 * pad - kw) / stride + 1;
    Ok(Geometry {
        cin,
        h,
        w: wd,
        kh,
        kw,
        stride,
        pad,
        ho,
        wo,
    })
}

impl Graph {
    /// 2-D cross-correlation with zero padding.
    ///
    /// `w` is `Cout x Cin x kh x kw`; `b`, when present, holds `Cout` values in
    /// any shape.
    pub fn conv2d(
        &mut self,
        x: Var,
        w: Var,
        b: Option<Var>,
        stride: usize,
        pad: usize,
    ) -> Result<Var, TensorError> {
        let xd = self.dims(x);
        let wd = self.dims(w);
        let g = geometry(xd, wd, stride, pad)?;
        let cout = wd.batch();
        if let Some(b) = b {
            if self.value(b).numel() != cout {
                return Err(TensorError::shape(
                    "conv2d",
                    format!("bias has {} values for {cout} output channels", self.value(b).numel()),
                ));
            }
        }
        let batch = xd.batch();
        let mut out = Tensor::zeros(Dims::new(batch, cout, g.ho, g.wo));
        let (k, p) = (g.k(), g.p());
        let mut cols = if g.pointwise() { Vec::new() } else { vec![0.0; k * p] };
        let xv = self.value(x);
        let wv = self.value(w).data();
        for bi in 0..batch {
            let xs = xv.sample(bi);
            let cols_ref: &[f32] = if g.pointwise() {
                xs
            } else {
                im2col(xs, &g, &mut cols);
                &cols
            };
            gemm(cout, k, p, Mat::n(wv), Mat::n(cols_ref), 0.0, out.sample_mut(bi));
        }
        if let Some(b) = b {
            let bias = self.value(b).data().to_vec();
            for bi in 0..batch {
                for (c, &bc) in bias.iter().enumerate() {
                    out.plane_mut(bi, c).iter_mut().for_each(|v| *v += bc);
                }
            }
        }
        Ok(self.push(
            out,
            Op::Conv2d {
                x,
                w,
                b,
                stride,
                pad,
            },
        ))
    }
}

#[allow(clippy::too_many_arguments)]
pub(super) fn backward(
    graph: &Graph,
    x: Var,
    w: Var,
    b: Option<Var>,
    stride: usize,
    pad: usize,
    grad: &Tensor,
    acc: &mut Accumulator<'_>,
) {
    let xv = graph.value(x);
    let wv = graph.value(w);
    let g = geometry(xv.dims(), wv.dims(), stride, pad).expect("validated in forward");
    let cout = wv.dims().batch();
    let (k, p) = (g.k(), g.p());
    let batch = xv.dims().batch();

    if let Some(b) = b {
        if acc.wants(b) {
            let mut db = vec![0.0f32; cout];
            for bi in 0..batch {
                for (c, d) in db.iter_mut().enumerate() {
                    *d += grad.plane(bi, c).iter().sum::<f32>();
                }
            }
            acc.add(b, Tensor::from_vec(graph.dims(b), db).expect("bias dims"));
        }
    }

    let want_w = acc.wants(w);
    let want_x = acc.wants(x);
    let mut cols = if g.pointwise() { Vec::new() } else { vec![0.0; k * p] };
    if want_w {
        let mut dw = Tensor::zeros(wv.dims());
        for bi in 0..batch {
            let xs = xv.sample(bi);
            let cols_ref: &[f32] = if g.pointwise() {
                xs
            } else {
                im2col(xs, &g, &mut cols);
                &cols
            };
            gemm(cout, p, k, Mat::n(grad.sample(bi)), Mat::t(cols_ref), 1.0, dw.data_mut());
        }
        acc.add(w, dw);
    }
    if want_x {
        let mut dx = Tensor::zeros(xv.dims());
        for bi in 0..batch {
            if g.pointwise() {
                gemm(k, cout, p, Mat::t(wv.data()), Mat::n(grad.sample(bi)), 0.0, dx.sample_mut(bi));
            } else {
                gemm(k, cout, p, Mat::t(wv.data()), Mat::n(grad.sample(bi)), 0.0, &mut cols);
                col2im(&cols, &g, dx.sample_mut(bi));
            }
        }
        acc.add(x, dx);
    }
}
