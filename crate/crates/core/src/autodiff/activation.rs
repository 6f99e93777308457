use super::{Accumulator, Graph, Op, Var};
use crate::tensor::Tensor;

fn map(t: &Tensor, f: impl Fn(f32) -> f32) -> Tensor {
    let data = t.data().iter().map(|&v| f(v)).collect();
    Tensor::from_vec(t.dims(), data).expect("same dims")
}

pub(crate) fn sigmoid(v: f32) -> f32 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

impl Graph {
    pub fn relu(&mut self, x: Var) -> Var {
        // NaN passes through so non-finite losses stay visible.
        let out = map(self.value(x), |v| if v > 0.0 || v.is_nan() { v } else { 0.0 });
        self.push(out, Op::Relu { x })
    }

    pub fn leaky_relu(&mut self, x: Var, slope: f32) -> Var {
        let out = map(self.value(x), |v| if v > 0.0 { v } else { v * slope });
        self.push(out, Op::LeakyRelu { x, slope })
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let out = map(self.value(x), sigmoid);
        self.push(out, Op::Sigmoid { x })
    }

    /// Softmax across the channel axis, independently per pixel.
    pub fn softmax_channels(&mut self, x: Var) -> Var {
        let out = softmax_channels(self.value(x));
        self.push(out, Op::SoftmaxChannels { x })
    }
}

pub(crate) fn softmax_channels(x: &Tensor) -> Tensor {
    let [b, c, _, _] = x.dims().0;
    let p = x.dims().plane();
    let mut out = Tensor::zeros(x.dims());
    let src = x.data();
    let dst = out.data_mut();
    for bi in 0..b {
        let base = bi * c * p;
        for i in 0..p {
            let mut m = f32::NEG_INFINITY;
            for ci in 0..c {
                m = m.max(src[base + ci * p + i]);
            }
            let mut s = 0.0f32;
            for ci in 0..c {
                let e = (src[base + ci * p + i] - m).exp();
                dst[base + ci * p + i] = e;
                s += e;
            }
            for ci in 0..c {
                dst[base + ci * p + i] /= s;
            }
        }
    }
    out
}

pub(super) fn relu_backward(graph: &Graph, x: Var, out: Var, grad: &Tensor, acc: &mut Accumulator<'_>) {
    let y = graph.value(out).data();
    let mut dx = grad.clone();
    for (d, &v) in dx.data_mut().iter_mut().zip(y) {
        if v <= 0.0 {
            *d = 0.0;
        }
    }
    acc.add(x, dx);
}

pub(super) fn leaky_relu_backward(graph: &Graph, x: Var, slope: f32, grad: &Tensor, acc: &mut Accumulator<'_>) {
    let xv = graph.value(x).data();
    let mut dx = grad.clone();
    for (d, &v) in dx.data_mut().iter_mut().zip(xv) {
        if v <= 0.0 {
            *d *= slope;
        }
    }
    acc.add(x, dx);
}

pub(super) fn sigmoid_backward(graph: &Graph, x: Var, out: Var, grad: &Tensor, acc: &mut Accumulator<'_>) {
    let y = graph.value(out).data();
    let mut dx = grad.clone();
    for (d, &s) in dx.data_mut().iter_mut().zip(y) {
        *d *= s * (1.0 - s);
    }
    acc.add(x, dx);
}

pub(super) fn softmax_backward(graph: &Graph, x: Var, out: Var, grad: &Tensor, acc: &mut Accumulator<'_>) {
    let y = graph.value(out);
    let [b, c, _, _] = y.dims().0;
    let p = y.dims().plane();
    let mut dx = Tensor::zeros(y.dims());
    let (yv, gv) = (y.data(), grad.data());
    let dst = dx.data_mut();
    for bi in 0..b {
        let base = bi * c * p;
        for i in 0..p {
            let mut dot = 0.0f32;
            for ci in 0..c {
                dot += yv[base + ci * p + i] * gv[base + ci * p + i];
            }
            for ci in 0..c {
                let k = base + ci * p + i;
                dst[k] = yv[k] * (gv[k] - dot);
            }
        }
    }
    acc.add(x, dx);
}
