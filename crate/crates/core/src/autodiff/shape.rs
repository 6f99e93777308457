use super::{Accumulator, Graph, Op, Var};
use crate::tensor::{Dims, Tensor, TensorError};

impl Graph {
    /// Channel-axis concatenation, `a`'s channels first.
    pub fn concat_channels(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let (ad, bd) = (self.dims(a), self.dims(b));
        if ad.batch() != bd.batch() || ad.height() != bd.height() || ad.width() != bd.width() {
            return Err(TensorError::shape("concat_channels", format!("{ad} vs {bd}")));
        }
        let od = Dims::new(ad.batch(), ad.channels() + bd.channels(), ad.height(), ad.width());
        let mut data = Vec::with_capacity(od.numel());
        let (av, bv) = (self.value(a), self.value(b));
        for bi in 0..ad.batch() {
            data.extend_from_slice(av.sample(bi));
            data.extend_from_slice(bv.sample(bi));
        }
        let out = Tensor::from_vec(od, data)?;
        Ok(self.push(out, Op::Concat { a, b }))
    }

    /// Single channel of `x`, as a `B x 1 x H x W` tensor.
    pub fn channel(&mut self, x: Var, channel: usize) -> Result<Var, TensorError> {
        let xd = self.dims(x);
        if channel >= xd.channels() {
            return Err(TensorError::invalid(
                "channel",
                format!("channel {channel} of {xd}"),
            ));
        }
        let od = Dims::new(xd.batch(), 1, xd.height(), xd.width());
        let mut data = Vec::with_capacity(od.numel());
        for bi in 0..xd.batch() {
            data.extend_from_slice(self.value(x).plane(bi, channel));
        }
        let out = Tensor::from_vec(od, data)?;
        Ok(self.push(out, Op::Channel { x, channel }))
    }

    /// Reorder channels per sample: output channel `j` of sample `b` is input
    /// channel `perms[b][j]`.
    pub fn permute_channels(&mut self, x: Var, perms: Vec<Vec<usize>>) -> Result<Var, TensorError> {
        let xd = self.dims(x);
        if perms.len() != xd.batch() {
            return Err(TensorError::shape(
                "permute_channels",
                format!("{} permutations for {xd}", perms.len()),
            ));
        }
        for perm in &perms {
            let mut seen = vec![false; xd.channels()];
            if perm.len() != xd.channels() || !perm.iter().all(|&p| p < seen.len() && !std::mem::replace(&mut seen[p], true)) {
                return Err(TensorError::invalid(
                    "permute_channels",
                    format!("{perm:?} is not a permutation of {} channels", xd.channels()),
                ));
            }
        }
        let mut out = Tensor::zeros(xd);
        let xv = self.value(x);
        for (bi, perm) in perms.iter().enumerate() {
            for (j, &src) in perm.iter().enumerate() {
                out.plane_mut(bi, j).copy_from_slice(xv.plane(bi, src));
            }
        }
        Ok(self.push(out, Op::PermuteChannels { x, perms }))
    }

    /// Per-sample choice between two equally shaped tensors: sample `b` comes
    /// from `a` when `take_a[b]`, else from `b`.
    pub fn select_samples(&mut self, a: Var, b: Var, take_a: Vec<bool>) -> Result<Var, TensorError> {
        let (ad, bd) = (self.dims(a), self.dims(b));
        if ad != bd || take_a.len() != ad.batch() {
            return Err(TensorError::shape(
                "select_samples",
                format!("{ad} vs {bd} with {} flags", take_a.len()),
            ));
        }
        let mut data = Vec::with_capacity(ad.numel());
        for (bi, &ta) in take_a.iter().enumerate() {
            let src = if ta { self.value(a) } else { self.value(b) };
            data.extend_from_slice(src.sample(bi));
        }
        let out = Tensor::from_vec(ad, data)?;
        Ok(self.push(out, Op::SelectSamples { a, b, take_a }))
    }

    /// Spatial mean per channel: `B x C x 1 x 1`.
    pub fn global_avg_pool(&mut self, x: Var) -> Var {
        let xd = self.dims(x);
        let od = Dims::new(xd.batch(), xd.channels(), 1, 1);
        let xv = self.value(x);
        let n = xd.plane() as f64;
        let mut data = Vec::with_capacity(od.numel());
        for bi in 0..xd.batch() {
            for ci in 0..xd.channels() {
                data.push((xv.plane(bi, ci).iter().map(|&v| v as f64).sum::<f64>() / n) as f32);
            }
        }
        let out = Tensor::from_vec(od, data).expect("pooled dims");
        self.push(out, Op::GlobalAvgPool { x })
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).sum_f64();
        self.push_scalar(Tensor::scalar(s as f32), Op::Sum { x }, Some(s))
    }

    /// `sum(weights * x)` for a fixed weight vector.
    pub fn weighted_sum(&mut self, x: Var, weights: Vec<f32>) -> Result<Var, TensorError> {
        let xv = self.value(x).data();
        if weights.len() != xv.len() {
            return Err(TensorError::shape(
                "weighted_sum",
                format!("{} weights for {} values", weights.len(), xv.len()),
            ));
        }
        let s: f64 = xv.iter().zip(&weights).map(|(&a, &w)| a as f64 * w as f64).sum();
        Ok(self.push_scalar(Tensor::scalar(s as f32), Op::WeightedSum { x, weights }, Some(s)))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let out = self.zip(a, b, "mul", |x, y| x * y)?;
        Ok(self.push(out, Op::Mul { a, b }))
    }

    /// Elementwise sum. For scalars, the double-precision values are summed
    /// too.
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let out = self.zip(a, b, "add", |x, y| x + y)?;
        let scalar = (out.numel() == 1).then(|| self.scalar(a) + self.scalar(b));
        Ok(self.push_scalar(out, Op::Add { a, b }, scalar))
    }

    pub fn scale(&mut self, x: Var, factor: f32) -> Var {
        let xv = self.value(x);
        let data = xv.data().iter().map(|&v| v * factor).collect();
        let out = Tensor::from_vec(xv.dims(), data).expect("same dims");
        let scalar = (out.numel() == 1).then(|| self.scalar(x) * factor as f64);
        self.push_scalar(out, Op::Scale { x, factor }, scalar)
    }

    fn zip(&self, a: Var, b: Var, op: &'static str, f: impl Fn(f32, f32) -> f32) -> Result<Tensor, TensorError> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.dims() != bv.dims() {
            return Err(TensorError::shape(op, format!("{} vs {}", av.dims(), bv.dims())));
        }
        let data = av.data().iter().zip(bv.data()).map(|(&x, &y)| f(x, y)).collect();
        Tensor::from_vec(av.dims(), data)
    }
}

pub(super) fn concat_backward(graph: &Graph, a: Var, b: Var, grad: &Tensor, acc: &mut Accumulator<'_>) {
    let (ad, bd) = (graph.dims(a), graph.dims(b));
    let (na, nb) = (ad.numel() / ad.batch().max(1), bd.numel() / bd.batch().max(1));
    let mut da = Vec::with_capacity(ad.numel());
    let mut db = Vec::with_capacity(bd.numel());
    for bi in 0..ad.batch() {
        let s = grad.sample(bi);
        da.extend_from_slice(&s[..na]);
        db.extend_from_slice(&s[na..na + nb]);
    }
    acc.add(a, Tensor::from_vec(ad, da).expect("dims"));
    acc.add(b, Tensor::from_vec(bd, db).expect("dims"));
}

pub(super) fn channel_backward(graph: &Graph, x: Var, channel: usize, grad: &Tensor, acc: &mut Accumulator<'_>) {
    let mut dx = Tensor::zeros(graph.dims(x));
    for bi in 0..grad.dims().batch() {
        dx.plane_mut(bi, channel).copy_from_slice(grad.plane(bi, 0));
    }
    acc.add(x, dx);
}

pub(super) fn permute_backward(graph: &Graph, x: Var, perms: &[Vec<usize>], grad: &Tensor, acc: &mut Accumulator<'_>) {
    let mut dx = Tensor::zeros(graph.dims(x));
    for (bi, perm) in perms.iter().enumerate() {
        for (j, &src) in perm.iter().enumerate() {
            dx.plane_mut(bi, src).copy_from_slice(grad.plane(bi, j));
        }
    }
    acc.add(x, dx);
}

pub(super) fn select_backward(graph: &Graph, a: Var, b: Var, take_a: &[bool], grad: &Tensor, acc: &mut Accumulator<'_>) {
    let d = graph.dims(a);
    let mut da = Tensor::zeros(d);
    let mut db = Tensor::zeros(d);
    for (bi, &ta) in take_a.iter().enumerate() {
        let dst = if ta { &mut da } else { &mut db };
        dst.sample_mut(bi).copy_from_slice(grad.sample(bi));
    }
    acc.add(a, da);
    acc.add(b, db);
}

pub(super) fn gap_backward(graph: &Graph, x: Var, grad: &Tensor, acc: &mut Accumulator<'_>) {
    let xd = graph.dims(x);
    let n = xd.plane() as f32;
    let mut dx = Tensor::zeros(xd);
    for bi in 0..xd.batch() {
        for ci in 0..xd.channels() {
            let g = grad.data()[bi * xd.channels() + ci] / n;
            dx.plane_mut(bi, ci).fill(g);
        }
    }
    acc.add(x, dx);
}

pub(super) fn sum_backward(graph: &Graph, x: Var, grad: &Tensor, acc: &mut Accumulator<'_>) {
    acc.add(x, Tensor::full(graph.dims(x), grad.data()[0]));
}

pub(super) fn weighted_sum_backward(graph: &Graph, x: Var, weights: &[f32], grad: &Tensor, acc: &mut Accumulator<'_>) {
    let g = grad.data()[0];
    let data = weights.iter().map(|&w| w * g).collect();
    acc.add(x, Tensor::from_vec(graph.dims(x), data).expect("dims"));
}

pub(super) fn mul_backward(graph: &Graph, a: Var, b: Var, grad: &Tensor, acc: &mut Accumulator<'_>) {
    let (av, bv) = (graph.value(a), graph.value(b));
    let da = grad.data().iter().zip(bv.data()).map(|(&g, &y)| g * y).collect();
    let db = grad.data().iter().zip(av.data()).map(|(&g, &x)| g * x).collect();
    acc.add(a, Tensor::from_vec(av.dims(), da).expect("dims"));
    acc.add(b, Tensor::from_vec(bv.dims(), db).expect("dims"));
}
