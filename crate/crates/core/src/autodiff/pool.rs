use std::sync::Arc;

use super::{Accumulator, Graph, Op, Var};
use crate::tensor::{Dims, Tensor, TensorError};

/// Argmax positions recorded by [`Graph::maxpool2d_indices`].
///
/// One entry per pooled output cell: the flat `y * W + x` index of the
/// winning element inside its input plane.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PoolIndices {
    input: Dims,
    output: Dims,
    idx: Arc<[u32]>,
}

impl PoolIndices {
    pub fn new(input: Dims, output: Dims, idx: Vec<u32>) -> Result<Self, TensorError> {
        if idx.len() != output.numel() {
            return Err(TensorError::shape(
                "pool indices",
                format!("{} indices for output {output}", idx.len()),
            ));
        }
        Ok(PoolIndices {
            input,
            output,
            idx: idx.into(),
        })
    }

    pub fn input_dims(&self) -> Dims {
        self.input
    }

    pub fn output_dims(&self) -> Dims {
        self.output
    }

    pub fn as_slice(&self) -> &[u32] {
        &self.idx
    }
}

impl Graph {
    /// Non-overlapping `k x k` max pooling that records argmax positions.
    /// Ties go to the smallest flat index.
    pub fn maxpool2d_indices(&mut self, x: Var, k: usize) -> Result<(Var, PoolIndices), TensorError> {
        let xd = self.dims(x);
        let [b, c, h, w] = xd.0;
        if k == 0 || h % k != 0 || w % k != 0 {
            return Err(TensorError::shape(
                "maxpool2d",
                format!("spatial dims of {xd} not divisible by {k}"),
            ));
        }
        let (ho, wo) = (h / k, w / k);
        let od = Dims::new(b, c, ho, wo);
        let mut out = Tensor::zeros(od);
        let mut idx = Vec::with_capacity(od.numel());
        let xv = self.value(x);
        for bi in 0..b {
            for ci in 0..c {
                let plane = xv.plane(bi, ci);
                let dst = out.plane_mut(bi, ci);
                for oy in 0..ho {
                    for ox in 0..wo {
                        let mut best_i = oy * k * w + ox * k;
                        let mut best = plane[best_i];
                        for dy in 0..k {
                            let row = (oy * k + dy) * w + ox * k;
                            for (dx, &v) in plane[row..row + k].iter().enumerate() {
                                if v > best {
                                    best = v;
                                    best_i = row + dx;
                                }
                            }
                        }
                        dst[oy * wo + ox] = best;
                        idx.push(best_i as u32);
                    }
                }
            }
        }
        let indices = PoolIndices::new(xd, od, idx)?;
        let v = self.push(
            out,
            Op::MaxPool {
                x,
                indices: indices.clone(),
            },
        );
        Ok((v, indices))
    }

    /// Scatter `y` into a zero tensor of spatial size `out_hw` at the
    /// positions recorded by a previous pooling.
    pub fn max_unpool2d(
        &mut self,
        y: Var,
        indices: &PoolIndices,
        out_hw: (usize, usize),
    ) -> Result<Var, TensorError> {
        let yd = self.dims(y);
        let [b, c, _, _] = yd.0;
        if yd != indices.output {
            return Err(TensorError::shape(
                "max_unpool2d",
                format!("input {yd} does not match pooled dims {}", indices.output),
            ));
        }
        let od = Dims::new(b, c, out_hw.0, out_hw.1);
        let plane = od.plane();
        if let Some(&bad) = indices.idx.iter().find(|&&i| i as usize >= plane) {
            return Err(TensorError::invalid(
                "max_unpool2d",
                format!("index {bad} out of range for {}x{} plane", out_hw.0, out_hw.1),
            ));
        }
        let mut out = Tensor::zeros(od);
        let yv = self.value(y);
        let cells = yd.plane();
        for bi in 0..b {
            for ci in 0..c {
                let src = yv.plane(bi, ci);
                let ids = &indices.idx[(bi * c + ci) * cells..(bi * c + ci + 1) * cells];
                let dst = out.plane_mut(bi, ci);
                for (&i, &v) in ids.iter().zip(src) {
                    dst[i as usize] = v;
                }
            }
        }
        Ok(self.push(
            out,
            Op::MaxUnpool {
                y,
                indices: indices.clone(),
            },
        ))
    }
}

pub(super) fn pool_backward(x: Var, indices: &PoolIndices, grad: &Tensor, acc: &mut Accumulator<'_>) {
    if !acc.wants(x) {
        return;
    }
    let mut dx = Tensor::zeros(indices.input);
    scatter(grad, indices, &mut dx);
    acc.add(x, dx);
}

pub(super) fn unpool_backward(
    graph: &Graph,
    y: Var,
    indices: &PoolIndices,
    grad: &Tensor,
    acc: &mut Accumulator<'_>,
) {
    if !acc.wants(y) {
        return;
    }
    let yd = graph.dims(y);
    let [b, c, _, _] = yd.0;
    let cells = yd.plane();
    let mut dy = Tensor::zeros(yd);
    for bi in 0..b {
        for ci in 0..c {
            let src = grad.plane(bi, ci);
            let ids = &indices.idx[(bi * c + ci) * cells..(bi * c + ci + 1) * cells];
            for (d, &i) in dy.plane_mut(bi, ci).iter_mut().zip(ids) {
                *d = src[i as usize];
            }
        }
    }
    acc.add(y, dy);
}

fn scatter(src: &Tensor, indices: &PoolIndices, dst: &mut Tensor) {
    let [b, c, _, _] = indices.output.0;
    let cells = indices.output.plane();
    for bi in 0..b {
        for ci in 0..c {
            let s = src.plane(bi, ci);
            let ids = &indices.idx[(bi * c + ci) * cells..(bi * c + ci + 1) * cells];
            let d = dst.plane_mut(bi, ci);
            for (&i, &v) in ids.iter().zip(s) {
                d[i as usize] += v;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn plane(h: usize, w: usize, values: &[f32]) -> Tensor {
        Tensor::from_vec(Dims::new(1, 1, h, w), values.to_vec()).unwrap()
    }

    #[test]
    fn picks_max_and_its_index() {
        let mut g = Graph::new();
        let x = g.constant(plane(2, 2, &[1.0, 2.0, 3.0, 4.0]));
        let (y, idx) = g.maxpool2d_indices(x, 2).unwrap();
        assert_eq!(g.value(y).data(), &[4.0]);
        assert_eq!(idx.as_slice(), &[3]);
    }

    #[test]
    fn ties_go_to_smallest_index() {
        let mut g = Graph::new();
        let x = g.constant(Tensor::full(Dims::new(1, 1, 4, 4), 2.5));
        let (y, idx) = g.maxpool2d_indices(x, 2).unwrap();
        assert_eq!(g.value(y).data(), &[2.5; 4]);
        // Top-left corner of each 2x2 window.
        assert_eq!(idx.as_slice(), &[0, 2, 8, 10]);
    }

    #[test]
    fn rejects_indivisible_dims() {
        let mut g = Graph::new();
        let x = g.constant(Tensor::zeros(Dims::new(1, 1, 3, 4)));
        assert!(g.maxpool2d_indices(x, 2).is_err());
    }

    #[test]
    fn unpool_scatters_at_index() {
        let mut g = Graph::new();
        let y = g.constant(plane(1, 1, &[4.0]));
        let idx = PoolIndices::new(Dims::new(1, 1, 2, 2), Dims::new(1, 1, 1, 1), vec![3]).unwrap();
        let out = g.max_unpool2d(y, &idx, (2, 2)).unwrap();
        assert_eq!(g.value(out).data(), &[0.0, 0.0, 0.0, 4.0]);

        let z = g.constant(plane(1, 1, &[0.0]));
        let out = g.max_unpool2d(z, &idx, (2, 2)).unwrap();
        assert!(g.value(out).data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn unpool_rejects_out_of_range_index() {
        let mut g = Graph::new();
        let y = g.constant(plane(1, 1, &[4.0]));
        let idx = PoolIndices::new(Dims::new(1, 1, 2, 2), Dims::new(1, 1, 1, 1), vec![4]).unwrap();
        assert!(g.max_unpool2d(y, &idx, (2, 2)).is_err());
    }
}
