use std::sync::Arc;

use super::{Accumulator, Graph, Op, Var};
use crate::tensor::{Tensor, TensorError};

/// Probability clamp applied by [`Graph::binary_cross_entropy`].
pub const BCE_CLAMP: f32 = 1e-7;

impl Graph {
    /// Mean over all pixels of `-log softmax(logits)[target]`, evaluated in
    /// log-sum-exp form. `target` holds one class index per pixel in
    /// batch-major, row-major order.
    pub fn cross_entropy(&mut self, logits: Var, target: Arc<[u8]>) -> Result<Var, TensorError> {
        let ld = self.dims(logits);
        let [b, c, _, _] = ld.0;
        let p = ld.plane();
        if target.len() != b * p {
            return Err(TensorError::shape(
                "cross_entropy",
                format!("{} labels for logits {ld}", target.len()),
            ));
        }
        if let Some(&bad) = target.iter().find(|&&t| t as usize >= c) {
            return Err(TensorError::invalid(
                "cross_entropy",
                format!("label {bad} out of range for {c} classes"),
            ));
        }
        let lv = self.value(logits).data();
        let mut total = 0.0f64;
        for bi in 0..b {
            let base = bi * c * p;
            for i in 0..p {
                let mut m = f32::NEG_INFINITY;
                for ci in 0..c {
                    m = m.max(lv[base + ci * p + i]);
                }
                let mut s = 0.0f64;
                for ci in 0..c {
                    s += ((lv[base + ci * p + i] - m) as f64).exp();
                }
                let t = target[bi * p + i] as usize;
                total += s.ln() + m as f64 - lv[base + t * p + i] as f64;
            }
        }
        let loss = total / (b * p) as f64;
        Ok(self.push_scalar(
            Tensor::scalar(loss as f32),
            Op::CrossEntropy { logits, target },
            Some(loss),
        ))
    }

    /// Mean binary cross-entropy between probabilities `p` and 0/1 targets.
    /// Probabilities are clamped to `[1e-7, 1 - 1e-7]`.
    pub fn binary_cross_entropy(&mut self, p: Var, target: &[f32]) -> Result<Var, TensorError> {
        let pv = self.value(p).data();
        if pv.len() != target.len() {
            return Err(TensorError::shape(
                "binary_cross_entropy",
                format!("{} probabilities, {} targets", pv.len(), target.len()),
            ));
        }
        let mut total = 0.0f64;
        for (&pi, &yi) in pv.iter().zip(target) {
            let q = pi.clamp(BCE_CLAMP, 1.0 - BCE_CLAMP) as f64;
            let y = yi as f64;
            total -= y * q.ln() + (1.0 - y) * (1.0 - q).ln();
        }
        let loss = total / pv.len() as f64;
        Ok(self.push_scalar(
            Tensor::scalar(loss as f32),
            Op::BinaryCrossEntropy {
                p,
                target: target.to_vec(),
            },
            Some(loss),
        ))
    }
}

pub(super) fn cross_entropy_backward(
    graph: &Graph,
    logits: Var,
    target: &[u8],
    grad: &Tensor,
    acc: &mut Accumulator<'_>,
) {
    let lt = graph.value(logits);
    let [b, c, _, _] = lt.dims().0;
    let p = lt.dims().plane();
    let scale = grad.data()[0] / (b * p) as f32;
    let mut dl = super::activation::softmax_channels(lt);
    let d = dl.data_mut();
    for bi in 0..b {
        let base = bi * c * p;
        for i in 0..p {
            let t = target[bi * p + i] as usize;
            d[base + t * p + i] -= 1.0;
        }
    }
    d.iter_mut().for_each(|v| *v *= scale);
    acc.add(logits, dl);
}

pub(super) fn bce_backward(graph: &Graph, p: Var, target: &[f32], grad: &Tensor, acc: &mut Accumulator<'_>) {
    let pv = graph.value(p);
    let n = pv.numel() as f32;
    let scale = grad.data()[0] / n;
    let data = pv
        .data()
        .iter()
        .zip(target)
        .map(|(&pi, &y)| {
            if !(BCE_CLAMP..=1.0 - BCE_CLAMP).contains(&pi) {
                0.0
            } else {
                scale * ((1.0 - y) / (1.0 - pi) - y / pi)
            }
        })
        .collect();
    acc.add(p, Tensor::from_vec(pv.dims(), data).expect("same dims"));
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Dims;

    #[test]
    fn uniform_logits_give_ln3() {
        let mut g = Graph::new();
        let x = g.constant(Tensor::zeros(Dims::new(1, 3, 2, 2)));
        let l = g.cross_entropy(x, vec![0, 1, 2, 1].into()).unwrap();
        assert!((g.scalar(l) - 3f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn saturated_logits_give_near_zero() {
        let mut g = Graph::new();
        let mut t = Tensor::zeros(Dims::new(1, 3, 1, 2));
        t.data_mut()[2] = 20.0; // class 1, pixel 0
        t.data_mut()[5] = 20.0; // class 2, pixel 1
        let x = g.constant(t);
        let l = g.cross_entropy(x, vec![1, 2].into()).unwrap();
        assert!(g.scalar(l) < 1e-6);
    }

    #[test]
    fn rejects_out_of_range_label() {
        let mut g = Graph::new();
        let x = g.constant(Tensor::zeros(Dims::new(1, 3, 1, 2)));
        assert!(g.cross_entropy(x, vec![0, 3].into()).is_err());
        assert!(g.cross_entropy(x, vec![0].into()).is_err());
    }

    #[test]
    fn bce_half_is_ln2() {
        let mut g = Graph::new();
        let p = g.constant(Tensor::full(Dims::new(4, 1, 1, 1), 0.5));
        let l = g.binary_cross_entropy(p, &[0.0, 1.0, 1.0, 0.0]).unwrap();
        assert!((g.scalar(l) - 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn bce_exact_prediction_hits_clamp_floor() {
        let mut g = Graph::new();
        let p = g.constant(Tensor::from_vec(Dims::new(2, 1, 1, 1), vec![0.0, 1.0]).unwrap());
        let l = g.binary_cross_entropy(p, &[0.0, 1.0]).unwrap();
        let v = g.scalar(l);
        assert!(v > 0.0 && v <= 1.62e-6, "{v}");
    }
}
