use super::{Accumulator, Graph, Op, Var};
use crate::tensor::{Tensor, TensorError};

/// Batch-normalization hyperparameters.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BatchNormConfig {
    pub eps: f32,
    pub momentum: f32,
}

impl Default for BatchNormConfig {
    fn default() -> Self {
        BatchNormConfig {
            eps: 1e-5,
            momentum: 0.1,
        }
    }
}

/// How batch normalization obtains its statistics.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BnMode {
    /// Batch statistics; running statistics are updated.
    Train,
    /// Batch statistics; running statistics are left alone. Used when a
    /// network is evaluated inside another network's update step.
    Frozen,
    /// Running statistics.
    Eval,
}

impl Graph {
    /// Per-channel batch normalization followed by a `gamma`/`beta` affine map.
    #[allow(clippy::too_many_arguments)]
    pub fn batchnorm2d(
        &mut self,
        x: Var,
        gamma: Var,
        beta: Var,
        running_mean: &mut [f32],
        running_var: &mut [f32],
        mode: BnMode,
        cfg: BatchNormConfig,
    ) -> Result<Var, TensorError> {
        let xd = self.dims(x);
        let [b, c, _, _] = xd.0;
        for (name, len) in [
            ("gamma", self.value(gamma).numel()),
            ("beta", self.value(beta).numel()),
            ("running mean", running_mean.len()),
            ("running var", running_var.len()),
        ] {
            if len != c {
                return Err(TensorError::shape(
                    "batchnorm2d",
                    format!("{name} has {len} entries for {c} channels"),
                ));
            }
        }
        let xv = self.value(x);
        let n = b * xd.plane();
        let (mean, inv_std, batch_stats) = match mode {
            BnMode::Eval => {
                let inv = running_var
                    .iter()
                    .map(|&v| 1.0 / (v + cfg.eps).sqrt())
                    .collect::<Vec<_>>();
                (running_mean.to_vec(), inv, false)
            }
            BnMode::Train | BnMode::Frozen => {
                let mut mean = vec![0.0f32; c];
                let mut inv = vec![0.0f32; c];
                for ci in 0..c {
                    let mut s = 0.0f64;
                    for bi in 0..b {
                        s += xv.plane(bi, ci).iter().map(|&v| v as f64).sum::<f64>();
                    }
                    let m = s / n as f64;
                    let mut ss = 0.0f64;
                    for bi in 0..b {
                        ss += xv
                            .plane(bi, ci)
                            .iter()
                            .map(|&v| (v as f64 - m).powi(2))
                            .sum::<f64>();
                    }
                    let var = ss / n as f64;
                    mean[ci] = m as f32;
                    inv[ci] = (1.0 / (var + cfg.eps as f64).sqrt()) as f32;
                    if mode == BnMode::Train {
                        let unbiased = if n > 1 { ss / (n - 1) as f64 } else { var };
                        let mom = cfg.momentum;
                        running_mean[ci] = (1.0 - mom) * running_mean[ci] + mom * m as f32;
                        running_var[ci] = (1.0 - mom) * running_var[ci] + mom * unbiased as f32;
                    }
                }
                (mean, inv, true)
            }
        };
        let gv = self.value(gamma).data();
        let bv = self.value(beta).data();
        let mut out = Tensor::zeros(xd);
        for bi in 0..b {
            for ci in 0..c {
                let (m, s, g, be) = (mean[ci], inv_std[ci], gv[ci], bv[ci]);
                for (o, &v) in out.plane_mut(bi, ci).iter_mut().zip(xv.plane(bi, ci)) {
                    *o = (v - m) * s * g + be;
                }
            }
        }
        Ok(self.push(
            out,
            Op::BatchNorm {
                x,
                gamma,
                beta,
                mean,
                inv_std,
                batch_stats,
            },
        ))
    }
}

#[allow(clippy::too_many_arguments)]
pub(super) fn backward(
    graph: &Graph,
    x: Var,
    gamma: Var,
    beta: Var,
    mean: &[f32],
    inv_std: &[f32],
    batch_stats: bool,
    grad: &Tensor,
    acc: &mut Accumulator<'_>,
) {
    let xv = graph.value(x);
    let [b, c, _, _] = xv.dims().0;
    let n = (b * xv.dims().plane()) as f64;
    let gv = graph.value(gamma).data();
    let mut dgamma = vec![0.0f32; c];
    let mut dbeta = vec![0.0f32; c];
    let want_x = acc.wants(x);
    let mut dx = if want_x { Some(Tensor::zeros(xv.dims())) } else { None };
    for ci in 0..c {
        let (m, s) = (mean[ci], inv_std[ci]);
        let mut sum_dy = 0.0f64;
        let mut sum_dy_xhat = 0.0f64;
        for bi in 0..b {
            for (&dy, &v) in grad.plane(bi, ci).iter().zip(xv.plane(bi, ci)) {
                let xhat = (v - m) * s;
                sum_dy += dy as f64;
                sum_dy_xhat += (dy * xhat) as f64;
            }
        }
        dgamma[ci] = sum_dy_xhat as f32;
        dbeta[ci] = sum_dy as f32;
        if let Some(dx) = dx.as_mut() {
            let g = gv[ci];
            if batch_stats {
                let mean_dy = (sum_dy / n) as f32;
                let mean_dy_xhat = (sum_dy_xhat / n) as f32;
                for bi in 0..b {
                    let src = xv.plane(bi, ci);
                    let dys = grad.plane(bi, ci);
                    for ((d, &dy), &v) in dx.plane_mut(bi, ci).iter_mut().zip(dys).zip(src) {
                        let xhat = (v - m) * s;
                        *d = g * s * (dy - mean_dy - xhat * mean_dy_xhat);
                    }
                }
            } else {
                for bi in 0..b {
                    for (d, &dy) in dx.plane_mut(bi, ci).iter_mut().zip(grad.plane(bi, ci)) {
                        *d = dy * g * s;
                    }
                }
            }
        }
    }
    if let Some(dx) = dx {
        acc.add(x, dx);
    }
    acc.add(gamma, Tensor::from_vec(graph.dims(gamma), dgamma).expect("gamma dims"));
    acc.add(beta, Tensor::from_vec(graph.dims(beta), dbeta).expect("beta dims"));
}
