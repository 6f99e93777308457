//! Naive f64 reference implementations used as test oracles.
//!
//! Everything here is written as plain nested loops, independently of the
//! library's im2col / tape code, so agreement between the two is evidence
//! rather than tautology.

#![allow(dead_code)]

pub mod gradcheck;
pub mod metrics;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use strokeseg::{Dims, ParamStore, Tensor};

#[derive(Clone, Debug)]
pub struct T64 {
    pub dims: [usize; 4],
    pub data: Vec<f64>,
}

impl T64 {
    pub fn zeros(dims: [usize; 4]) -> Self {
        T64 {
            dims,
            data: vec![0.0; dims.iter().product()],
        }
    }

    pub fn from_tensor(t: &Tensor) -> Self {
        T64 {
            dims: t.dims().0,
            data: t.data().iter().map(|&v| v as f64).collect(),
        }
    }

    pub fn to_tensor(&self) -> Tensor {
        Tensor::from_vec(Dims(self.dims), self.data.iter().map(|&v| v as f32).collect()).unwrap()
    }

    pub fn idx(&self, b: usize, c: usize, y: usize, x: usize) -> usize {
        let [_, cc, h, w] = self.dims;
        ((b * cc + c) * h + y) * w + x
    }

    pub fn at(&self, b: usize, c: usize, y: usize, x: usize) -> f64 {
        self.data[self.idx(b, c, y, x)]
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> T64 {
        T64 {
            dims: self.dims,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }
}

pub fn random_tensor(rng: &mut ChaCha8Rng, dims: Dims, lo: f32, hi: f32) -> Tensor {
    let data = (0..dims.numel()).map(|_| rng.gen_range(lo..hi)).collect();
    Tensor::from_vec(dims, data).unwrap()
}

/// Values bounded away from zero, for ops with a kink at the origin.
pub fn random_away_from_zero(rng: &mut ChaCha8Rng, dims: Dims, margin: f32) -> Tensor {
    let data = (0..dims.numel())
        .map(|_| loop {
            let v: f32 = rng.gen_range(-1.0..1.0);
            if v.abs() > margin {
                break v;
            }
        })
        .collect();
    Tensor::from_vec(dims, data).unwrap()
}

pub fn conv2d(x: &T64, w: &T64, b: Option<&T64>, stride: usize, pad: usize) -> T64 {
    let [bn, cin, h, wd] = x.dims;
    let [cout, _, kh, kw] = w.dims;
    let oh = (h + 2 * pad - kh) / stride + 1;
    let ow = (wd + 2 * pad - kw) / stride + 1;
    let mut out = T64::zeros([bn, cout, oh, ow]);
    for n in 0..bn {
        for co in 0..cout {
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut s = b.map_or(0.0, |b| b.data[co]);
                    for ci in 0..cin {
                        for ky in 0..kh {
                            for kx in 0..kw {
                                let iy = (oy * stride + ky) as isize - pad as isize;
                                let ix = (ox * stride + kx) as isize - pad as isize;
                                if iy < 0 || ix < 0 || iy >= h as isize || ix >= wd as isize {
                                    continue;
                                }
                                s += x.at(n, ci, iy as usize, ix as usize) * w.at(co, ci, ky, kx);
                            }
                        }
                    }
                    let i = out.idx(n, co, oy, ox);
                    out.data[i] = s;
                }
            }
        }
    }
    out
}

/// Batch-statistics normalization (biased variance).
pub fn batchnorm_batch(x: &T64, gamma: &T64, beta: &T64, eps: f64) -> T64 {
    let [bn, c, h, w] = x.dims;
    let n = (bn * h * w) as f64;
    let mut out = T64::zeros(x.dims);
    for ci in 0..c {
        let mut mean = 0.0;
        for b in 0..bn {
            for y in 0..h {
                for xx in 0..w {
                    mean += x.at(b, ci, y, xx);
                }
            }
        }
        mean /= n;
        let mut var = 0.0;
        for b in 0..bn {
            for y in 0..h {
                for xx in 0..w {
                    var += (x.at(b, ci, y, xx) - mean).powi(2);
                }
            }
        }
        var /= n;
        let inv = 1.0 / (var + eps).sqrt();
        for b in 0..bn {
            for y in 0..h {
                for xx in 0..w {
                    let i = x.idx(b, ci, y, xx);
                    out.data[i] = (x.data[i] - mean) * inv * gamma.data[ci] + beta.data[ci];
                }
            }
        }
    }
    out
}

pub fn batchnorm_running(x: &T64, gamma: &T64, beta: &T64, mean: &[f64], var: &[f64], eps: f64) -> T64 {
    let [bn, c, h, w] = x.dims;
    let mut out = T64::zeros(x.dims);
    for b in 0..bn {
        for ci in 0..c {
            for y in 0..h {
                for xx in 0..w {
                    let i = x.idx(b, ci, y, xx);
                    out.data[i] = (x.data[i] - mean[ci]) / (var[ci] + eps).sqrt() * gamma.data[ci] + beta.data[ci];
                }
            }
        }
    }
    out
}

pub fn relu(x: &T64) -> T64 {
    x.map(|v| v.max(0.0))
}

pub fn leaky_relu(x: &T64, slope: f64) -> T64 {
    x.map(|v| if v > 0.0 { v } else { slope * v })
}

pub fn sigmoid(x: &T64) -> T64 {
    x.map(|v| 1.0 / (1.0 + (-v).exp()))
}

pub fn softmax_channels(x: &T64) -> T64 {
    let [bn, c, h, w] = x.dims;
    let mut out = T64::zeros(x.dims);
    for b in 0..bn {
        for y in 0..h {
            for xx in 0..w {
                let z: f64 = (0..c).map(|ci| x.at(b, ci, y, xx).exp()).sum();
                for ci in 0..c {
                    let i = x.idx(b, ci, y, xx);
                    out.data[i] = x.data[i].exp() / z;
                }
            }
        }
    }
    out
}

/// 2x2 max pooling; returns values and the within-plane argmax of each cell
/// (first maximum in row-major scan order).
pub fn maxpool2(x: &T64) -> (T64, Vec<usize>) {
    let [bn, c, h, w] = x.dims;
    let mut out = T64::zeros([bn, c, h / 2, w / 2]);
    let mut idx = vec![0; out.data.len()];
    for b in 0..bn {
        for ci in 0..c {
            for oy in 0..h / 2 {
                for ox in 0..w / 2 {
                    let mut best = f64::NEG_INFINITY;
                    let mut arg = 0;
                    for ky in 0..2 {
                        for kx in 0..2 {
                            let (y, xx) = (2 * oy + ky, 2 * ox + kx);
                            let v = x.at(b, ci, y, xx);
                            let flat = y * w + xx;
                            if v > best || (v == best && flat < arg) {
                                best = v;
                                arg = flat;
                            }
                        }
                    }
                    let o = out.idx(b, ci, oy, ox);
                    out.data[o] = best;
                    idx[o] = arg;
                }
            }
        }
    }
    (out, idx)
}

pub fn unpool(y: &T64, idx: &[usize], h: usize, w: usize) -> T64 {
    let [bn, c, oh, ow] = y.dims;
    let mut out = T64::zeros([bn, c, h, w]);
    for b in 0..bn {
        for ci in 0..c {
            for i in 0..oh * ow {
                let o = (b * c + ci) * oh * ow + i;
                out.data[(b * c + ci) * h * w + idx[o]] = y.data[o];
            }
        }
    }
    out
}

pub fn concat(a: &T64, b: &T64) -> T64 {
    let [bn, ca, h, w] = a.dims;
    let cb = b.dims[1];
    let mut out = T64::zeros([bn, ca + cb, h, w]);
    for n in 0..bn {
        for ci in 0..ca + cb {
            for y in 0..h {
                for x in 0..w {
                    let v = if ci < ca { a.at(n, ci, y, x) } else { b.at(n, ci - ca, y, x) };
                    let i = out.idx(n, ci, y, x);
                    out.data[i] = v;
                }
            }
        }
    }
    out
}

/// Direct `-ln p[target]` averaged over pixels; `p` computed by plain
/// exponentiation (inputs in tests are small enough not to overflow).
pub fn cross_entropy(logits: &T64, target: &[u8]) -> f64 {
    let p = softmax_channels(logits);
    let [bn, _, h, w] = logits.dims;
    let mut total = 0.0;
    for b in 0..bn {
        for y in 0..h {
            for x in 0..w {
                let t = target[(b * h + y) * w + x] as usize;
                total -= p.at(b, t, y, x).ln();
            }
        }
    }
    total / (bn * h * w) as f64
}

pub fn binary_cross_entropy(p: &[f64], y: &[f64]) -> f64 {
    let total: f64 = p
        .iter()
        .zip(y)
        .map(|(&p, &y)| -(y * p.ln() + (1.0 - y) * (1.0 - p).ln()))
        .sum();
    total / p.len() as f64
}

pub fn weighted(x: &T64, weights: &[f32]) -> f64 {
    x.data.iter().zip(weights).map(|(&v, &w)| v * w as f64).sum()
}

/// Central difference of `f` at every coordinate of `x`.
pub fn central_difference(x: &T64, h: f64, mut f: impl FnMut(&T64) -> f64) -> Vec<f64> {
    let mut probe = x.clone();
    (0..x.data.len())
        .map(|i| {
            let orig = probe.data[i];
            probe.data[i] = orig + h;
            let up = f(&probe);
            probe.data[i] = orig - h;
            let down = f(&probe);
            probe.data[i] = orig;
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// Relative error with the denominator floored at `floor`, so that entries
/// whose true gradient is essentially zero are judged on absolute error.
pub fn rel_err(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

pub const FD_STEP: f64 = 1e-4;
pub const REL_TOL: f64 = 1e-3;
pub const REL_FLOOR: f64 = 1e-2;

/// Largest relative error between an analytic gradient and a numeric one.
pub fn max_rel_err(analytic: &Tensor, numeric: &[f64]) -> f64 {
    assert_eq!(analytic.numel(), numeric.len());
    analytic
        .data()
        .iter()
        .zip(numeric)
        .map(|(&a, &n)| rel_err(a as f64, n, REL_FLOOR))
        .fold(0.0, f64::max)
}

/// Reference forward of the segmentation network in batch-statistics mode,
/// returning the mean cross-entropy loss. Walks the parameter names rather
/// than sharing any planning code with the library.
pub fn seg_loss(params: &ParamStore, overrides: &[(&str, &T64)], input: &T64, target: &[u8], skip_concat: bool) -> f64 {
    let get = |name: &str| -> T64 {
        overrides
            .iter()
            .find(|(n, _)| *n == name)
            .map(|(_, t)| (*t).clone())
            .unwrap_or_else(|| T64::from_tensor(params.get(name).unwrap_or_else(|| panic!("missing {name}"))))
    };
    let block = |x: &T64, conv: &str, bn: &str| -> T64 {
        let y = conv2d(x, &get(&format!("{conv}.weight")), None, 1, 1);
        let y = batchnorm_batch(&y, &get(&format!("{bn}.gamma")), &get(&format!("{bn}.beta")), 1e-5);
        relu(&y)
    };
    let mut x = input.clone();
    let mut skips = Vec::new();
    let mut stage = 1;
    while params.contains(&format!("enc{stage}.conv0.weight")) {
        let mut i = 0;
        while params.contains(&format!("enc{stage}.conv{i}.weight")) {
            x = block(&x, &format!("enc{stage}.conv{i}"), &format!("enc{stage}.bn{i}"));
            i += 1;
        }
        let (pooled, idx) = maxpool2(&x);
        skips.push((x, idx));
        x = pooled;
        stage += 1;
    }
    for s in (1..stage).rev() {
        let (skip, idx) = &skips[s - 1];
        x = unpool(&x, idx, skip.dims[2], skip.dims[3]);
        if skip_concat {
            x = concat(&x, skip);
        }
        let mut j = 0;
        while params.contains(&format!("dec{s}.conv{j}.weight")) {
            x = block(&x, &format!("dec{s}.conv{j}"), &format!("dec{s}.bn{j}"));
            j += 1;
        }
    }
    let logits = conv2d(&x, &get("head.weight"), Some(&get("head.bias")), 1, 0);
    cross_entropy(&logits, target)
}
