//! Finite-difference gradient checks of every differentiable op against the
//! f64 reference in the parent module.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use strokeseg::autodiff::{BatchNormConfig, BnMode};
use strokeseg::networks::{SegNetConfig, SegmentationNet};
use strokeseg::{Dims, Graph, Tensor, Var};

use super::*;

pub const CASES: usize = 20;

/// Outcome of checking one op over `cases` random inputs.
#[derive(Debug)]
pub struct OpCheck {
    pub op: &'static str,
    pub cases: usize,
    pub max_rel_err: f64,
}

impl OpCheck {
    pub fn passed(&self) -> bool {
        self.cases >= CASES && self.max_rel_err <= REL_TOL
    }
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn small_dims(r: &mut ChaCha8Rng, max: usize) -> Dims {
    Dims::new(r.gen_range(1..=2), r.gen_range(1..=3), r.gen_range(2..=max), r.gen_range(2..=max))
}

fn weights(r: &mut ChaCha8Rng, n: usize) -> Vec<f32> {
    (0..n).map(|_| r.gen_range(-1.0..1.0)).collect()
}

/// Analytic gradients of `weighted_sum(build(leaves), w)` for each leaf.
fn analytic(values: &[Tensor], build: impl Fn(&mut Graph, &[Var]) -> Var, w: &[f32]) -> Vec<Tensor> {
    let mut g = Graph::new();
    let leaves: Vec<Var> = values.iter().map(|t| g.leaf(t.clone(), true)).collect();
    let out = build(&mut g, &leaves);
    let loss = g.weighted_sum(out, w.to_vec()).unwrap();
    let grads = g.backward(loss).unwrap();
    leaves.iter().map(|&v| grads.get_or_zero(&g, v)).collect()
}

/// Analytic gradients of a scalar loss built directly by `build`.
fn analytic_scalar(values: &[Tensor], build: impl Fn(&mut Graph, &[Var]) -> Var) -> Vec<Tensor> {
    let mut g = Graph::new();
    let leaves: Vec<Var> = values.iter().map(|t| g.leaf(t.clone(), true)).collect();
    let loss = build(&mut g, &leaves);
    let grads = g.backward(loss).unwrap();
    leaves.iter().map(|&v| grads.get_or_zero(&g, v)).collect()
}

/// Worst error over every input of one case. `f` evaluates the reference
/// loss with input `k` replaced by the probe.
fn compare(values: &[Tensor], grads: &[Tensor], f: impl Fn(usize, &T64) -> f64) -> f64 {
    let mut worst = 0.0f64;
    for (k, (v, g)) in values.iter().zip(grads).enumerate() {
        let numeric = central_difference(&T64::from_tensor(v), FD_STEP, |p| f(k, p));
        worst = worst.max(max_rel_err(g, &numeric));
    }
    worst
}

fn with<'a>(values: &'a [T64], k: usize, probe: &'a T64) -> impl Fn(usize) -> &'a T64 {
    move |i| if i == k { probe } else { &values[i] }
}

pub fn conv2d_check(seed: u64) -> OpCheck {
    let mut r = rng(seed);
    let mut worst = 0.0f64;
    for _ in 0..CASES {
        let xd = small_dims(&mut r, 6);
        let k = r.gen_range(1..=3usize.min(xd.height()).min(xd.width()));
        let stride = r.gen_range(1..=2);
        let pad = r.gen_range(0..=1);
        let cout = r.gen_range(1..=3);
        let vals = vec![
            random_tensor(&mut r, xd, -1.0, 1.0),
            random_tensor(&mut r, Dims::new(cout, xd.channels(), k, k), -1.0, 1.0),
            random_tensor(&mut r, Dims::new(1, cout, 1, 1), -1.0, 1.0),
        ];
        let mut g = Graph::new();
        let x = g.constant(vals[0].clone());
        let wv = g.constant(vals[1].clone());
        let out_n = g.conv2d(x, wv, None, stride, pad).unwrap();
        let w = weights(&mut r, g.dims(out_n).numel());
        let grads = analytic(&vals, |g, l| g.conv2d(l[0], l[1], Some(l[2]), stride, pad).unwrap(), &w);
        let base: Vec<T64> = vals.iter().map(T64::from_tensor).collect();
        worst = worst.max(compare(&vals, &grads, |k, p| {
            let v = with(&base, k, p);
            weighted(&conv2d(v(0), v(1), Some(v(2)), stride, pad), &w)
        }));
    }
    OpCheck {
        op: "conv2d",
        cases: CASES,
        max_rel_err: worst,
    }
}

pub fn batchnorm_check(seed: u64, mode: BnMode) -> OpCheck {
    let mut r = rng(seed);
    let mut worst = 0.0f64;
    let cfg = BatchNormConfig::default();
    for case in 0..CASES {
        let xd = if case == 0 {
            Dims::new(4, 3, 5, 5)
        } else {
            Dims::new(r.gen_range(1..=4), r.gen_range(1..=3), r.gen_range(2..=5), r.gen_range(2..=5))
        };
        let c = xd.channels();
        let vals = vec![
            random_tensor(&mut r, xd, -2.0, 2.0),
            random_tensor(&mut r, Dims::new(1, c, 1, 1), 0.5, 1.5),
            random_tensor(&mut r, Dims::new(1, c, 1, 1), -0.5, 0.5),
        ];
        let rm: Vec<f32> = (0..c).map(|_| r.gen_range(-0.5..0.5)).collect();
        let rv: Vec<f32> = (0..c).map(|_| r.gen_range(0.5..2.0)).collect();
        let w = weights(&mut r, xd.numel());
        let grads = analytic(
            &vals,
            |g, l| {
                let (mut m, mut v) = (rm.clone(), rv.clone());
                g.batchnorm2d(l[0], l[1], l[2], &mut m, &mut v, mode, cfg).unwrap()
            },
            &w,
        );
        let base: Vec<T64> = vals.iter().map(T64::from_tensor).collect();
        let rm64: Vec<f64> = rm.iter().map(|&v| v as f64).collect();
        let rv64: Vec<f64> = rv.iter().map(|&v| v as f64).collect();
        worst = worst.max(compare(&vals, &grads, |k, p| {
            let v = with(&base, k, p);
            let y = match mode {
                BnMode::Eval => batchnorm_running(v(0), v(1), v(2), &rm64, &rv64, 1e-5),
                BnMode::Train | BnMode::Frozen => batchnorm_batch(v(0), v(1), v(2), 1e-5),
            };
            weighted(&y, &w)
        }));
    }
    OpCheck {
        op: match mode {
            BnMode::Eval => "batchnorm2d (eval)",
            _ => "batchnorm2d (train)",
        },
        cases: CASES,
        max_rel_err: worst,
    }
}

/// Distinct values spaced well beyond the finite-difference step, so that
/// no probe can change an argmax.
fn distinct(r: &mut ChaCha8Rng, dims: Dims) -> Tensor {
    let n = dims.numel();
    let mut order: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        order.swap(i, r.gen_range(0..=i));
    }
    let data = order.iter().map(|&o| (o as f32 - n as f32 / 2.0) * 0.05).collect();
    Tensor::from_vec(dims, data).unwrap()
}

pub fn pool_unpool_check(seed: u64) -> OpCheck {
    let mut r = rng(seed);
    let mut worst = 0.0f64;
    for _ in 0..CASES {
        let xd = Dims::new(r.gen_range(1..=2), r.gen_range(1..=3), 2 * r.gen_range(1..=3), 2 * r.gen_range(1..=3));
        let vals = vec![distinct(&mut r, xd)];
        let w = weights(&mut r, xd.numel());
        let (h, wd) = (xd.height(), xd.width());
        let grads = analytic(
            &vals,
            |g, l| {
                let (p, idx) = g.maxpool2d_indices(l[0], 2).unwrap();
                g.max_unpool2d(p, &idx, (h, wd)).unwrap()
            },
            &w,
        );
        worst = worst.max(compare(&vals, &grads, |_, p| {
            let (y, idx) = maxpool2(p);
            weighted(&unpool(&y, &idx, h, wd), &w)
        }));
        // pooling on its own
        let wp = weights(&mut r, xd.numel() / 4);
        let grads = analytic(&vals, |g, l| g.maxpool2d_indices(l[0], 2).unwrap().0, &wp);
        worst = worst.max(compare(&vals, &grads, |_, p| weighted(&maxpool2(p).0, &wp)));
    }
    OpCheck {
        op: "maxpool2d/max_unpool2d",
        cases: CASES,
        max_rel_err: worst,
    }
}

pub fn activation_check(seed: u64, which: &'static str) -> OpCheck {
    let mut r = rng(seed);
    let mut worst = 0.0f64;
    for _ in 0..CASES {
        let xd = small_dims(&mut r, 5);
        let vals = vec![random_away_from_zero(&mut r, xd, 0.01)];
        let vals = vec![Tensor::from_vec(xd, vals[0].data().iter().map(|v| v * 3.0).collect()).unwrap()];
        let w = weights(&mut r, xd.numel());
        let grads = analytic(
            &vals,
            |g, l| match which {
                "relu" => g.relu(l[0]),
                "leaky_relu" => g.leaky_relu(l[0], 0.2),
                "sigmoid" => g.sigmoid(l[0]),
                _ => g.softmax_channels(l[0]),
            },
            &w,
        );
        worst = worst.max(compare(&vals, &grads, |_, p| {
            let y = match which {
                "relu" => relu(p),
                "leaky_relu" => leaky_relu(p, 0.2),
                "sigmoid" => sigmoid(p),
                _ => softmax_channels(p),
            };
            weighted(&y, &w)
        }));
    }
    OpCheck {
        op: which,
        cases: CASES,
        max_rel_err: worst,
    }
}

pub fn concat_check(seed: u64) -> OpCheck {
    let mut r = rng(seed);
    let mut worst = 0.0f64;
    for _ in 0..CASES {
        let ad = small_dims(&mut r, 5);
        let bd = Dims::new(ad.batch(), r.gen_range(1..=3), ad.height(), ad.width());
        let vals = vec![random_tensor(&mut r, ad, -1.0, 1.0), random_tensor(&mut r, bd, -1.0, 1.0)];
        let w = weights(&mut r, ad.numel() + bd.numel());
        let grads = analytic(&vals, |g, l| g.concat_channels(l[0], l[1]).unwrap(), &w);
        let base: Vec<T64> = vals.iter().map(T64::from_tensor).collect();
        worst = worst.max(compare(&vals, &grads, |k, p| {
            let v = with(&base, k, p);
            weighted(&concat(v(0), v(1)), &w)
        }));
    }
    OpCheck {
        op: "concat_channels",
        cases: CASES,
        max_rel_err: worst,
    }
}

pub fn cross_entropy_check(seed: u64) -> OpCheck {
    let mut r = rng(seed);
    let mut worst = 0.0f64;
    for _ in 0..CASES {
        let d = Dims::new(r.gen_range(1..=2), r.gen_range(2..=4), r.gen_range(1..=4), r.gen_range(1..=4));
        let vals = vec![random_tensor(&mut r, d, -3.0, 3.0)];
        let target: Vec<u8> = (0..d.batch() * d.plane())
            .map(|_| r.gen_range(0..d.channels()) as u8)
            .collect();
        let t: Arc<[u8]> = target.clone().into();
        let grads = analytic_scalar(&vals, |g, l| g.cross_entropy(l[0], t.clone()).unwrap());
        worst = worst.max(compare(&vals, &grads, |_, p| cross_entropy(p, &target)));
    }
    OpCheck {
        op: "cross_entropy",
        cases: CASES,
        max_rel_err: worst,
    }
}

pub fn bce_check(seed: u64) -> OpCheck {
    let mut r = rng(seed);
    let mut worst = 0.0f64;
    for _ in 0..CASES {
        let d = Dims::new(r.gen_range(1..=4), r.gen_range(1..=3), 1, 1);
        let vals = vec![random_tensor(&mut r, d, 0.05, 0.95)];
        let y: Vec<f32> = (0..d.numel()).map(|_| r.gen_range(0..2) as f32).collect();
        let y64: Vec<f64> = y.iter().map(|&v| v as f64).collect();
        let grads = analytic_scalar(&vals, |g, l| g.binary_cross_entropy(l[0], &y).unwrap());
        worst = worst.max(compare(&vals, &grads, |_, p| binary_cross_entropy(&p.data, &y64)));
    }
    OpCheck {
        op: "binary_cross_entropy",
        cases: CASES,
        max_rel_err: worst,
    }
}

/// Remaining plumbing ops (channel select, per-sample permutation and
/// selection, global pooling, elementwise mul/add/scale).
pub fn plumbing_check(seed: u64) -> OpCheck {
    let mut r = rng(seed);
    let mut worst = 0.0f64;
    for _ in 0..CASES {
        let d = Dims::new(r.gen_range(1..=3), 3, r.gen_range(1..=4), r.gen_range(1..=4));
        let vals = vec![random_tensor(&mut r, d, -1.0, 1.0), random_tensor(&mut r, d, -1.0, 1.0)];
        let perms: Vec<Vec<usize>> = (0..d.batch())
            .map(|_| {
                let mut p = vec![0, 1, 2];
                for i in (1..3).rev() {
                    p.swap(i, r.gen_range(0..=i));
                }
                p
            })
            .collect();
        let take: Vec<bool> = (0..d.batch()).map(|_| r.gen_bool(0.5)).collect();
        let ch = r.gen_range(0..3);
        let w = weights(&mut r, d.numel());
        let wc = weights(&mut r, d.batch() * d.plane());
        let wg = weights(&mut r, d.batch() * 3);
        let grads = analytic_scalar(&vals, |g, l| {
            let prod = g.mul(l[0], l[1]).unwrap();
            let sum = g.add(prod, l[1]).unwrap();
            let scaled = g.scale(sum, 0.7);
            let permuted = g.permute_channels(scaled, perms.clone()).unwrap();
            let picked = g.select_samples(permuted, l[0], take.clone()).unwrap();
            let a = g.weighted_sum(picked, w.clone()).unwrap();
            let c = g.channel(l[1], ch).unwrap();
            let b = g.weighted_sum(c, wc.clone()).unwrap();
            let gp = g.global_avg_pool(l[0]);
            let c2 = g.weighted_sum(gp, wg.clone()).unwrap();
            let ab = g.add(a, b).unwrap();
            g.add(ab, c2).unwrap()
        });
        let base: Vec<T64> = vals.iter().map(T64::from_tensor).collect();
        worst = worst.max(compare(&vals, &grads, |k, p| {
            let v = with(&base, k, p);
            let (x0, x1) = (v(0), v(1));
            let [b, c, h, wd] = x0.dims;
            let plane = h * wd;
            let mut total = 0.0;
            for bi in 0..b {
                for j in 0..c {
                    for i in 0..plane {
                        let o = (bi * c + j) * plane + i;
                        let value = if take[bi] {
                            let src = (bi * c + perms[bi][j]) * plane + i;
                            0.7 * (x0.data[src] * x1.data[src] + x1.data[src])
                        } else {
                            x0.data[o]
                        };
                        total += value * w[o] as f64;
                    }
                }
                for i in 0..plane {
                    total += x1.data[(bi * c + ch) * plane + i] * wc[bi * plane + i] as f64;
                }
                for j in 0..c {
                    let mean: f64 = x0.data[(bi * c + j) * plane..(bi * c + j + 1) * plane].iter().sum::<f64>() / plane as f64;
                    total += mean * wg[bi * c + j] as f64;
                }
            }
            total
        }));
    }
    OpCheck {
        op: "channel/permute/select/gap/mul/add/scale",
        cases: CASES,
        max_rel_err: worst,
    }
}

/// Every op check, in a fixed order.
pub fn op_suite() -> Vec<OpCheck> {
    vec![
        conv2d_check(11),
        batchnorm_check(12, BnMode::Train),
        batchnorm_check(13, BnMode::Eval),
        pool_unpool_check(14),
        activation_check(15, "relu"),
        activation_check(16, "leaky_relu"),
        activation_check(17, "sigmoid"),
        activation_check(18, "softmax_channels"),
        concat_check(19),
        cross_entropy_check(20),
        bce_check(21),
        plumbing_check(22),
    ]
}

/// One sampled coordinate of the end-to-end segmentation network check.
#[derive(Debug)]
pub struct Coordinate {
    pub param: String,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
}

impl Coordinate {
    pub fn rel_err(&self) -> f64 {
        rel_err(self.analytic, self.numeric, REL_FLOOR)
    }
}

/// End-to-end check result. `kinks_skipped` counts sampled coordinates
/// rejected because a ReLU or pooling switch lies within one step of the
/// probe, where the two one-sided differences disagree and a central
/// difference is not a derivative estimate.
#[derive(Debug)]
pub struct SegCheck {
    pub coords: Vec<Coordinate>,
    pub kinks_skipped: usize,
}

impl SegCheck {
    pub fn worst(&self) -> f64 {
        self.coords.iter().map(Coordinate::rel_err).fold(0.0, f64::max)
    }
}

/// Cross-entropy of the width-1/8 segmentation network on a `1x3x32x32`
/// input; analytic gradients on `per_param` random coordinates of every
/// trainable parameter are compared against the f64 reference network.
pub fn segnet_check(seed: u64, per_param: usize) -> SegCheck {
    let cfg = SegNetConfig {
        width: "1/8".parse().unwrap(),
        ..SegNetConfig::default()
    };
    let net = SegmentationNet::build(cfg, seed).unwrap();
    let mut r = rng(seed ^ 0x5eed);
    let input = random_tensor(&mut r, Dims::new(1, 3, 32, 32), -1.0, 1.0);
    let target: Vec<u8> = (0..32 * 32).map(|_| r.gen_range(0..3)).collect();

    let mut g = Graph::new();
    let x = g.constant(input.clone());
    let fwd = net.forward(&mut g, x, BnMode::Frozen, true).unwrap();
    let loss = g.cross_entropy(fwd.logits, target.clone().into()).unwrap();
    let mut grads = g.backward(loss).unwrap();
    let gm = fwd.grads(&mut grads);

    let input64 = T64::from_tensor(&input);
    let centre = seg_loss(net.params(), &[], &input64, &target, cfg.skip_concat);
    let mut coords = Vec::new();
    let mut kinks_skipped = 0;
    for (name, entry) in net.params().iter() {
        if !entry.trainable {
            continue;
        }
        let grad = gm.get(name).unwrap_or_else(|| panic!("no gradient for {name}"));
        let base = T64::from_tensor(&entry.value);
        let mut taken = 0;
        while taken < per_param {
            let index = r.gen_range(0..base.data.len());
            let mut probe = base.clone();
            probe.data[index] += FD_STEP;
            let up = seg_loss(net.params(), &[(name, &probe)], &input64, &target, cfg.skip_concat);
            probe.data[index] -= 2.0 * FD_STEP;
            let down = seg_loss(net.params(), &[(name, &probe)], &input64, &target, cfg.skip_concat);
            let (fwd_d, bwd_d) = ((up - centre) / FD_STEP, (centre - down) / FD_STEP);
            if rel_err(fwd_d, bwd_d, REL_FLOOR) > 2.0 * REL_TOL {
                kinks_skipped += 1;
                continue;
            }
            coords.push(Coordinate {
                param: name.to_string(),
                index,
                analytic: grad.data()[index] as f64,
                numeric: (up - down) / (2.0 * FD_STEP),
            });
            taken += 1;
        }
    }
    SegCheck { coords, kinks_skipped }
}
