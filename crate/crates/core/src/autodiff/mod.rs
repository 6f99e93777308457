//! Reverse-mode automatic differentiation over [`Tensor`] values.
//!
//! A [`Graph`] is a tape: every operation appends a node holding its output
//! value and whatever it needs for the backward sweep. Nodes only refer to
//! earlier nodes, so the tape is acyclic by construction and replaying it in
//! reverse order visits every node after all of its consumers.
//!
//! Leaves created with `requires_grad = false` are constants. Gradient flow
//! is pruned at them, which is how frozen networks and ground-truth masks are
//! kept out of an update.

mod activation;
mod conv;
pub(crate) mod gemm;
mod loss;
mod norm;
mod pool;
mod shape;

use std::sync::Arc;

use crate::tensor::{Dims, Tensor, TensorError};

pub use norm::{BatchNormConfig, BnMode};
pub use pool::PoolIndices;

/// Handle to a node recorded on a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
pub(crate) enum Op {
    Leaf,
    Conv2d {
        x: Var,
        w: Var,
        b: Option<Var>,
        stride: usize,
        pad: usize,
    },
    MaxPool {
        x: Var,
        indices: PoolIndices,
    },
    MaxUnpool {
        y: Var,
        indices: PoolIndices,
    },
    BatchNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        mean: Vec<f32>,
        inv_std: Vec<f32>,
        batch_stats: bool,
    },
    Relu {
        x: Var,
    },
    LeakyRelu {
        x: Var,
        slope: f32,
    },
    Sigmoid {
        x: Var,
    },
    SoftmaxChannels {
        x: Var,
    },
    Concat {
        a: Var,
        b: Var,
    },
    Channel {
        x: Var,
        channel: usize,
    },
    PermuteChannels {
        x: Var,
        perms: Vec<Vec<usize>>,
    },
    SelectSamples {
        a: Var,
        b: Var,
        take_a: Vec<bool>,
    },
    GlobalAvgPool {
        x: Var,
    },
    CrossEntropy {
        logits: Var,
        target: Arc<[u8]>,
    },
    BinaryCrossEntropy {
        p: Var,
        target: Vec<f32>,
    },
    Sum {
        x: Var,
    },
    WeightedSum {
        x: Var,
        weights: Vec<f32>,
    },
    Mul {
        a: Var,
        b: Var,
    },
    Add {
        a: Var,
        b: Var,
    },
    Scale {
        x: Var,
        factor: f32,
    },
}

struct Node {
    value: Tensor,
    requires_grad: bool,
    /// Loss value accumulated in double precision, for scalar loss nodes.
    scalar: Option<f64>,
    op: Op,
}

/// Operation tape.
#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

impl Graph {
    pub fn new() -> Self {
        Graph { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Record a leaf tensor.
    pub fn leaf(&mut self, value: Tensor, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            requires_grad,
            scalar: None,
            op: Op::Leaf,
        });
        Var(self.nodes.len() - 1)
    }

    /// Leaf that never receives a gradient.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.leaf(value, false)
    }

    /// Handle of the `i`-th recorded node.
    pub fn var(&self, i: usize) -> Var {
        assert!(i < self.nodes.len(), "node {i} not recorded");
        Var(i)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn dims(&self, v: Var) -> Dims {
        self.nodes[v.0].value.dims()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Scalar value of a one-element node, in double precision when the
    /// producing op accumulated one.
    pub fn scalar(&self, v: Var) -> f64 {
        let node = &self.nodes[v.0];
        node.scalar.unwrap_or_else(|| node.value.data()[0] as f64)
    }

    /// Number of recorded nodes of a given kind, e.g. `"concat"`.
    pub fn count_ops(&self, kind: &str) -> usize {
        self.nodes.iter().filter(|n| n.op.kind() == kind).count()
    }

    pub(crate) fn push(&mut self, value: Tensor, op: Op) -> Var {
        self.push_scalar(value, op, None)
    }

    pub(crate) fn push_scalar(&mut self, value: Tensor, op: Op, scalar: Option<f64>) -> Var {
        let requires_grad = op.inputs().iter().any(|v| self.nodes[v.0].requires_grad);
        self.nodes.push(Node {
            value,
            requires_grad,
            scalar,
            op,
        });
        Var(self.nodes.len() - 1)
    }

    /// Propagate d(loss)/d(node) back to every gradient-requiring leaf.
    pub fn backward(&self, loss: Var) -> Result<Gradients, TensorError> {
        let root = &self.nodes[loss.0];
        if root.value.numel() != 1 {
            return Err(TensorError::shape(
                "backward",
                format!("root must be a scalar, got {}", root.value.dims()),
            ));
        }
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        if root.requires_grad {
            grads[loss.0] = Some(Tensor::full(root.value.dims(), 1.0));
        }
        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if matches!(node.op, Op::Leaf) || !node.requires_grad {
                continue;
            }
            let Some(grad) = grads[i].take() else {
                continue;
            };
            let mut acc = Accumulator {
                graph: self,
                grads: &mut grads,
            };
            self.backward_node(Var(i), &node.op, &grad, &mut acc);
        }
        Ok(Gradients { grads })
    }

    fn backward_node(&self, out: Var, op: &Op, grad: &Tensor, acc: &mut Accumulator<'_>) {
        match op {
            Op::Leaf => {}
            Op::Conv2d {
                x,
                w,
                b,
                stride,
                pad,
            } => conv::backward(self, *x, *w, *b, *stride, *pad, grad, acc),
            Op::MaxPool { x, indices } => pool::pool_backward(*x, indices, grad, acc),
            Op::MaxUnpool { y, indices } => pool::unpool_backward(self, *y, indices, grad, acc),
            Op::BatchNorm {
                x,
                gamma,
                beta,
                mean,
                inv_std,
                batch_stats,
            } => norm::backward(self, *x, *gamma, *beta, mean, inv_std, *batch_stats, grad, acc),
            Op::Relu { x } => activation::relu_backward(self, *x, out, grad, acc),
            Op::LeakyRelu { x, slope } => {
                activation::leaky_relu_backward(self, *x, *slope, grad, acc)
            }
            Op::Sigmoid { x } => activation::sigmoid_backward(self, *x, out, grad, acc),
            Op::SoftmaxChannels { x } => activation::softmax_backward(self, *x, out, grad, acc),
            Op::Concat { a, b } => shape::concat_backward(self, *a, *b, grad, acc),
            Op::Channel { x, channel } => shape::channel_backward(self, *x, *channel, grad, acc),
            Op::PermuteChannels { x, perms } => {
                shape::permute_backward(self, *x, perms, grad, acc)
            }
            Op::SelectSamples { a, b, take_a } => {
                shape::select_backward(self, *a, *b, take_a, grad, acc)
            }
            Op::GlobalAvgPool { x } => shape::gap_backward(self, *x, grad, acc),
            Op::CrossEntropy { logits, target } => {
                loss::cross_entropy_backward(self, *logits, target, grad, acc)
            }
            Op::BinaryCrossEntropy { p, target } => {
                loss::bce_backward(self, *p, target, grad, acc)
            }
            Op::Sum { x } => shape::sum_backward(self, *x, grad, acc),
            Op::WeightedSum { x, weights } => {
                shape::weighted_sum_backward(self, *x, weights, grad, acc)
            }
            Op::Mul { a, b } => shape::mul_backward(self, *a, *b, grad, acc),
            Op::Add { a, b } => {
                acc.add(*a, grad.clone());
                acc.add(*b, grad.clone());
            }
            Op::Scale { x, factor } => {
                let mut g = grad.clone();
                g.data_mut().iter_mut().for_each(|v| *v *= factor);
                acc.add(*x, g);
            }
        }
    }
}

impl Op {
    fn inputs(&self) -> Vec<Var> {
        match self {
            Op::Leaf => vec![],
            Op::Conv2d { x, w, b, .. } => {
                let mut v = vec![*x, *w];
                v.extend(b);
                v
            }
            Op::MaxPool { x, .. }
            | Op::Relu { x }
            | Op::LeakyRelu { x, .. }
            | Op::Sigmoid { x }
            | Op::SoftmaxChannels { x }
            | Op::Channel { x, .. }
            | Op::PermuteChannels { x, .. }
            | Op::GlobalAvgPool { x }
            | Op::Sum { x }
            | Op::WeightedSum { x, .. }
            | Op::Scale { x, .. } => vec![*x],
            Op::MaxUnpool { y, .. } => vec![*y],
            Op::BatchNorm { x, gamma, beta, .. } => vec![*x, *gamma, *beta],
            Op::Concat { a, b }
            | Op::SelectSamples { a, b, .. }
            | Op::Mul { a, b }
            | Op::Add { a, b } => vec![*a, *b],
            Op::CrossEntropy { logits, .. } => vec![*logits],
            Op::BinaryCrossEntropy { p, .. } => vec![*p],
        }
    }

    fn kind(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::Conv2d { .. } => "conv2d",
            Op::MaxPool { .. } => "maxpool",
            Op::MaxUnpool { .. } => "maxunpool",
            Op::BatchNorm { .. } => "batchnorm",
            Op::Relu { .. } => "relu",
            Op::LeakyRelu { .. } => "leaky_relu",
            Op::Sigmoid { .. } => "sigmoid",
            Op::SoftmaxChannels { .. } => "softmax",
            Op::Concat { .. } => "concat",
            Op::Channel { .. } => "channel",
            Op::PermuteChannels { .. } => "permute",
            Op::SelectSamples { .. } => "select",
            Op::GlobalAvgPool { .. } => "global_avg_pool",
            Op::CrossEntropy { .. } => "cross_entropy",
            Op::BinaryCrossEntropy { .. } => "bce",
            Op::Sum { .. } => "sum",
            Op::WeightedSum { .. } => "weighted_sum",
            Op::Mul { .. } => "mul",
            Op::Add { .. } => "add",
            Op::Scale { .. } => "scale",
        }
    }
}

/// Gradient sink used by per-op backward rules.
pub(crate) struct Accumulator<'g> {
    graph: &'g Graph,
    grads: &'g mut Vec<Option<Tensor>>,
}

impl Accumulator<'_> {
    pub(crate) fn wants(&self, v: Var) -> bool {
        self.graph.nodes[v.0].requires_grad
    }

    pub(crate) fn add(&mut self, v: Var, g: Tensor) {
        if !self.wants(v) {
            return;
        }
        match &mut self.grads[v.0] {
            Some(existing) => existing.add_assign(&g),
            slot @ None => *slot = Some(g),
        }
    }
}

/// Result of [`Graph::backward`]: gradients of the gradient-requiring leaves.
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    /// Gradient for `v`, or `None` if nothing flowed into it.
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    /// Gradient for `v`, zero-filled when untouched.
    pub fn get_or_zero(&self, graph: &Graph, v: Var) -> Tensor {
        self.get(v)
            .cloned()
            .unwrap_or_else(|| Tensor::zeros(graph.dims(v)))
    }

    pub fn take(&mut self, v: Var) -> Option<Tensor> {
        self.grads.get_mut(v.0).and_then(|g| g.take())
    }
}
