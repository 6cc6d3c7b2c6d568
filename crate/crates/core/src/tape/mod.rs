//! Reverse-mode automatic differentiation over a Wengert tape.
//!
//! Every differentiable op appends a node holding its output value and the
//! information its backward rule needs. [`Tape::backward`] walks the nodes in
//! exact reverse execution order, so replaying the same graph always yields
//! bit-identical gradients. Contributions from multiple uses of one value are
//! summed in that fixed order.

mod conv;
mod linalg;
mod norm;
mod pointwise;
mod shape;

use std::collections::HashMap;
use std::hash::Hasher;

use crate::error::{Result, SampError};
use crate::param::{ParamId, ParamStore};
use crate::real::Real;
use crate::tensor::Tensor;

pub use conv::ConvGeom;
pub use pointwise::UnaryKind;

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Coarse op category, used for instrumentation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum OpKind {
    Leaf,
    Param,
    Conv2d,
    ConvTranspose2d,
    MaxPool2d,
    Softmax,
    LayerNorm,
    Unary,
    Linear,
    Bmm,
    Binary,
    Scale,
    AddScalar,
    SumAxis,
    SumAll,
    MeanAll,
    Reshape,
    Permute,
    Slice,
    BroadcastTo,
    Mse,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum BinaryKind {
    Add,
    Sub,
    Mul,
    Div,
}

pub(crate) enum Op<T> {
    Leaf,
    Param,
    Conv2d {
        x: Var,
        w: Var,
        b: Option<Var>,
        geom: ConvGeom,
    },
    ConvTranspose2d {
        x: Var,
        w: Var,
        b: Option<Var>,
        geom: ConvGeom,
    },
    MaxPool2d {
        x: Var,
        argmax: Vec<usize>,
    },
    Softmax {
        x: Var,
        axis: usize,
    },
    LayerNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        xhat: Vec<T>,
        rstd: Vec<T>,
    },
    Unary {
        x: Var,
        kind: UnaryKind<T>,
    },
    Linear {
        x: Var,
        w: Var,
        b: Option<Var>,
    },
    Bmm {
        a: Var,
        b: Var,
        trans_a: bool,
        trans_b: bool,
    },
    Binary {
        a: Var,
        b: Var,
        kind: BinaryKind,
    },
    Scale {
        x: Var,
        factor: T,
    },
    AddScalar {
        x: Var,
    },
    SumAxis {
        x: Var,
        axis: usize,
    },
    SumAll {
        x: Var,
    },
    MeanAll {
        x: Var,
    },
    Reshape {
        x: Var,
    },
    Permute {
        x: Var,
        axes: Vec<usize>,
    },
    Slice {
        x: Var,
        axis: usize,
        start: usize,
    },
    BroadcastTo {
        x: Var,
    },
    Mse {
        pred: Var,
        target: Var,
    },
}

impl<T> Op<T> {
    fn kind(&self) -> OpKind {
        match self {
            Op::Leaf => OpKind::Leaf,
            Op::Param => OpKind::Param,
            Op::Conv2d { .. } => OpKind::Conv2d,
            Op::ConvTranspose2d { .. } => OpKind::ConvTranspose2d,
            Op::MaxPool2d { .. } => OpKind::MaxPool2d,
            Op::Softmax { .. } => OpKind::Softmax,
            Op::LayerNorm { .. } => OpKind::LayerNorm,
            Op::Unary { .. } => OpKind::Unary,
            Op::Linear { .. } => OpKind::Linear,
            Op::Bmm { .. } => OpKind::Bmm,
            Op::Binary { .. } => OpKind::Binary,
            Op::Scale { .. } => OpKind::Scale,
            Op::AddScalar { .. } => OpKind::AddScalar,
            Op::SumAxis { .. } => OpKind::SumAxis,
            Op::SumAll { .. } => OpKind::SumAll,
            Op::MeanAll { .. } => OpKind::MeanAll,
            Op::Reshape { .. } => OpKind::Reshape,
            Op::Permute { .. } => OpKind::Permute,
            Op::Slice { .. } => OpKind::Slice,
            Op::BroadcastTo { .. } => OpKind::BroadcastTo,
            Op::Mse { .. } => OpKind::Mse,
        }
    }
}

struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
    needs_grad: bool,
}

/// Ordered record of executed differentiable ops.
pub struct Tape<T> {
    nodes: Vec<Node<T>>,
    params: HashMap<ParamId, Var>,
    param_order: Vec<(ParamId, Var)>,
}

impl<T: Real> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Real> Tape<T> {
    pub fn new() -> Self {
        Tape {
            nodes: Vec::new(),
            params: HashMap::new(),
            param_order: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Records a constant input (no gradient).
    pub fn input(&mut self, value: Tensor<T>) -> Var {
        self.push_raw(value, Op::Leaf, false)
    }

    /// Records a leaf whose gradient is wanted.
    pub fn leaf(&mut self, value: Tensor<T>) -> Var {
        self.push_raw(value, Op::Leaf, true)
    }

    /// Records (once per tape) the current value of a stored parameter.
    pub fn param(&mut self, store: &ParamStore<T>, id: ParamId) -> Var {
        if let Some(&v) = self.params.get(&id) {
            return v;
        }
        let value = store.get(id).tensor().clone();
        let v = self.push_raw(value, Op::Param, true);
        self.params.insert(id, v);
        self.param_order.push((id, v));
        v
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn data(&self, v: Var) -> &[T] {
        self.nodes[v.0].value.data()
    }

    /// Number of recorded ops of the given kind.
    pub fn count(&self, kind: OpKind) -> usize {
        self.nodes.iter().filter(|n| n.op.kind() == kind).count()
    }

    /// Total bytes held by recorded values.
    pub fn value_bytes(&self) -> usize {
        self.nodes.iter().map(|n| n.value.nbytes()).sum()
    }

    /// Hash of every piecewise-linear decision taken in the forward pass:
    /// ReLU / LeakyReLU input signs and max-pool winners. Two evaluations with
    /// equal signatures lie in the same smooth region of the graph.
    pub fn activation_signature(&self) -> u64 {
        let mut h = fnv::FnvHasher::default();
        for node in &self.nodes {
            match &node.op {
                Op::Unary { x, kind } if kind.is_piecewise() => {
                    for v in self.nodes[x.0].value.data() {
                        h.write_u8((*v > T::zero()) as u8);
                    }
                }
                Op::MaxPool2d { argmax, .. } => {
                    for &i in argmax {
                        h.write_usize(i);
                    }
                }
                _ => {}
            }
        }
        h.finish()
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    fn push_raw(&mut self, value: Tensor<T>, op: Op<T>, needs_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    /// Pushes a computed node after validating finiteness.
    fn push(&mut self, name: &'static str, value: Tensor<T>, op: Op<T>, inputs: &[Var]) -> Result<Var> {
        if !value.is_finite() {
            return Err(SampError::NonFinite { op: name });
        }
        let needs_grad = inputs.iter().any(|&v| self.needs(v));
        Ok(self.push_raw(value, op, needs_grad))
    }

    /// Runs reverse-mode differentiation from a scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients<T>> {
        let loss_shape = self.shape(loss);
        if loss_shape.iter().product::<usize>() != 1 {
            return Err(SampError::NonScalarLoss {
                shape: loss_shape.to_vec(),
            });
        }
        let n = self.nodes.len();
        let mut grads: Vec<Option<Vec<T>>> = (0..n).map(|_| None).collect();
        let mut kept: Vec<Option<Vec<T>>> = (0..n).map(|_| None).collect();
        grads[loss.0] = Some(vec![T::one()]);
        let mut live = std::mem::size_of::<T>();
        let mut peak = live;
        let mut contribs: Vec<(Var, Vec<T>)> = Vec::new();

        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            if !node.needs_grad {
                live -= g.len() * std::mem::size_of::<T>();
                continue;
            }
            match &node.op {
                Op::Leaf | Op::Param => {
                    kept[i] = Some(g);
                    continue;
                }
                op => self.backward_op(Var(i), op, &g, &mut contribs)?,
            }
            live -= g.len() * std::mem::size_of::<T>();
            for (v, c) in contribs.drain(..) {
                if !self.needs(v) {
                    continue;
                }
                match &mut grads[v.0] {
                    Some(acc) => acc.iter_mut().zip(&c).for_each(|(a, &b)| *a += b),
                    slot @ None => {
                        live += c.len() * std::mem::size_of::<T>();
                        *slot = Some(c);
                    }
                }
            }
            peak = peak.max(live);
        }
        Ok(Gradients {
            grads: kept,
            params: self.param_order.clone(),
            peak_bytes: peak,
        })
    }

    fn backward_op(&self, out: Var, op: &Op<T>, g: &[T], acc: &mut Vec<(Var, Vec<T>)>) -> Result<()> {
        match op {
            Op::Leaf | Op::Param => {}
            Op::Conv2d { x, w, b, geom } => self.conv2d_backward(*x, *w, *b, geom, g, acc),
            Op::ConvTranspose2d { x, w, b, geom } => {
                self.conv_transpose2d_backward(*x, *w, *b, geom, g, acc)
            }
            Op::MaxPool2d { x, argmax } => self.maxpool2d_backward(*x, argmax, g, acc),
            Op::Softmax { x, axis } => self.softmax_backward(out, *x, *axis, g, acc),
            Op::LayerNorm {
                x,
                gamma,
                beta,
                xhat,
                rstd,
            } => self.layer_norm_backward(*x, *gamma, *beta, xhat, rstd, g, acc),
            Op::Unary { x, kind } => self.unary_backward(out, *x, kind, g, acc),
            Op::Linear { x, w, b } => self.linear_backward(*x, *w, *b, g, acc),
            Op::Bmm {
                a,
                b,
                trans_a,
                trans_b,
            } => self.bmm_backward(*a, *b, *trans_a, *trans_b, g, acc),
            Op::Binary { a, b, kind } => self.binary_backward(out, *a, *b, *kind, g, acc),
            Op::Scale { x, factor } => acc.push((*x, g.iter().map(|&v| v * *factor).collect())),
            Op::AddScalar { x } => acc.push((*x, g.to_vec())),
            Op::SumAxis { x, axis } => self.sum_axis_backward(*x, *axis, g, acc),
            Op::SumAll { x } => acc.push((*x, vec![g[0]; self.value(*x).numel()])),
            Op::MeanAll { x } => {
                let n = self.value(*x).numel();
                let v = g[0] / T::from_usize(n).unwrap();
                acc.push((*x, vec![v; n]));
            }
            Op::Reshape { x } => acc.push((*x, g.to_vec())),
            Op::Permute { x, axes } => self.permute_backward(*x, axes, g, acc),
            Op::Slice { x, axis, start } => self.slice_backward(out, *x, *axis, *start, g, acc),
            Op::BroadcastTo { x } => self.broadcast_to_backward(out, *x, g, acc),
            Op::Mse { pred, target } => self.mse_backward(*pred, *target, g, acc),
        }
        Ok(())
    }
}

/// Gradients produced by one backward pass.
pub struct Gradients<T> {
    grads: Vec<Option<Vec<T>>>,
    params: Vec<(ParamId, Var)>,
    peak_bytes: usize,
}

impl<T: Real> Gradients<T> {
    /// Gradient of the loss with respect to a leaf or parameter node.
    pub fn wrt(&self, v: Var) -> Option<&[T]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }

    pub fn param(&self, id: ParamId) -> Option<&[T]> {
        self.params
            .iter()
            .find(|(p, _)| *p == id)
            .and_then(|(_, v)| self.wrt(*v))
    }

    /// Peak bytes of simultaneously live gradient buffers during backward.
    pub fn peak_bytes(&self) -> usize {
        self.peak_bytes
    }

    /// Adds each parameter gradient into the store's gradient buffers.
    pub fn accumulate_into(&self, store: &mut ParamStore<T>) -> Result<()> {
        for &(id, v) in &self.params {
            if let Some(g) = self.wrt(v) {
                store.get_mut(id).tensor_mut().accumulate_grad(g)?;
            }
        }
        Ok(())
    }
}
