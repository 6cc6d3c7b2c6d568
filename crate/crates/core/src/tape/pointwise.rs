//! Elementwise ops, numpy-style broadcasting, and scalar arithmetic.

use super::{BinaryKind, Op, Tape, Var};
use crate::error::{Result, SampError};
use crate::real::Real;
use crate::tensor::{strides, Tensor};

/// Elementwise nonlinearity.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum UnaryKind<T> {
    Relu,
    LeakyRelu(T),
    Sigmoid,
    Tanh,
    Softplus,
}

impl<T: Real> UnaryKind<T> {
    pub(super) fn is_piecewise(&self) -> bool {
        matches!(self, UnaryKind::Relu | UnaryKind::LeakyRelu(_))
    }

    fn apply(&self, x: T) -> T {
        match *self {
            UnaryKind::Relu => x.max(T::zero()),
            UnaryKind::LeakyRelu(slope) => {
                if x > T::zero() {
                    x
                } else {
                    slope * x
                }
            }
            UnaryKind::Sigmoid => sigmoid(x),
            UnaryKind::Tanh => x.tanh(),
            UnaryKind::Softplus => softplus(x),
        }
    }

    /// Derivative given input `x` and output `y`.
    fn derivative(&self, x: T, y: T) -> T {
        match *self {
            UnaryKind::Relu => {
                if x > T::zero() {
                    T::one()
                } else {
                    T::zero()
                }
            }
            UnaryKind::LeakyRelu(slope) => {
                if x > T::zero() {
                    T::one()
                } else {
                    slope
                }
            }
            UnaryKind::Sigmoid => y * (T::one() - y),
            UnaryKind::Tanh => T::one() - y * y,
            UnaryKind::Softplus => sigmoid(x),
        }
    }
}

pub(crate) fn sigmoid<T: Real>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

/// `ln(1 + e^x)` without overflow.
pub(crate) fn softplus<T: Real>(x: T) -> T {
    x.max(T::zero()) + (-x.abs()).exp().ln_1p()
}

/// Broadcast result shape of two operands (trailing-axis alignment).
pub(crate) fn broadcast_shape(a: &[usize], b: &[usize]) -> Option<Vec<usize>> {
    let rank = a.len().max(b.len());
    let mut out = vec![0; rank];
    for i in 0..rank {
        let da = if i + a.len() >= rank { a[i + a.len() - rank] } else { 1 };
        let db = if i + b.len() >= rank { b[i + b.len() - rank] } else { 1 };
        out[i] = match (da, db) {
            (x, y) if x == y => x,
            (1, y) => y,
            (x, 1) => x,
            _ => return None,
        };
    }
    Some(out)
}

/// For each flat index of `out_shape`, the flat index into an operand of
/// `in_shape` broadcast against it. `None` when the shapes are equal.
pub(crate) fn broadcast_map(out_shape: &[usize], in_shape: &[usize]) -> Option<Vec<usize>> {
    if out_shape == in_shape {
        return None;
    }
    let rank = out_shape.len();
    let in_strides = strides(in_shape);
    // Stride of the operand along each output axis (0 where broadcast).
    let mut eff = vec![0usize; rank];
    for i in 0..rank {
        if i + in_shape.len() >= rank {
            let j = i + in_shape.len() - rank;
            if in_shape[j] != 1 {
                eff[i] = in_strides[j];
            }
        }
    }
    let n: usize = out_shape.iter().product();
    let mut map = Vec::with_capacity(n);
    let mut idx = vec![0usize; rank];
    let mut cur = 0usize;
    for _ in 0..n {
        map.push(cur);
        for ax in (0..rank).rev() {
            idx[ax] += 1;
            cur += eff[ax];
            if idx[ax] < out_shape[ax] {
                break;
            }
            cur -= eff[ax] * idx[ax];
            idx[ax] = 0;
        }
    }
    Some(map)
}

fn gather<T: Copy>(data: &[T], map: &Option<Vec<usize>>, i: usize) -> T {
    match map {
        Some(m) => data[m[i]],
        None => data[i],
    }
}

/// Reduces a full-size gradient onto an operand through its broadcast map.
fn reduce_to<T: Real>(full: Vec<T>, map: &Option<Vec<usize>>, in_len: usize) -> Vec<T> {
    match map {
        None => full,
        Some(m) => {
            let mut out = vec![T::zero(); in_len];
            for (&i, v) in m.iter().zip(full) {
                out[i] += v;
            }
            out
        }
    }
}

impl<T: Real> Tape<T> {
    pub fn unary(&mut self, x: Var, kind: UnaryKind<T>) -> Result<Var> {
        let v = self.value(x);
        let data = v.data().iter().map(|&a| kind.apply(a)).collect();
        let value = Tensor::new(v.shape().to_vec(), data)?;
        self.push("unary", value, Op::Unary { x, kind }, &[x])
    }

    pub fn relu(&mut self, x: Var) -> Result<Var> {
        self.unary(x, UnaryKind::Relu)
    }

    pub fn leaky_relu(&mut self, x: Var, slope: T) -> Result<Var> {
        self.unary(x, UnaryKind::LeakyRelu(slope))
    }

    pub fn sigmoid(&mut self, x: Var) -> Result<Var> {
        self.unary(x, UnaryKind::Sigmoid)
    }

    pub fn tanh(&mut self, x: Var) -> Result<Var> {
        self.unary(x, UnaryKind::Tanh)
    }

    pub fn softplus(&mut self, x: Var) -> Result<Var> {
        self.unary(x, UnaryKind::Softplus)
    }

    pub(super) fn unary_backward(&self, out: Var, x: Var, kind: &UnaryKind<T>, g: &[T], acc: &mut Vec<(Var, Vec<T>)>) {
        let xd = self.data(x);
        let yd = self.data(out);
        let dx = g
            .iter()
            .zip(xd.iter().zip(yd))
            .map(|(&gv, (&a, &b))| gv * kind.derivative(a, b))
            .collect();
        acc.push((x, dx));
    }

    fn binary(&mut self, a: Var, b: Var, kind: BinaryKind) -> Result<Var> {
        let sa = self.shape(a).to_vec();
        let sb = self.shape(b).to_vec();
        let out_shape = broadcast_shape(&sa, &sb)
            .ok_or_else(|| SampError::shape("broadcast", format!("{sa:?} vs {sb:?}")))?;
        let ma = broadcast_map(&out_shape, &sa);
        let mb = broadcast_map(&out_shape, &sb);
        let (ad, bd) = (self.data(a), self.data(b));
        let n: usize = out_shape.iter().product();
        let data = (0..n)
            .map(|i| {
                let (x, y) = (gather(ad, &ma, i), gather(bd, &mb, i));
                match kind {
                    BinaryKind::Add => x + y,
                    BinaryKind::Sub => x - y,
                    BinaryKind::Mul => x * y,
                    BinaryKind::Div => x / y,
                }
            })
            .collect();
        let value = Tensor::new(out_shape, data)?;
        self.push("binary", value, Op::Binary { a, b, kind }, &[a, b])
    }

    /// Broadcasting `a + b`.
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, BinaryKind::Add)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, BinaryKind::Sub)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, BinaryKind::Mul)
    }

    pub fn div(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, BinaryKind::Div)
    }

    pub(super) fn binary_backward(
        &self,
        out: Var,
        a: Var,
        b: Var,
        kind: BinaryKind,
        g: &[T],
        acc: &mut Vec<(Var, Vec<T>)>,
    ) {
        let out_shape = self.shape(out);
        let (sa, sb) = (self.shape(a), self.shape(b));
        let ma = broadcast_map(out_shape, sa);
        let mb = broadcast_map(out_shape, sb);
        let (ad, bd) = (self.data(a), self.data(b));
        if self.needs(a) {
            let full: Vec<T> = match kind {
                BinaryKind::Add | BinaryKind::Sub => g.to_vec(),
                BinaryKind::Mul => g.iter().enumerate().map(|(i, &gv)| gv * gather(bd, &mb, i)).collect(),
                BinaryKind::Div => g.iter().enumerate().map(|(i, &gv)| gv / gather(bd, &mb, i)).collect(),
            };
            acc.push((a, reduce_to(full, &ma, ad.len())));
        }
        if self.needs(b) {
            let full: Vec<T> = match kind {
                BinaryKind::Add => g.to_vec(),
                BinaryKind::Sub => g.iter().map(|&gv| -gv).collect(),
                BinaryKind::Mul => g.iter().enumerate().map(|(i, &gv)| gv * gather(ad, &ma, i)).collect(),
                BinaryKind::Div => g
                    .iter()
                    .enumerate()
                    .map(|(i, &gv)| {
                        let y = gather(bd, &mb, i);
                        -gv * gather(ad, &ma, i) / (y * y)
                    })
                    .collect(),
            };
            acc.push((b, reduce_to(full, &mb, bd.len())));
        }
    }

    /// Multiplies by a constant.
    pub fn scale(&mut self, x: Var, factor: T) -> Result<Var> {
        let v = self.value(x);
        let value = Tensor::new(v.shape().to_vec(), v.data().iter().map(|&a| a * factor).collect())?;
        self.push("scale", value, Op::Scale { x, factor }, &[x])
    }

    /// Adds a constant.
    pub fn add_scalar(&mut self, x: Var, c: T) -> Result<Var> {
        let v = self.value(x);
        let value = Tensor::new(v.shape().to_vec(), v.data().iter().map(|&a| a + c).collect())?;
        self.push("add_scalar", value, Op::AddScalar { x }, &[x])
    }

    /// `1 - x`.
    pub fn one_minus(&mut self, x: Var) -> Result<Var> {
        let neg = self.scale(x, -T::one())?;
        self.add_scalar(neg, T::one())
    }

    /// Materializes `x` broadcast to `shape`.
    pub fn broadcast_to(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let sx = self.shape(x).to_vec();
        match broadcast_shape(&sx, shape) {
            Some(s) if s == shape => {}
            _ => return Err(SampError::shape("broadcast_to", format!("{sx:?} -> {shape:?}"))),
        }
        let map = broadcast_map(shape, &sx);
        let xd = self.data(x);
        let n: usize = shape.iter().product();
        let data = (0..n).map(|i| gather(xd, &map, i)).collect();
        let value = Tensor::new(shape.to_vec(), data)?;
        self.push("broadcast_to", value, Op::BroadcastTo { x }, &[x])
    }

    pub(super) fn broadcast_to_backward(&self, out: Var, x: Var, g: &[T], acc: &mut Vec<(Var, Vec<T>)>) {
        let map = broadcast_map(self.shape(out), self.shape(x));
        acc.push((x, reduce_to(g.to_vec(), &map, self.value(x).numel())));
    }
}
