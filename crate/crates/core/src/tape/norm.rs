//! Softmax, layer normalization, reductions, and the MSE loss.

use super::{Op, Tape, Var};
use crate::error::{Result, SampError};
use crate::real::Real;
use crate::tensor::Tensor;

/// Splits `shape` around `axis` into `(outer, len, inner)`.
pub(crate) fn split_axis(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}

impl<T: Real> Tape<T> {
    /// Softmax along `axis`, computed with max subtraction.
    pub fn softmax(&mut self, x: Var, axis: usize) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        if axis >= shape.len() {
            return Err(SampError::shape("softmax", format!("axis {axis} for shape {shape:?}")));
        }
        let (outer, len, inner) = split_axis(&shape, axis);
        let xd = self.data(x);
        let mut out = vec![T::zero(); xd.len()];
        for o in 0..outer {
            for i in 0..inner {
                let base = o * len * inner + i;
                let mut mx = T::neg_infinity();
                for j in 0..len {
                    mx = mx.max(xd[base + j * inner]);
                }
                let mut sum = T::zero();
                for j in 0..len {
                    let e = (xd[base + j * inner] - mx).exp();
                    out[base + j * inner] = e;
                    sum += e;
                }
                for j in 0..len {
                    out[base + j * inner] /= sum;
                }
            }
        }
        let value = Tensor::new(shape, out)?;
        self.push("softmax", value, Op::Softmax { x, axis }, &[x])
    }

    pub(super) fn softmax_backward(&self, out: Var, x: Var, axis: usize, g: &[T], acc: &mut Vec<(Var, Vec<T>)>) {
        let (outer, len, inner) = split_axis(self.shape(out), axis);
        let y = self.data(out);
        let mut dx = vec![T::zero(); y.len()];
        for o in 0..outer {
            for i in 0..inner {
                let base = o * len * inner + i;
                let mut dot = T::zero();
                for j in 0..len {
                    let k = base + j * inner;
                    dot += g[k] * y[k];
                }
                for j in 0..len {
                    let k = base + j * inner;
                    dx[k] = y[k] * (g[k] - dot);
                }
            }
        }
        acc.push((x, dx));
    }

    /// Layer normalization over the last axis with population variance and
    /// `eps` inside the square root, followed by the affine map `gamma, beta`.
    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var, eps: T) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        let d = *shape.last().unwrap();
        if self.shape(gamma) != [d] || self.shape(beta) != [d] {
            return Err(SampError::shape(
                "layer_norm",
                format!("input {shape:?}, gamma {:?}, beta {:?}", self.shape(gamma), self.shape(beta)),
            ));
        }
        let xd = self.data(x);
        let (gd, bd) = (self.data(gamma), self.data(beta));
        let rows = xd.len() / d;
        let dn = T::from_usize(d).unwrap();
        let mut xhat = vec![T::zero(); xd.len()];
        let mut rstd = vec![T::zero(); rows];
        let mut out = vec![T::zero(); xd.len()];
        for r in 0..rows {
            let row = &xd[r * d..(r + 1) * d];
            let mean = row.iter().copied().sum::<T>() / dn;
            let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / dn;
            let rs = T::one() / (var + eps).sqrt();
            rstd[r] = rs;
            for j in 0..d {
                let xh = (row[j] - mean) * rs;
                xhat[r * d + j] = xh;
                out[r * d + j] = xh * gd[j] + bd[j];
            }
        }
        let value = Tensor::new(shape, out)?;
        self.push(
            "layer_norm",
            value,
            Op::LayerNorm {
                x,
                gamma,
                beta,
                xhat,
                rstd,
            },
            &[x, gamma, beta],
        )
    }

    #[allow(clippy::too_many_arguments)]
    pub(super) fn layer_norm_backward(
        &self,
        x: Var,
        gamma: Var,
        beta: Var,
        xhat: &[T],
        rstd: &[T],
        g: &[T],
        acc: &mut Vec<(Var, Vec<T>)>,
    ) {
        let gd = self.data(gamma);
        let d = gd.len();
        let rows = xhat.len() / d;
        let dn = T::from_usize(d).unwrap();
        if self.needs(gamma) {
            let mut dg = vec![T::zero(); d];
            for r in 0..rows {
                for j in 0..d {
                    dg[j] += g[r * d + j] * xhat[r * d + j];
                }
            }
            acc.push((gamma, dg));
        }
        if self.needs(beta) {
            let mut db = vec![T::zero(); d];
            for r in 0..rows {
                for j in 0..d {
                    db[j] += g[r * d + j];
                }
            }
            acc.push((beta, db));
        }
        if self.needs(x) {
            let mut dx = vec![T::zero(); xhat.len()];
            for r in 0..rows {
                let mut mean_dxh = T::zero();
                let mut mean_dxh_xh = T::zero();
                for j in 0..d {
                    let dxh = g[r * d + j] * gd[j];
                    mean_dxh += dxh;
                    mean_dxh_xh += dxh * xhat[r * d + j];
                }
                mean_dxh /= dn;
                mean_dxh_xh /= dn;
                for j in 0..d {
                    let k = r * d + j;
                    let dxh = g[k] * gd[j];
                    dx[k] = rstd[r] * (dxh - mean_dxh - xhat[k] * mean_dxh_xh);
                }
            }
            acc.push((x, dx));
        }
    }

    /// Sums over `axis`, removing it (a rank-1 input reduces to shape `[1]`).
    pub fn sum_axis(&mut self, x: Var, axis: usize) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        if axis >= shape.len() {
            return Err(SampError::shape("sum_axis", format!("axis {axis} for shape {shape:?}")));
        }
        let (outer, len, inner) = split_axis(&shape, axis);
        let xd = self.data(x);
        let mut out = vec![T::zero(); outer * inner];
        for o in 0..outer {
            for j in 0..len {
                let src = &xd[(o * len + j) * inner..(o * len + j + 1) * inner];
                out[o * inner..(o + 1) * inner]
                    .iter_mut()
                    .zip(src)
                    .for_each(|(d, &v)| *d += v);
            }
        }
        let mut new_shape = shape;
        new_shape.remove(axis);
        if new_shape.is_empty() {
            new_shape.push(1);
        }
        let value = Tensor::new(new_shape, out)?;
        self.push("sum_axis", value, Op::SumAxis { x, axis }, &[x])
    }

    pub(super) fn sum_axis_backward(&self, x: Var, axis: usize, g: &[T], acc: &mut Vec<(Var, Vec<T>)>) {
        let (outer, len, inner) = split_axis(self.shape(x), axis);
        let mut dx = vec![T::zero(); outer * len * inner];
        for o in 0..outer {
            for j in 0..len {
                dx[(o * len + j) * inner..(o * len + j + 1) * inner].copy_from_slice(&g[o * inner..(o + 1) * inner]);
            }
        }
        acc.push((x, dx));
    }

    /// Sum of all elements, as a `[1]` tensor.
    pub fn sum(&mut self, x: Var) -> Result<Var> {
        let s = self.data(x).iter().copied().sum::<T>();
        self.push("sum", Tensor::scalar(s), Op::SumAll { x }, &[x])
    }

    /// Mean of all elements, as a `[1]` tensor.
    pub fn mean(&mut self, x: Var) -> Result<Var> {
        let xd = self.data(x);
        let s = xd.iter().copied().sum::<T>() / T::from_usize(xd.len()).unwrap();
        self.push("mean", Tensor::scalar(s), Op::MeanAll { x }, &[x])
    }

    /// Mean squared error over all elements.
    pub fn mse_loss(&mut self, pred: Var, target: Var) -> Result<Var> {
        if self.shape(pred) != self.shape(target) {
            return Err(SampError::shape(
                "mse_loss",
                format!("{:?} vs {:?}", self.shape(pred), self.shape(target)),
            ));
        }
        let (p, t) = (self.data(pred), self.data(target));
        let s = p.iter().zip(t).map(|(&a, &b)| (a - b) * (a - b)).sum::<T>() / T::from_usize(p.len()).unwrap();
        self.push("mse_loss", Tensor::scalar(s), Op::Mse { pred, target }, &[pred, target])
    }

    pub(super) fn mse_backward(&self, pred: Var, target: Var, g: &[T], acc: &mut Vec<(Var, Vec<T>)>) {
        let (p, t) = (self.data(pred), self.data(target));
        let k = g[0] * T::from_f64_lossy(2.0) / T::from_usize(p.len()).unwrap();
        if self.needs(pred) {
            acc.push((pred, p.iter().zip(t).map(|(&a, &b)| k * (a - b)).collect()));
        }
        if self.needs(target) {
            acc.push((target, p.iter().zip(t).map(|(&a, &b)| k * (b - a)).collect()));
        }
    }
}
