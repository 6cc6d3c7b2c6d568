//! Reshape, axis permutation, and slicing.

use super::norm::split_axis;
use super::{Op, Tape, Var};
use crate::error::{Result, SampError};
use crate::real::Real;
use crate::tensor::{strides, Tensor};

/// Gather indices such that `out[i] = in[map[i]]` for a permutation.
fn permute_map(in_shape: &[usize], axes: &[usize]) -> (Vec<usize>, Vec<usize>) {
    let in_strides = strides(in_shape);
    let out_shape: Vec<usize> = axes.iter().map(|&a| in_shape[a]).collect();
    let eff: Vec<usize> = axes.iter().map(|&a| in_strides[a]).collect();
    let n: usize = out_shape.iter().product();
    let rank = out_shape.len();
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
    (out_shape, map)
}

impl<T: Real> Tape<T> {
    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let value = self.value(x).clone().reshaped(shape.to_vec())?;
        self.push("reshape", value, Op::Reshape { x }, &[x])
    }

    /// Reorders axes: output axis `i` is input axis `axes[i]`.
    pub fn permute(&mut self, x: Var, axes: &[usize]) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        let mut seen = vec![false; shape.len()];
        if axes.len() != shape.len() || axes.iter().any(|&a| a >= shape.len() || std::mem::replace(&mut seen[a], true)) {
            return Err(SampError::shape("permute", format!("axes {axes:?} for shape {shape:?}")));
        }
        let (out_shape, map) = permute_map(&shape, axes);
        let xd = self.data(x);
        let data = map.iter().map(|&i| xd[i]).collect();
        let value = Tensor::new(out_shape, data)?;
        self.push("permute", value, Op::Permute { x, axes: axes.to_vec() }, &[x])
    }

    pub(super) fn permute_backward(&self, x: Var, axes: &[usize], g: &[T], acc: &mut Vec<(Var, Vec<T>)>) {
        let (_, map) = permute_map(self.shape(x), axes);
        let mut dx = vec![T::zero(); g.len()];
        for (&i, &v) in map.iter().zip(g) {
            dx[i] = v;
        }
        acc.push((x, dx));
    }

    /// Takes `len` entries starting at `start` along `axis`.
    pub fn slice(&mut self, x: Var, axis: usize, start: usize, len: usize) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        if axis >= shape.len() || len == 0 || start + len > shape[axis] {
            return Err(SampError::shape(
                "slice",
                format!("[{start}, {}) on axis {axis} of {shape:?}", start + len),
            ));
        }
        let (outer, full, inner) = split_axis(&shape, axis);
        let xd = self.data(x);
        let mut out = Vec::with_capacity(outer * len * inner);
        for o in 0..outer {
            let base = (o * full + start) * inner;
            out.extend_from_slice(&xd[base..base + len * inner]);
        }
        let mut new_shape = shape;
        new_shape[axis] = len;
        let value = Tensor::new(new_shape, out)?;
        self.push("slice", value, Op::Slice { x, axis, start }, &[x])
    }

    pub(super) fn slice_backward(&self, out: Var, x: Var, axis: usize, start: usize, g: &[T], acc: &mut Vec<(Var, Vec<T>)>) {
        let (outer, full, inner) = split_axis(self.shape(x), axis);
        let len = self.shape(out)[axis];
        let mut dx = vec![T::zero(); outer * full * inner];
        for o in 0..outer {
            let base = (o * full + start) * inner;
            dx[base..base + len * inner].copy_from_slice(&g[o * len * inner..(o + 1) * len * inner]);
        }
        acc.push((x, dx));
    }
}
