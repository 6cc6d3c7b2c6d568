//! Affine maps and batched matrix products.

use super::{Op, Tape, Var};
use crate::error::{Result, SampError};
use crate::real::{gemm, Real};
use crate::tensor::Tensor;

impl<T: Real> Tape<T> {
    /// `y = x·Wᵀ + b` over the last axis of `x[..., Din]`, with
    /// `W[Dout, Din]` and `b[Dout]`.
    pub fn linear(&mut self, x: Var, w: Var, b: Option<Var>) -> Result<Var> {
        let xs = self.shape(x).to_vec();
        let ws = self.shape(w).to_vec();
        let d_in = *xs.last().unwrap();
        if ws.len() != 2 || ws[1] != d_in {
            return Err(SampError::shape("linear", format!("input {xs:?}, weight {ws:?}")));
        }
        let d_out = ws[0];
        if let Some(b) = b {
            if self.shape(b) != [d_out] {
                return Err(SampError::shape("linear", format!("bias {:?}, expected [{d_out}]", self.shape(b))));
            }
        }
        let rows = self.value(x).numel() / d_in;
        let mut out = vec![T::zero(); rows * d_out];
        gemm(false, true, rows, d_out, d_in, T::one(), self.data(x), self.data(w), T::zero(), &mut out);
        if let Some(b) = b {
            let bd = self.data(b);
            for row in out.chunks_mut(d_out) {
                row.iter_mut().zip(bd).for_each(|(v, &c)| *v += c);
            }
        }
        let mut shape = xs;
        *shape.last_mut().unwrap() = d_out;
        let value = Tensor::new(shape, out)?;
        let mut inputs = vec![x, w];
        inputs.extend(b);
        self.push("linear", value, Op::Linear { x, w, b }, &inputs)
    }

    pub(super) fn linear_backward(&self, x: Var, w: Var, b: Option<Var>, g: &[T], acc: &mut Vec<(Var, Vec<T>)>) {
        let ws = self.shape(w);
        let (d_out, d_in) = (ws[0], ws[1]);
        let rows = self.value(x).numel() / d_in;
        if let Some(b) = b {
            if self.needs(b) {
                let mut db = vec![T::zero(); d_out];
                for row in g.chunks(d_out) {
                    db.iter_mut().zip(row).for_each(|(d, &v)| *d += v);
                }
                acc.push((b, db));
            }
        }
        if self.needs(w) {
            let mut dw = vec![T::zero(); d_out * d_in];
            gemm(true, false, d_out, d_in, rows, T::one(), g, self.data(x), T::zero(), &mut dw);
            acc.push((w, dw));
        }
        if self.needs(x) {
            let mut dx = vec![T::zero(); rows * d_in];
            gemm(false, false, rows, d_in, d_out, T::one(), g, self.data(w), T::zero(), &mut dx);
            acc.push((x, dx));
        }
    }

    /// Batched product `op(a)·op(b)` for `a[B,·,·]`, `b[B,·,·]`; `op` transposes
    /// the last two axes when the matching flag is set.
    pub fn bmm(&mut self, a: Var, b: Var, trans_a: bool, trans_b: bool) -> Result<Var> {
        let sa = self.shape(a).to_vec();
        let sb = self.shape(b).to_vec();
        if sa.len() != 3 || sb.len() != 3 || sa[0] != sb[0] {
            return Err(SampError::shape("bmm", format!("{sa:?} x {sb:?}")));
        }
        let (m, ka) = if trans_a { (sa[2], sa[1]) } else { (sa[1], sa[2]) };
        let (kb, n) = if trans_b { (sb[2], sb[1]) } else { (sb[1], sb[2]) };
        if ka != kb {
            return Err(SampError::shape("bmm", format!("inner extents {ka} vs {kb}")));
        }
        let batch = sa[0];
        let mut out = vec![T::zero(); batch * m * n];
        let (ad, bd) = (self.data(a), self.data(b));
        for i in 0..batch {
            gemm(
                trans_a,
                trans_b,
                m,
                n,
                ka,
                T::one(),
                &ad[i * m * ka..(i + 1) * m * ka],
                &bd[i * ka * n..(i + 1) * ka * n],
                T::zero(),
                &mut out[i * m * n..(i + 1) * m * n],
            );
        }
        let value = Tensor::new(vec![batch, m, n], out)?;
        self.push("bmm", value, Op::Bmm { a, b, trans_a, trans_b }, &[a, b])
    }

    /// Plain 2-D matrix product.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let sa = self.shape(a).to_vec();
        let sb = self.shape(b).to_vec();
        if sa.len() != 2 || sb.len() != 2 {
            return Err(SampError::shape("matmul", format!("{sa:?} x {sb:?}")));
        }
        let a3 = self.reshape(a, &[1, sa[0], sa[1]])?;
        let b3 = self.reshape(b, &[1, sb[0], sb[1]])?;
        let c = self.bmm(a3, b3, false, false)?;
        self.reshape(c, &[sa[0], sb[1]])
    }

    pub(super) fn bmm_backward(
        &self,
        a: Var,
        b: Var,
        trans_a: bool,
        trans_b: bool,
        g: &[T],
        acc: &mut Vec<(Var, Vec<T>)>,
    ) {
        let sa = self.shape(a);
        let sb = self.shape(b);
        let batch = sa[0];
        let (m, k) = if trans_a { (sa[2], sa[1]) } else { (sa[1], sa[2]) };
        let n = if trans_b { sb[1] } else { sb[2] };
        let (ad, bd) = (self.data(a), self.data(b));
        let a_len = m * k;
        let b_len = k * n;
        let g_len = m * n;
        if self.needs(a) {
            let mut da = vec![T::zero(); batch * a_len];
            for i in 0..batch {
                let gi = &g[i * g_len..(i + 1) * g_len];
                let bi = &bd[i * b_len..(i + 1) * b_len];
                let dai = &mut da[i * a_len..(i + 1) * a_len];
                match (trans_a, trans_b) {
                    (false, false) => gemm(false, true, m, k, n, T::one(), gi, bi, T::zero(), dai),
                    (false, true) => gemm(false, false, m, k, n, T::one(), gi, bi, T::zero(), dai),
                    (true, false) => gemm(false, true, k, m, n, T::one(), bi, gi, T::zero(), dai),
                    (true, true) => gemm(true, true, k, m, n, T::one(), bi, gi, T::zero(), dai),
                }
            }
            acc.push((a, da));
        }
        if self.needs(b) {
            let mut db = vec![T::zero(); batch * b_len];
            for i in 0..batch {
                let gi = &g[i * g_len..(i + 1) * g_len];
                let ai = &ad[i * a_len..(i + 1) * a_len];
                let dbi = &mut db[i * b_len..(i + 1) * b_len];
                match (trans_a, trans_b) {
                    (false, false) => gemm(true, false, k, n, m, T::one(), ai, gi, T::zero(), dbi),
                    (true, false) => gemm(false, false, k, n, m, T::one(), ai, gi, T::zero(), dbi),
                    (false, true) => gemm(true, false, n, k, m, T::one(), gi, ai, T::zero(), dbi),
                    (true, true) => gemm(true, true, n, k, m, T::one(), gi, ai, T::zero(), dbi),
                }
            }
            acc.push((b, db));
        }
    }
}
