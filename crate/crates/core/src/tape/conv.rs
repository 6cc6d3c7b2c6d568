//! Convolution and max pooling.
//!
//! Convolutions use the cross-correlation convention (no kernel flip) and are
//! lowered to GEMM one image at a time through `im2col`. The column buffer is
//! rebuilt during backward instead of being stored on the tape.

use super::{Op, Tape, Var};
use crate::error::{Result, SampError};
use crate::real::{gemm, Real};
use crate::tensor::Tensor;

/// Geometry of a forward convolution mapping `(h, w)` to `(h_out, w_out)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvGeom {
    pub batch: usize,
    pub c_in: usize,
    pub h: usize,
    pub w: usize,
    pub c_out: usize,
    pub kh: usize,
    pub kw: usize,
    pub stride: usize,
    pub pad: usize,
    pub h_out: usize,
    pub w_out: usize,
}

impl ConvGeom {
    fn col_rows(&self) -> usize {
        self.c_in * self.kh * self.kw
    }

    fn col_cols(&self) -> usize {
        self.h_out * self.w_out
    }
}

/// Output extent of a convolution along one axis.
pub fn conv_out_extent(input: usize, kernel: usize, stride: usize, pad: usize) -> Option<usize> {
    let padded = input + 2 * pad;
    if stride == 0 || padded < kernel {
        return None;
    }
    Some((padded - kernel) / stride + 1)
}

/// Valid output index range `[lo, hi)` along a row for stride-1 lowering,
/// i.e. those `o` with `0 <= o + k - pad < extent`.
#[inline]
fn valid_range(k: usize, pad: usize, extent: usize, out: usize) -> (usize, usize) {
    let lo = pad.saturating_sub(k).min(out);
    let hi = (extent + pad).saturating_sub(k).min(out).max(lo);
    (lo, hi)
}

fn im2col<T: Real>(x: &[T], g: &ConvGeom, cols: &mut [T]) {
    let (h, w, ho, wo, s, p) = (g.h, g.w, g.h_out, g.w_out, g.stride, g.pad);
    let hw_out = ho * wo;
    let mut row = 0;
    for c in 0..g.c_in {
        let xc = &x[c * h * w..(c + 1) * h * w];
        for ky in 0..g.kh {
            for kx in 0..g.kw {
                let dst = &mut cols[row * hw_out..(row + 1) * hw_out];
                for oy in 0..ho {
                    let drow = &mut dst[oy * wo..(oy + 1) * wo];
                    let iy = (oy * s + ky) as isize - p as isize;
                    if iy < 0 || iy >= h as isize {
                        drow.fill(T::zero());
                        continue;
                    }
                    let xrow = &xc[iy as usize * w..(iy as usize + 1) * w];
                    if s == 1 {
                        let (lo, hi) = valid_range(kx, p, w, wo);
                        drow[..lo].fill(T::zero());
                        drow[hi..].fill(T::zero());
                        if hi > lo {
                            let start = lo + kx - p;
                            drow[lo..hi].copy_from_slice(&xrow[start..start + (hi - lo)]);
                        }
                    } else {
                        for (ox, d) in drow.iter_mut().enumerate() {
                            let ix = (ox * s + kx) as isize - p as isize;
                            *d = if ix >= 0 && ix < w as isize {
                                xrow[ix as usize]
                            } else {
                                T::zero()
                            };
                        }
                    }
                }
                row += 1;
            }
        }
    }
}

/// Scatter-adds a column buffer back onto an image (adjoint of `im2col`).
fn col2im<T: Real>(cols: &[T], g: &ConvGeom, x: &mut [T]) {
    let (h, w, ho, wo, s, p) = (g.h, g.w, g.h_out, g.w_out, g.stride, g.pad);
    let hw_out = ho * wo;
    let mut row = 0;
    for c in 0..g.c_in {
        let xc = &mut x[c * h * w..(c + 1) * h * w];
        for ky in 0..g.kh {
            for kx in 0..g.kw {
                let src = &cols[row * hw_out..(row + 1) * hw_out];
                for oy in 0..ho {
                    let srow = &src[oy * wo..(oy + 1) * wo];
                    let iy = (oy * s + ky) as isize - p as isize;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    let xrow = &mut xc[iy as usize * w..(iy as usize + 1) * w];
                    if s == 1 {
                        let (lo, hi) = valid_range(kx, p, w, wo);
                        if hi > lo {
                            let start = lo + kx - p;
                            for (d, &v) in xrow[start..start + (hi - lo)].iter_mut().zip(&srow[lo..hi]) {
                                *d += v;
                            }
                        }
                    } else {
                        for (ox, &v) in srow.iter().enumerate() {
                            let ix = (ox * s + kx) as isize - p as isize;
                            if ix >= 0 && ix < w as isize {
                                xrow[ix as usize] += v;
                            }
                        }
                    }
                }
                row += 1;
            }
        }
    }
}

fn add_channel_bias<T: Real>(out: &mut [T], bias: &[T], plane: usize) {
    for (chunk, &b) in out.chunks_mut(plane).zip(bias) {
        chunk.iter_mut().for_each(|v| *v += b);
    }
}

fn accumulate_channel_sums<T: Real>(g: &[T], plane: usize, db: &mut [T]) {
    for (chunk, d) in g.chunks(plane).zip(db.iter_mut()) {
        *d += chunk.iter().copied().sum::<T>();
    }
}

impl<T: Real> Tape<T> {
    fn check_bias(&self, op: &'static str, b: Option<Var>, c: usize) -> Result<()> {
        if let Some(b) = b {
            if self.shape(b) != [c] {
                return Err(SampError::shape(op, format!("bias shape {:?}, expected [{c}]", self.shape(b))));
            }
        }
        Ok(())
    }

    /// 2-D convolution of `x[B,Cin,H,W]` with `w[Cout,Cin,kh,kw]`.
    pub fn conv2d(&mut self, x: Var, w: Var, b: Option<Var>, stride: usize, pad: usize) -> Result<Var> {
        let xs = self.shape(x).to_vec();
        let ws = self.shape(w).to_vec();
        if xs.len() != 4 || ws.len() != 4 || xs[1] != ws[1] {
            return Err(SampError::shape("conv2d", format!("input {xs:?}, weight {ws:?}")));
        }
        let (h_out, w_out) = match (
            conv_out_extent(xs[2], ws[2], stride, pad),
            conv_out_extent(xs[3], ws[3], stride, pad),
        ) {
            (Some(a), Some(b)) => (a, b),
            _ => {
                return Err(SampError::shape(
                    "conv2d",
                    format!("kernel {ws:?} larger than padded input {xs:?} (pad {pad}, stride {stride})"),
                ))
            }
        };
        self.check_bias("conv2d", b, ws[0])?;
        let geom = ConvGeom {
            batch: xs[0],
            c_in: xs[1],
            h: xs[2],
            w: xs[3],
            c_out: ws[0],
            kh: ws[2],
            kw: ws[3],
            stride,
            pad,
            h_out,
            w_out,
        };
        let in_plane = geom.c_in * geom.h * geom.w;
        let out_plane = geom.c_out * h_out * w_out;
        let k = geom.col_rows();
        let n = geom.col_cols();
        let mut out = vec![T::zero(); geom.batch * out_plane];
        let mut cols = vec![T::zero(); k * n];
        {
            let xd = self.data(x);
            let wd = self.data(w);
            for bi in 0..geom.batch {
                im2col(&xd[bi * in_plane..(bi + 1) * in_plane], &geom, &mut cols);
                let o = &mut out[bi * out_plane..(bi + 1) * out_plane];
                gemm(false, false, geom.c_out, n, k, T::one(), wd, &cols, T::zero(), o);
                if let Some(b) = b {
                    add_channel_bias(o, self.data(b), n);
                }
            }
        }
        let value = Tensor::new(vec![geom.batch, geom.c_out, h_out, w_out], out)?;
        let mut inputs = vec![x, w];
        inputs.extend(b);
        self.push("conv2d", value, Op::Conv2d { x, w, b, geom }, &inputs)
    }

    pub(super) fn conv2d_backward(
        &self,
        x: Var,
        w: Var,
        b: Option<Var>,
        geom: &ConvGeom,
        g: &[T],
        acc: &mut Vec<(Var, Vec<T>)>,
    ) {
        let in_plane = geom.c_in * geom.h * geom.w;
        let k = geom.col_rows();
        let n = geom.col_cols();
        let out_plane = geom.c_out * n;
        let want_x = self.needs(x);
        let want_w = self.needs(w);
        let xd = self.data(x);
        let wd = self.data(w);
        let mut dw = if want_w { vec![T::zero(); wd.len()] } else { Vec::new() };
        let mut dx = if want_x { vec![T::zero(); xd.len()] } else { Vec::new() };
        let mut cols = vec![T::zero(); k * n];
        for bi in 0..geom.batch {
            let gb = &g[bi * out_plane..(bi + 1) * out_plane];
            if want_w {
                im2col(&xd[bi * in_plane..(bi + 1) * in_plane], geom, &mut cols);
                gemm(false, true, geom.c_out, k, n, T::one(), gb, &cols, T::one(), &mut dw);
            }
            if want_x {
                gemm(true, false, k, n, geom.c_out, T::one(), wd, gb, T::zero(), &mut cols);
                col2im(&cols, geom, &mut dx[bi * in_plane..(bi + 1) * in_plane]);
            }
        }
        if let Some(b) = b {
            if self.needs(b) {
                let mut db = vec![T::zero(); geom.c_out];
                for bi in 0..geom.batch {
                    accumulate_channel_sums(&g[bi * out_plane..(bi + 1) * out_plane], n, &mut db);
                }
                acc.push((b, db));
            }
        }
        if want_w {
            acc.push((w, dw));
        }
        if want_x {
            acc.push((x, dx));
        }
    }

    /// Transposed convolution of `x[B,Cin,H,W]` with `w[Cin,Cout,kh,kw]`:
    /// the adjoint of a strided convolution, used for learned upsampling.
    /// Output extent is `(H-1)·stride - 2·pad + k + output_padding`.
    pub fn conv_transpose2d(
        &mut self,
        x: Var,
        w: Var,
        b: Option<Var>,
        stride: usize,
        pad: usize,
        output_padding: usize,
    ) -> Result<Var> {
        let xs = self.shape(x).to_vec();
        let ws = self.shape(w).to_vec();
        if xs.len() != 4 || ws.len() != 4 || xs[1] != ws[0] || stride == 0 || output_padding >= stride {
            return Err(SampError::shape(
                "conv_transpose2d",
                format!("input {xs:?}, weight {ws:?}, stride {stride}, output_padding {output_padding}"),
            ));
        }
        let big = |small: usize, k: usize| -> Option<usize> {
            ((small - 1) * stride + k + output_padding).checked_sub(2 * pad)
        };
        let (Some(h_big), Some(w_big)) = (big(xs[2], ws[2]), big(xs[3], ws[3])) else {
            return Err(SampError::shape("conv_transpose2d", "padding exceeds output"));
        };
        self.check_bias("conv_transpose2d", b, ws[1])?;
        // Equivalent forward convolution: big (Cout) -> small (Cin).
        let geom = ConvGeom {
            batch: xs[0],
            c_in: ws[1],
            h: h_big,
            w: w_big,
            c_out: ws[0],
            kh: ws[2],
            kw: ws[3],
            stride,
            pad,
            h_out: xs[2],
            w_out: xs[3],
        };
        debug_assert_eq!(conv_out_extent(h_big, ws[2], stride, pad), Some(xs[2]));
        let k = geom.col_rows();
        let n = geom.col_cols();
        let small_plane = geom.c_out * n;
        let big_plane = geom.c_in * h_big * w_big;
        let mut out = vec![T::zero(); geom.batch * big_plane];
        let mut cols = vec![T::zero(); k * n];
        {
            let xd = self.data(x);
            let wd = self.data(w);
            for bi in 0..geom.batch {
                gemm(true, false, k, n, geom.c_out, T::one(), wd, &xd[bi * small_plane..(bi + 1) * small_plane], T::zero(), &mut cols);
                let o = &mut out[bi * big_plane..(bi + 1) * big_plane];
                col2im(&cols, &geom, o);
                if let Some(b) = b {
                    add_channel_bias(o, self.data(b), h_big * w_big);
                }
            }
        }
        let value = Tensor::new(vec![geom.batch, geom.c_in, h_big, w_big], out)?;
        let mut inputs = vec![x, w];
        inputs.extend(b);
        self.push("conv_transpose2d", value, Op::ConvTranspose2d { x, w, b, geom }, &inputs)
    }

    pub(super) fn conv_transpose2d_backward(
        &self,
        x: Var,
        w: Var,
        b: Option<Var>,
        geom: &ConvGeom,
        g: &[T],
        acc: &mut Vec<(Var, Vec<T>)>,
    ) {
        let k = geom.col_rows();
        let n = geom.col_cols();
        let small_plane = geom.c_out * n;
        let big_plane = geom.c_in * geom.h * geom.w;
        let want_x = self.needs(x);
        let want_w = self.needs(w);
        let xd = self.data(x);
        let wd = self.data(w);
        let mut dw = if want_w { vec![T::zero(); wd.len()] } else { Vec::new() };
        let mut dx = if want_x { vec![T::zero(); xd.len()] } else { Vec::new() };
        let mut cols = vec![T::zero(); k * n];
        for bi in 0..geom.batch {
            im2col(&g[bi * big_plane..(bi + 1) * big_plane], geom, &mut cols);
            if want_x {
                gemm(false, false, geom.c_out, n, k, T::one(), wd, &cols, T::zero(), &mut dx[bi * small_plane..(bi + 1) * small_plane]);
            }
            if want_w {
                gemm(false, true, geom.c_out, k, n, T::one(), &xd[bi * small_plane..(bi + 1) * small_plane], &cols, T::one(), &mut dw);
            }
        }
        if let Some(b) = b {
            if self.needs(b) {
                let mut db = vec![T::zero(); geom.c_in];
                for bi in 0..geom.batch {
                    accumulate_channel_sums(&g[bi * big_plane..(bi + 1) * big_plane], geom.h * geom.w, &mut db);
                }
                acc.push((b, db));
            }
        }
        if want_w {
            acc.push((w, dw));
        }
        if want_x {
            acc.push((x, dx));
        }
    }

    /// Square-window max pooling without padding.
    pub fn maxpool2d(&mut self, x: Var, kernel: usize, stride: usize) -> Result<Var> {
        self.maxpool2d_rect(x, (kernel, kernel), (stride, stride))
    }

    /// Max pooling with independent window and stride per axis. Each output
    /// is the maximum of its window; ties go to the first element in
    /// row-major order.
    pub fn maxpool2d_rect(&mut self, x: Var, kernel: (usize, usize), stride: (usize, usize)) -> Result<Var> {
        let xs = self.shape(x).to_vec();
        if xs.len() != 4 || kernel.0 == 0 || kernel.1 == 0 || stride.0 == 0 || stride.1 == 0 {
            return Err(SampError::shape("maxpool2d", format!("input {xs:?}, kernel {kernel:?}, stride {stride:?}")));
        }
        let (h, w) = (xs[2], xs[3]);
        if h < kernel.0 || w < kernel.1 {
            return Err(SampError::shape(
                "maxpool2d",
                format!("window {kernel:?} exceeds input {h}x{w}"),
            ));
        }
        let ho = (h - kernel.0) / stride.0 + 1;
        let wo = (w - kernel.1) / stride.1 + 1;
        let planes = xs[0] * xs[1];
        let xd = self.data(x);
        let mut out = Vec::with_capacity(planes * ho * wo);
        let mut argmax = Vec::with_capacity(planes * ho * wo);
        for p in 0..planes {
            let base = p * h * w;
            for oy in 0..ho {
                for ox in 0..wo {
                    let mut best = base + oy * stride.0 * w + ox * stride.1;
                    let mut best_v = xd[best];
                    for ky in 0..kernel.0 {
                        let row = base + (oy * stride.0 + ky) * w + ox * stride.1;
                        for kx in 0..kernel.1 {
                            let v = xd[row + kx];
                            if v > best_v {
                                best_v = v;
                                best = row + kx;
                            }
                        }
                    }
                    out.push(best_v);
                    argmax.push(best);
                }
            }
        }
        let value = Tensor::new(vec![xs[0], xs[1], ho, wo], out)?;
        self.push("maxpool2d", value, Op::MaxPool2d { x, argmax }, &[x])
    }

    pub(super) fn maxpool2d_backward(&self, x: Var, argmax: &[usize], g: &[T], acc: &mut Vec<(Var, Vec<T>)>) {
        let mut dx = vec![T::zero(); self.value(x).numel()];
        for (&i, &gv) in argmax.iter().zip(g) {
            dx[i] += gv;
        }
        acc.push((x, dx));
    }
}
