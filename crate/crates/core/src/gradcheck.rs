//! Central finite-difference gradient checking in 64-bit precision.
//!
//! The reported error is the norm-wise relative error
//! `‖g_auto − g_fd‖₂ / max(‖g_auto‖₂, ‖g_fd‖₂)` over the checked coordinates.
//!
//! ReLU, LeakyReLU and max pooling are only piecewise smooth. A central
//! difference that straddles a kink measures a blend of two one-sided slopes,
//! so each probe compares the activation signature (see
//! [`Tape::activation_signature`]) of `x ± h` against the base point. When a
//! probe crosses a kink the step is divided by ten and retried, down to
//! `step · 1e-4`.

use rand::seq::index::sample;
use rand::Rng;

use crate::error::Result;
use crate::param::{ParamId, ParamStore};
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

const MAX_SHRINKS: u32 = 4;

/// Outcome of a finite-difference comparison.
#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// `‖g_auto − g_fd‖₂`.
    pub abs_error: f64,
    /// `‖g_auto‖₂` over the checked coordinates.
    pub grad_norm: f64,
    pub coords_checked: usize,
    /// Coordinates whose step had to shrink to stay inside one smooth region.
    pub coords_refined: usize,
}

/// Per-parameter results of [`check_param_gradients`].
#[derive(Clone, Debug)]
pub struct ParamCheckReport {
    pub per_param: Vec<(String, GradCheckReport)>,
}

impl ParamCheckReport {
    pub fn worst(&self) -> f64 {
        self.per_param.iter().map(|(_, r)| r.max_rel_error).fold(0.0, f64::max)
    }
}

fn norm_diff(auto: &[f64], numeric: &[f64]) -> f64 {
    auto.iter().zip(numeric).map(|(a, n)| (a - n) * (a - n)).sum::<f64>().sqrt()
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

fn report(auto: &[f64], numeric: &[f64], refined: usize) -> GradCheckReport {
    GradCheckReport {
        max_rel_error: relative_error(auto, numeric),
        abs_error: norm_diff(auto, numeric),
        grad_norm: norm(auto),
        coords_checked: numeric.len(),
        coords_refined: refined,
    }
}

pub fn relative_error(auto: &[f64], numeric: &[f64]) -> f64 {
    let diff = norm_diff(auto, numeric);
    let denom = norm(auto).max(norm(numeric));
    if denom == 0.0 {
        0.0
    } else {
        diff / denom
    }
}

/// Central difference of `eval` at one coordinate, shrinking the step while
/// the probe leaves the base point's smooth region.
fn probe<E>(mut eval: E, base_sig: u64, step: f64) -> Result<(f64, bool)>
where
    E: FnMut(f64) -> Result<(f64, u64)>,
{
    let mut h = step;
    let mut refined = false;
    for attempt in 0..=MAX_SHRINKS {
        let (fp, sp) = eval(h)?;
        let (fm, sm) = eval(-h)?;
        if (sp == base_sig && sm == base_sig) || attempt == MAX_SHRINKS {
            return Ok(((fp - fm) / (2.0 * h), refined));
        }
        h /= 10.0;
        refined = true;
    }
    unreachable!()
}

fn scalar(tape: &Tape<f64>, v: Var) -> f64 {
    tape.data(v)[0]
}

/// Compares the autodiff gradient of scalar `f` at `point` with central
/// differences of step `step` on every coordinate.
pub fn finite_diff_check<F>(f: F, point: &Tensor<f64>, step: f64) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape<f64>, Var) -> Result<Var>,
{
    let mut tape = Tape::new();
    let x = tape.leaf(point.clone());
    let loss = f(&mut tape, x)?;
    let grads = tape.backward(loss)?;
    let auto = grads
        .wrt(x)
        .map(|g| g.to_vec())
        .unwrap_or_else(|| vec![0.0; point.numel()]);
    let base_sig = tape.activation_signature();

    let mut numeric = Vec::with_capacity(point.numel());
    let mut refined = 0;
    for i in 0..point.numel() {
        let (d, r) = probe(
            |h| {
                let mut p = point.clone();
                p.data_mut()[i] += h;
                let mut t = Tape::new();
                let xv = t.leaf(p);
                let l = f(&mut t, xv)?;
                Ok((scalar(&t, l), t.activation_signature()))
            },
            base_sig,
            step,
        )?;
        refined += r as usize;
        numeric.push(d);
    }
    Ok(report(&auto, &numeric, refined))
}

/// Finite-difference check of a loss with respect to every parameter tensor
/// of `store`. At most `max_coords` coordinates per tensor are probed (chosen
/// with `rng`); `None` probes all of them.
pub fn check_param_gradients<F, R>(
    store: &ParamStore<f64>,
    f: F,
    step: f64,
    max_coords: Option<usize>,
    rng: &mut R,
) -> Result<ParamCheckReport>
where
    F: Fn(&ParamStore<f64>, &mut Tape<f64>) -> Result<Var>,
    R: Rng + ?Sized,
{
    let mut tape = Tape::new();
    let loss = f(store, &mut tape)?;
    let grads = tape.backward(loss)?;
    let base_sig = tape.activation_signature();
    let ids: Vec<(ParamId, String, usize)> = store
        .iter()
        .map(|(id, p)| (id, p.name().to_string(), p.tensor().numel()))
        .collect();

    let mut per_param = Vec::new();
    let mut work = store.clone();
    for (id, name, numel) in ids {
        let coords: Vec<usize> = match max_coords {
            Some(k) if k < numel => {
                let mut v = sample(rng, numel, k).into_vec();
                v.sort_unstable();
                v
            }
            _ => (0..numel).collect(),
        };
        let full = grads.param(id).map(|g| g.to_vec()).unwrap_or_else(|| vec![0.0; numel]);
        let auto: Vec<f64> = coords.iter().map(|&c| full[c]).collect();
        let mut numeric = Vec::with_capacity(coords.len());
        let mut refined = 0;
        for &c in &coords {
            let original = work.get(id).tensor().data()[c];
            let probed = probe(
                |h| {
                    work.get_mut(id).tensor_mut().data_mut()[c] = original + h;
                    let mut t = Tape::new();
                    let l = f(&work, &mut t)?;
                    Ok((scalar(&t, l), t.activation_signature()))
                },
                base_sig,
                step,
            );
            work.get_mut(id).tensor_mut().data_mut()[c] = original;
            let (d, r) = probed?;
            refined += r as usize;
            numeric.push(d);
        }
        per_param.push((name, report(&auto, &numeric, refined)));
    }
    Ok(ParamCheckReport { per_param })
}
