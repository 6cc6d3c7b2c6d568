//! Plain-loop reference implementations shared by the integration tests.
//!
//! Everything here works on row-major `f64` slices and avoids the tape
//! entirely, so agreement with the library is an independent check.

#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use samp_core::{ParamStore, Tensor};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform(rng: &mut ChaCha8Rng, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(lo..hi)).collect()
}

pub fn tensor(shape: &[usize], data: Vec<f64>) -> Tensor<f64> {
    Tensor::new(shape.to_vec(), data).unwrap()
}

/// Overwrites every parameter with uniform noise so that biases, gains and
/// offsets all take part in the comparison.
pub fn randomize(store: &mut ParamStore<f64>, rng: &mut ChaCha8Rng, scale: f64) {
    for (_, p) in store.iter_mut() {
        for v in p.tensor_mut().data_mut() {
            *v = rng.random_range(-scale..scale);
        }
    }
}

pub fn param(store: &ParamStore<f64>, name: &str) -> Vec<f64> {
    store.by_name(name).unwrap().data().to_vec()
}

/// `x[rows, d]` normalized per row, then `gamma * x + beta`.
pub fn layer_norm(x: &[f64], d: usize, gamma: &[f64], beta: &[f64], eps: f64) -> Vec<f64> {
    let mut out = vec![0.0; x.len()];
    for (row, o) in x.chunks(d).zip(out.chunks_mut(d)) {
        let mean = row.iter().sum::<f64>() / d as f64;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
        let inv = 1.0 / (var + eps).sqrt();
        for j in 0..d {
            o[j] = (row[j] - mean) * inv * gamma[j] + beta[j];
        }
    }
    out
}

/// `x[rows, d_in] · Wᵀ + b` with `W[d_out, d_in]`.
pub fn linear(x: &[f64], d_in: usize, w: &[f64], b: Option<&[f64]>) -> Vec<f64> {
    let d_out = w.len() / d_in;
    let rows = x.len() / d_in;
    let mut out = vec![0.0; rows * d_out];
    for r in 0..rows {
        for o in 0..d_out {
            let mut acc = b.map_or(0.0, |b| b[o]);
            for i in 0..d_in {
                acc += x[r * d_in + i] * w[o * d_in + i];
            }
            out[r * d_out + o] = acc;
        }
    }
    out
}

/// Row-wise softmax of `x[rows, cols]`.
pub fn softmax_rows(x: &[f64], cols: usize) -> Vec<f64> {
    let mut out = vec![0.0; x.len()];
    for (row, o) in x.chunks(cols).zip(out.chunks_mut(cols)) {
        let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let z: f64 = row.iter().map(|v| (v - m).exp()).sum();
        for j in 0..cols {
            o[j] = (row[j] - m).exp() / z;
        }
    }
    out
}

/// `a[r, k] · b[c, k]ᵀ`.
pub fn matmul_nt(a: &[f64], b: &[f64], k: usize) -> Vec<f64> {
    let r = a.len() / k;
    let c = b.len() / k;
    let mut out = vec![0.0; r * c];
    for i in 0..r {
        for j in 0..c {
            out[i * c + j] = (0..k).map(|t| a[i * k + t] * b[j * k + t]).sum();
        }
    }
    out
}

/// `a[k, r]ᵀ · b[k, c]`.
pub fn matmul_tn(a: &[f64], r: usize, b: &[f64], c: usize) -> Vec<f64> {
    let k = a.len() / r;
    let mut out = vec![0.0; r * c];
    for i in 0..r {
        for j in 0..c {
            out[i * c + j] = (0..k).map(|t| a[t * r + i] * b[t * c + j]).sum();
        }
    }
    out
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else {
        x.exp().ln_1p()
    }
}

/// Single-pass grouping for one image: `inputs[P, D]`, `priors[n, D]`.
/// Returns `(W[P, n], slots[n, D])`.
pub fn ssa_reference(store: &ParamStore<f64>, inputs: &[f64], priors: &[f64], d: usize, tau: f64, eps: f64) -> (Vec<f64>, Vec<f64>) {
    let n = priors.len() / d;
    let x = layer_norm(inputs, d, &param(store, "grouping.norm_inputs.gamma"), &param(store, "grouping.norm_inputs.beta"), eps);
    let s = layer_norm(priors, d, &param(store, "grouping.norm_slots.gamma"), &param(store, "grouping.norm_slots.beta"), eps);
    let k = linear(&x, d, &param(store, "grouping.k.weight"), None);
    let q = linear(&s, d, &param(store, "grouping.q.weight"), None);
    let m: Vec<f64> = matmul_nt(&k, &q, d).into_iter().map(|v| v / tau).collect();
    let w = softmax_rows(&m, n);
    let slots = matmul_tn(&w, n, &k, d);
    (w, slots)
}

/// Iterative Slot Attention for one image: `inputs[P, D]`, `noise[n, D]`.
/// Returns `(last attention[P, n], slots[n, D])`.
pub fn slot_attention_reference(
    store: &ParamStore<f64>,
    inputs: &[f64],
    noise: &[f64],
    d: usize,
    iters: usize,
    ln_eps: f64,
    attn_eps: f64,
) -> (Vec<f64>, Vec<f64>) {
    let n = noise.len() / d;
    let p = inputs.len() / d;
    let ln = |x: &[f64], name: &str| {
        layer_norm(x, d, &param(store, &format!("grouping.{name}.gamma")), &param(store, &format!("grouping.{name}.beta")), ln_eps)
    };
    let x = ln(inputs, "norm_inputs");
    let k = linear(&x, d, &param(store, "grouping.k.weight"), None);
    let v = linear(&x, d, &param(store, "grouping.v.weight"), None);
    let mu = param(store, "grouping.mu");
    let sigma = param(store, "grouping.sigma");
    let mut slots: Vec<f64> = (0..n * d).map(|i| mu[i % d] + softplus(sigma[i % d]) * noise[i]).collect();
    let (wih, whh) = (param(store, "grouping.gru.weight_ih"), param(store, "grouping.gru.weight_hh"));
    let (bih, bhh) = (param(store, "grouping.gru.bias_ih"), param(store, "grouping.gru.bias_hh"));
    let (w0, b0) = (param(store, "grouping.mlp0.weight"), param(store, "grouping.mlp0.bias"));
    let (w1, b1) = (param(store, "grouping.mlp1.weight"), param(store, "grouping.mlp1.bias"));
    let hidden = b0.len();
    let mut attn = Vec::new();
    for _ in 0..iters {
        let prev = slots.clone();
        let q = linear(&ln(&slots, "norm_slots"), d, &param(store, "grouping.q.weight"), None);
        let logits: Vec<f64> = matmul_nt(&k, &q, d).into_iter().map(|l| l / (d as f64).sqrt()).collect();
        attn = softmax_rows(&logits, n);
        let mut updates = vec![0.0; n * d];
        for j in 0..n {
            let mass: f64 = (0..p).map(|i| attn[i * n + j]).sum::<f64>() + attn_eps;
            for i in 0..p {
                let wgt = attn[i * n + j] / mass;
                for c in 0..d {
                    updates[j * d + c] += wgt * v[i * d + c];
                }
            }
        }
        let gi = linear(&updates, d, &wih, Some(&bih));
        let gh = linear(&prev, d, &whh, Some(&bhh));
        for j in 0..n {
            for c in 0..d {
                let g = |buf: &[f64], block: usize| buf[j * 3 * d + block * d + c];
                let r = sigmoid(g(&gi, 0) + g(&gh, 0));
                let z = sigmoid(g(&gi, 1) + g(&gh, 1));
                let cand = (g(&gi, 2) + r * g(&gh, 2)).tanh();
                slots[j * d + c] = (1.0 - z) * cand + z * prev[j * d + c];
            }
        }
        let h = linear(&ln(&slots, "norm_mlp"), d, &w0, Some(&b0));
        let h: Vec<f64> = h.into_iter().map(|v| v.max(0.0)).collect();
        let h = linear(&h, hidden, &w1, Some(&b1));
        for (s, u) in slots.iter_mut().zip(h) {
            *s += u;
        }
    }
    (attn, slots)
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Pair-counting ARI by enumerating all unordered element pairs. Counts
/// are exact integers; the single division happens at the end.
pub fn brute_force_ari(a: &[u32], b: &[u32]) -> f64 {
    let n = a.len();
    let (mut both, mut in_a, mut in_b, mut pairs) = (0i128, 0i128, 0i128, 0i128);
    for i in 0..n {
        for j in i + 1..n {
            let sa = a[i] == a[j];
            let sb = b[i] == b[j];
            pairs += 1;
            in_a += sa as i128;
            in_b += sb as i128;
            both += (sa && sb) as i128;
        }
    }
    // (both - E) / (M - E) with E = in_a·in_b/pairs and M = (in_a+in_b)/2,
    // scaled by 2·pairs.
    let num = 2 * both * pairs - 2 * in_a * in_b;
    let den = (in_a + in_b) * pairs - 2 * in_a * in_b;
    if den == 0 {
        let identical = (0..n).all(|i| (i + 1..n).all(|j| (a[i] == a[j]) == (b[i] == b[j])));
        return if identical { 1.0 } else { 0.0 };
    }
    num as f64 / den as f64
}
