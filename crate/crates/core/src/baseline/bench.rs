//! Wall-time and memory measurements of grouping modules.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Grouping, VariantKind};
use crate::error::{Result, SampError};
use crate::model::SampConfig;
use crate::param::ParamStore;
use crate::tape::Tape;
use crate::tensor::Tensor;

/// Problem size of one benchmark configuration.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BenchSize {
    /// Number of pixels.
    pub p: usize,
    pub n: usize,
    pub d: usize,
}

/// One measured configuration.
#[derive(Clone, Debug, PartialEq)]
pub struct BenchRow {
    pub variant: VariantKind,
    /// Iteration count; recorded for non-iterative modules too.
    pub t: usize,
    pub p: usize,
    pub n: usize,
    pub d: usize,
    pub median_ms: f64,
    pub peak_bytes: usize,
}

/// Least-squares line `y = slope·x + intercept` with its coefficient of
/// determination.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
}

pub fn linear_fit(xs: &[f64], ys: &[f64]) -> LinearFit {
    let n = xs.len().min(ys.len()) as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my) * (y - my)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let r2 = if sxx > 0.0 && syy > 0.0 { sxy * sxy / (sxx * syy) } else { 1.0 };
    LinearFit {
        slope,
        intercept: my - slope * mx,
        r2,
    }
}

/// Collection of benchmark rows.
#[derive(Clone, Debug, Default)]
pub struct BenchReport {
    pub rows: Vec<BenchRow>,
}

impl BenchReport {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("variant,T,P,n,D,median_ms,peak_bytes\n");
        for r in &self.rows {
            s.push_str(&format!(
                "{},{},{},{},{},{:.6},{}\n",
                r.variant, r.t, r.p, r.n, r.d, r.median_ms, r.peak_bytes
            ));
        }
        s
    }

    /// Fit of median time against `T` for one variant at pixel count `p`.
    pub fn fit_vs_t(&self, variant: VariantKind, p: usize) -> LinearFit {
        let (xs, ys): (Vec<f64>, Vec<f64>) = self
            .rows
            .iter()
            .filter(|r| r.variant == variant && r.p == p)
            .map(|r| (r.t as f64, r.median_ms))
            .unzip();
        linear_fit(&xs, &ys)
    }

    /// Fit of median time against `P` for one variant at iteration count `t`.
    pub fn fit_vs_p(&self, variant: VariantKind, t: usize) -> LinearFit {
        let (xs, ys): (Vec<f64>, Vec<f64>) = self
            .rows
            .iter()
            .filter(|r| r.variant == variant && r.t == t)
            .map(|r| (r.p as f64, r.median_ms))
            .unzip();
        linear_fit(&xs, &ys)
    }
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(|a, b| a.total_cmp(b));
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

/// Times forward + backward of a grouping module in 32-bit precision.
///
/// Each configuration runs `warmup` untimed repetitions followed by `reps`
/// timed ones (at least 20); the median is reported. Non-iterative modules
/// ignore `t` but are measured at every value so their flat profile shows.
pub fn bench_grouping(
    kind: VariantKind,
    t_list: &[usize],
    sizes: &[BenchSize],
    reps: usize,
    warmup: usize,
    seed: u64,
) -> Result<BenchReport> {
    if reps < 20 {
        return Err(SampError::InvalidArgument(format!("need at least 20 repetitions, got {reps}")));
    }
    let mut report = BenchReport::default();
    for size in sizes {
        for &t in t_list {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut cfg = SampConfig::preset(crate::model::Preset::Mini);
            cfg.n_slots = size.n;
            cfg.slot_dim = size.d;
            let mut store = ParamStore::<f32>::new();
            let grouping = Grouping::new(kind, &mut store, &cfg, t, &mut rng)?;
            let mut rand_tensor = |shape: Vec<usize>| {
                let n = shape.iter().product();
                Tensor::new(shape, (0..n).map(|_| rng.random_range(-1.0f32..1.0)).collect())
            };
            let inputs = rand_tensor(vec![1, size.p, size.d])?;
            let slots = rand_tensor(vec![1, size.n, size.d])?;
            let mut times = Vec::with_capacity(reps);
            let mut peak = 0;
            for i in 0..warmup + reps {
                let start = Instant::now();
                let mut tape = Tape::new();
                let x = tape.leaf(inputs.clone());
                let s = tape.leaf(slots.clone());
                let out = grouping.forward(&store, &mut tape, x, s)?;
                let loss = tape.sum(out.slots.slots)?;
                let grads = tape.backward(loss)?;
                let elapsed = start.elapsed().as_secs_f64() * 1e3;
                peak = peak.max(tape.value_bytes() + grads.peak_bytes());
                if i >= warmup {
                    times.push(elapsed);
                }
            }
            report.rows.push(BenchRow {
                variant: kind,
                t,
                p: size.p,
                n: size.n,
                d: size.d,
                median_ms: median(times),
                peak_bytes: peak,
            });
        }
    }
    Ok(report)
}
