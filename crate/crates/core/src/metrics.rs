//! Adjusted Rand Index and its foreground-only variant.

use fnv::FnvHashMap;

use crate::error::{Result, SampError};

/// Pair counts behind the adjusted Rand index.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ContingencyTable {
    /// `counts[i][j]` = elements with label `i` in `a` and `j` in `b`
    /// (labels compacted to first-appearance order).
    pub counts: Vec<Vec<u64>>,
    pub row_sums: Vec<u64>,
    pub col_sums: Vec<u64>,
    pub total: u64,
}

/// Labels mapped to `0..k` in first-appearance order. Small label sets use a
/// linear scan; larger ones fall back to a hash map.
fn compact(labels: &[u32]) -> (Vec<usize>, usize) {
    const LINEAR_LIMIT: usize = 16;
    let mut seen: Vec<u32> = Vec::with_capacity(LINEAR_LIMIT);
    let mut ids = Vec::with_capacity(labels.len());
    for (pos, &l) in labels.iter().enumerate() {
        match seen.iter().position(|&s| s == l) {
            Some(i) => ids.push(i),
            None if seen.len() < LINEAR_LIMIT => {
                ids.push(seen.len());
                seen.push(l);
            }
            None => return compact_hashed(labels, ids, seen, pos),
        }
    }
    let k = seen.len();
    (ids, k)
}

fn compact_hashed(labels: &[u32], mut ids: Vec<usize>, seen: Vec<u32>, from: usize) -> (Vec<usize>, usize) {
    let mut map: FnvHashMap<u32, usize> = seen.into_iter().enumerate().map(|(i, l)| (l, i)).collect();
    for l in &labels[from..] {
        let next = map.len();
        ids.push(*map.entry(*l).or_insert(next));
    }
    (ids, map.len())
}

/// Row-major `ka x kb` contingency counts.
fn flat_counts(a: &[u32], b: &[u32]) -> (Vec<u64>, usize, usize) {
    let (ia, ka) = compact(a);
    let (ib, kb) = compact(b);
    let mut counts = vec![0u64; ka * kb];
    for (&i, &j) in ia.iter().zip(&ib) {
        counts[i * kb + j] += 1;
    }
    (counts, ka, kb)
}

impl ContingencyTable {
    pub fn new(a: &[u32], b: &[u32]) -> Result<Self> {
        if a.len() != b.len() {
            return Err(SampError::InvalidArgument(format!(
                "label maps differ in length: {} vs {}",
                a.len(),
                b.len()
            )));
        }
        let (flat, ka, kb) = flat_counts(a, b);
        let counts: Vec<Vec<u64>> = (0..ka).map(|i| flat[i * kb..(i + 1) * kb].to_vec()).collect();
        let row_sums = counts.iter().map(|r| r.iter().sum()).collect();
        let col_sums = (0..kb).map(|j| counts.iter().map(|r| r[j]).sum()).collect();
        Ok(ContingencyTable {
            counts,
            row_sums,
            col_sums,
            total: a.len() as u64,
        })
    }

    /// Both labelings induce the same partition.
    pub fn identical_partitions(&self) -> bool {
        self.row_sums.len() == self.col_sums.len()
            && self.counts.iter().all(|r| r.iter().filter(|&&c| c > 0).count() == 1)
    }
}

fn pairs(n: u64) -> u128 {
    let n = n as u128;
    n * n.saturating_sub(1) / 2
}

/// Adjusted Rand index (Hubert-Arabie) with exact integer pair counting.
///
/// When the expected and maximum index coincide (e.g. both labelings are a
/// single cluster) the score is 1.0 for identical partitions and 0.0
/// otherwise.
pub fn ari(a: &[u32], b: &[u32]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(SampError::InvalidArgument(format!(
            "label maps differ in length: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    if a.len() < 2 {
        return Err(SampError::UndefinedScore(format!("ARI needs at least 2 elements, got {}", a.len())));
    }
    let (counts, ka, kb) = flat_counts(a, b);
    let mut row_sums = vec![0u64; ka];
    let mut col_sums = vec![0u64; kb];
    let mut index: u128 = 0;
    for i in 0..ka {
        for j in 0..kb {
            let c = counts[i * kb + j];
            row_sums[i] += c;
            col_sums[j] += c;
            index += pairs(c);
        }
    }
    let sa: u128 = row_sums.iter().map(|&c| pairs(c)).sum();
    let sb: u128 = col_sums.iter().map(|&c| pairs(c)).sum();
    let c = pairs(a.len() as u64);
    // ARI = (index - sa·sb/c) / ((sa+sb)/2 - sa·sb/c), scaled by 2c.
    let num = 2 * index as i128 * c as i128 - 2 * (sa * sb) as i128;
    let den = (sa + sb) as i128 * c as i128 - 2 * (sa * sb) as i128;
    if den == 0 {
        // Identical partitions: same class count and one nonzero cell per row.
        let identical = ka == kb && counts.chunks(kb.max(1)).all(|r| r.iter().filter(|&&c| c > 0).count() == 1);
        return Ok(if identical { 1.0 } else { 0.0 });
    }
    Ok(num as f64 / den as f64)
}

/// ARI restricted to pixels whose ground-truth label is not `background`.
pub fn fg_ari(pred: &[u32], gt: &[u32], background: u32) -> Result<f64> {
    if pred.len() != gt.len() {
        return Err(SampError::InvalidArgument("label maps differ in length".into()));
    }
    let (p, g): (Vec<u32>, Vec<u32>) = pred
        .iter()
        .zip(gt)
        .filter(|(_, &g)| g != background)
        .map(|(&p, &g)| (p, g))
        .unzip();
    if g.is_empty() {
        return Err(SampError::UndefinedScore("no foreground pixels".into()));
    }
    ari(&p, &g)
}

/// Per-pixel argmax over slots of `weights[n, pixels]`; ties go to the lower
/// slot index.
pub fn masks_to_labels<T: PartialOrd + Copy>(weights: &[T], n_slots: usize) -> Vec<u32> {
    let pixels = weights.len() / n_slots.max(1);
    (0..pixels)
        .map(|p| {
            let mut best = 0;
            for s in 1..n_slots {
                if weights[s * pixels + p] > weights[best * pixels + p] {
                    best = s;
                }
            }
            best as u32
        })
        .collect()
}

/// Mean and population standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}
