//! Ablation driver: one training run per (value, seed), scored by test
//! FG-ARI and summarized as a table.

use std::fmt::Write as _;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::baseline::VariantKind;
use crate::data::Sample;
use crate::error::{Result, SampError};
use crate::metrics::mean_std;
use crate::train::{evaluate, RunDir, TrainConfig, Trainer};

/// Environment variable capping parallel workers.
pub const THREADS_ENV: &str = "SAMP_THREADS";

/// Worker count from `SAMP_THREADS` (default 1, minimum 1).
pub fn threads_from_env() -> usize {
    std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .unwrap_or(1)
        .max(1)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AblationAxis {
    Variant,
    NSlots,
}

impl AblationAxis {
    pub fn parse(s: &str) -> Result<Self> {
        match s.replace('-', "_").as_str() {
            "variant" => Ok(AblationAxis::Variant),
            "n_slots" | "slots" => Ok(AblationAxis::NSlots),
            _ => Err(SampError::Config(format!("unknown ablation axis `{s}`"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            AblationAxis::Variant => "variant",
            AblationAxis::NSlots => "n_slots",
        }
    }

    /// Training configuration for one value along this axis.
    pub fn apply(self, base: &TrainConfig, value: &str) -> Result<TrainConfig> {
        let mut cfg = base.clone();
        match self {
            AblationAxis::Variant => cfg.variant = VariantKind::parse(value)?,
            AblationAxis::NSlots => {
                let n = value
                    .parse::<usize>()
                    .map_err(|_| SampError::Config(format!("slot count `{value}` is not an integer")))?;
                cfg.n_slots = Some(n);
            }
        }
        cfg.model_config()?;
        Ok(cfg)
    }
}

/// Result of one training run.
#[derive(Clone, Debug, PartialEq)]
pub struct AblationRun {
    pub value: String,
    pub seed: u64,
    pub fg_ari: f64,
    pub final_loss: f32,
}

/// Aggregate over seeds for one value.
#[derive(Clone, Debug, PartialEq)]
pub struct AblationRow {
    pub value: String,
    pub scores: Vec<f64>,
    pub mean: f64,
    pub std: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AblationTable {
    pub axis: AblationAxis,
    pub rows: Vec<AblationRow>,
    pub runs: Vec<AblationRun>,
}

impl AblationTable {
    pub fn to_csv(&self) -> String {
        let mut s = format!("{},n_seeds,fg_ari_mean,fg_ari_std\n", self.axis.name());
        for r in &self.rows {
            let _ = writeln!(s, "{},{},{},{}", r.value, r.scores.len(), r.mean, r.std);
        }
        s
    }

    /// Aligned text table with FG-ARI in percent.
    pub fn to_text(&self) -> String {
        let width = self.rows.iter().map(|r| r.value.len()).max().unwrap_or(0).max(self.axis.name().len());
        let mut s = format!("{:<width$}  FG-ARI (%)       seeds\n", self.axis.name());
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{:<width$}  {:>6.2} ± {:<6.2}  {}",
                r.value,
                100.0 * r.mean,
                100.0 * r.std,
                r.scores.len()
            );
        }
        s
    }

    pub fn row(&self, value: &str) -> Option<&AblationRow> {
        self.rows.iter().find(|r| r.value == value)
    }
}

/// Trains one run and scores it on `test`.
pub fn run_one(
    cfg: TrainConfig,
    train: &[Sample],
    test: &[Sample],
    run_dir: Option<&Path>,
    dataset_fingerprint: Option<&str>,
) -> Result<(Trainer, f64)> {
    let mut trainer = Trainer::new(cfg)?;
    if let Some(fp) = dataset_fingerprint {
        trainer.set_dataset_fingerprint(fp);
    }
    let dir = run_dir.map(RunDir::create).transpose()?;
    trainer.run(train, None, dir.as_ref(), &mut |_| {})?;
    let report = evaluate(trainer.net(), trainer.store(), test, trainer.config().batch_size, trainer.config().seed)?;
    Ok((trainer, report.mean))
}

/// Runs the full grid with at most `threads` concurrent runs. Run
/// directories go under `out_dir/<axis>_<value>_seed<seed>` when given.
#[allow(clippy::too_many_arguments)]
pub fn ablate(
    base: &TrainConfig,
    axis: AblationAxis,
    values: &[String],
    seeds: &[u64],
    train: &[Sample],
    test: &[Sample],
    out_dir: Option<&Path>,
    dataset_fingerprint: Option<&str>,
    threads: usize,
) -> Result<AblationTable> {
    if values.is_empty() || seeds.is_empty() {
        return Err(SampError::InvalidArgument("ablation needs at least one value and one seed".into()));
    }
    let mut jobs = Vec::new();
    for v in values {
        let cfg = axis.apply(base, v)?;
        for &seed in seeds {
            jobs.push((v.clone(), seed, TrainConfig { seed, ..cfg.clone() }));
        }
    }
    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<Result<AblationRun>>>> = Mutex::new((0..jobs.len()).map(|_| None).collect());
    std::thread::scope(|scope| {
        for _ in 0..threads.clamp(1, jobs.len()) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some((value, seed, cfg)) = jobs.get(i) else { break };
                let dir = out_dir.map(|d| d.join(format!("{}_{}_seed{}", axis.name(), value, seed)));
                let res = run_one(cfg.clone(), train, test, dir.as_deref(), dataset_fingerprint).map(|(t, score)| {
                    AblationRun {
                        value: value.clone(),
                        seed: *seed,
                        fg_ari: score,
                        final_loss: t.log().last().map(|r| r.loss).unwrap_or(f32::NAN),
                    }
                });
                results.lock().expect("no poisoned lock")[i] = Some(res);
            });
        }
    });
    let runs = results
        .into_inner()
        .expect("no poisoned lock")
        .into_iter()
        .map(|r| r.expect("every job ran"))
        .collect::<Result<Vec<_>>>()?;
    let rows = values
        .iter()
        .map(|v| {
            let scores: Vec<f64> = runs.iter().filter(|r| &r.value == v).map(|r| r.fg_ari).collect();
            let (mean, std) = mean_std(&scores);
            AblationRow {
                value: v.clone(),
                scores,
                mean,
                std,
            }
        })
        .collect();
    let table = AblationTable { axis, rows, runs };
    if let Some(d) = out_dir {
        crate::util::atomic_write(&d.join("ablation.csv"), table.to_csv().as_bytes())?;
        crate::util::atomic_write(&d.join("ablation.txt"), table.to_text().as_bytes())?;
    }
    Ok(table)
}
