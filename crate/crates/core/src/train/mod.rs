//! Training and evaluation: optimizer, schedule, checkpoints, run
//! directories and the training loop.

mod adam;
mod checkpoint;
mod eval;
mod run_dir;
mod trainer;

pub use adam::{clip_grad_norm, grad_norm, lr_at, AdamState, BETA1, BETA2, EPS};
pub use checkpoint::{Checkpoint, CHECKPOINT_VERSION};
pub use eval::{evaluate, forward_batch, images_tensor, EvalReport};
pub use run_dir::RunDir;
pub use trainer::{LogRow, Trainer};

use serde::{Deserialize, Serialize};

use crate::baseline::VariantKind;
use crate::error::{Result, SampError};
use crate::model::{Preset, SampConfig};

/// Training hyperparameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub preset: Preset,
    pub variant: VariantKind,
    /// Overrides the preset's slot count when set.
    pub n_slots: Option<usize>,
    /// Iterations of the Slot Attention baseline.
    pub iters: usize,
    pub batch_size: usize,
    pub steps: usize,
    pub base_lr: f64,
    pub warmup_steps: usize,
    pub decay_rate: f64,
    pub decay_steps: usize,
    pub grad_clip_norm: Option<f64>,
    pub seed: u64,
    /// Validation FG-ARI every this many steps (0 disables).
    pub eval_every: usize,
    /// Number of validation samples used for periodic evaluation.
    pub eval_samples: usize,
    /// Checkpoint every this many steps (0: only at the end).
    pub checkpoint_every: usize,
    /// Steps after which reconstruction/attention snapshots are rendered.
    pub snapshot_steps: Vec<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            preset: Preset::Mini,
            variant: VariantKind::Ssa,
            n_slots: None,
            iters: 3,
            batch_size: 32,
            steps: 20_000,
            base_lr: 4e-4,
            warmup_steps: 1000,
            decay_rate: 0.5,
            decay_steps: 10_000,
            grad_clip_norm: None,
            seed: 0,
            eval_every: 0,
            eval_samples: 320,
            checkpoint_every: 1000,
            snapshot_steps: Vec::new(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(SampError::Config(m.to_string()));
        if self.steps == 0 {
            return bad("steps must be at least 1");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1");
        }
        if !(self.decay_rate > 0.0 && self.decay_rate <= 1.0) {
            return bad("decay_rate must lie in (0, 1]");
        }
        if !(self.base_lr > 0.0 && self.base_lr.is_finite()) {
            return bad("base_lr must be positive");
        }
        if self.iters == 0 {
            return bad("iters must be at least 1");
        }
        if matches!(self.grad_clip_norm, Some(c) if !(c > 0.0)) {
            return bad("grad_clip_norm must be positive");
        }
        Ok(())
    }

    /// Learning rate used for the update at `step`.
    pub fn lr_at(&self, step: usize) -> f64 {
        lr_at(step, self.base_lr, self.warmup_steps, self.decay_rate, self.decay_steps)
    }

    /// Model architecture implied by preset and slot count.
    pub fn model_config(&self) -> Result<SampConfig> {
        match self.n_slots {
            Some(n) => SampConfig::with_slots(self.preset, n),
            None => Ok(SampConfig::preset(self.preset)),
        }
    }
}
