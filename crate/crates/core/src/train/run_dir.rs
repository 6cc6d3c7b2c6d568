//! On-disk layout of a training run.

use std::path::{Path, PathBuf};

use super::{Checkpoint, LogRow, TrainConfig};
use crate::error::Result;
use crate::util::{atomic_write, create_dir_all};

/// `config.json`, `metrics.csv`, `checkpoints/step_XXXXXX.smpc`, `last`
/// (copy of the newest checkpoint), `logs/` and `images/`.
#[derive(Clone, Debug)]
pub struct RunDir {
    pub root: PathBuf,
}

impl RunDir {
    pub fn create(root: &Path) -> Result<Self> {
        for sub in ["checkpoints", "logs", "images"] {
            create_dir_all(&root.join(sub))?;
        }
        Ok(RunDir { root: root.to_path_buf() })
    }

    pub fn config_path(&self) -> PathBuf {
        self.root.join("config.json")
    }

    pub fn metrics_path(&self) -> PathBuf {
        self.root.join("metrics.csv")
    }

    pub fn last_path(&self) -> PathBuf {
        self.root.join("last")
    }

    pub fn checkpoint_path(&self, step: usize) -> PathBuf {
        self.root.join("checkpoints").join(format!("step_{step:06}.smpc"))
    }

    pub fn images_dir(&self) -> PathBuf {
        self.root.join("images")
    }

    pub fn log_path(&self) -> PathBuf {
        self.root.join("logs").join("train.log")
    }

    /// Records the configuration and the dataset it was trained on.
    pub fn write_config(&self, config: &TrainConfig, dataset_fingerprint: Option<&str>) -> Result<()> {
        let echo = serde_json::json!({
            "train": config,
            "model": config.model_config()?,
            "dataset_fingerprint": dataset_fingerprint,
        });
        atomic_write(&self.config_path(), serde_json::to_string_pretty(&echo)?.as_bytes())
    }

    pub fn write_metrics(&self, rows: &[LogRow]) -> Result<()> {
        atomic_write(&self.metrics_path(), LogRow::csv(rows).as_bytes())
    }

    pub fn save_checkpoint(&self, ckpt: &Checkpoint) -> Result<()> {
        let bytes = ckpt.to_bytes()?;
        atomic_write(&self.checkpoint_path(ckpt.step), &bytes)?;
        atomic_write(&self.last_path(), &bytes)
    }
}
