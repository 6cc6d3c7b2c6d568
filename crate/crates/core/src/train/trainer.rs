//! The training loop.

use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{clip_grad_norm, evaluate, AdamState, Checkpoint, RunDir, TrainConfig};
use crate::data::Sample;
use crate::error::{Result, SampError};
use crate::model::SampNet;
use crate::param::ParamStore;
use crate::tape::Tape;
use crate::util::atomic_write;

/// One line of the metrics log.
#[derive(Clone, Debug, PartialEq)]
pub struct LogRow {
    /// Zero-based index of the update.
    pub step: usize,
    /// Loss of the batch before the update.
    pub loss: f32,
    pub lr: f64,
    /// Validation FG-ARI after the update, when evaluated.
    pub fg_ari: Option<f64>,
}

impl LogRow {
    pub fn csv(rows: &[LogRow]) -> String {
        let mut s = String::from("step,loss,lr,fg_ari\n");
        for r in rows {
            let ari = r.fg_ari.map(|v| v.to_string()).unwrap_or_default();
            let _ = writeln!(s, "{},{},{},{}", r.step, r.loss, r.lr, ari);
        }
        s
    }
}

/// Number of recent losses kept in checkpoints.
const LOSS_TAIL: usize = 100;

/// Stream separating shuffling randomness from slot-noise randomness.
const STREAM_SHUFFLE: u64 = 1;
const STREAM_NOISE: u64 = 2;

/// Independent generator for `(purpose, counter)`, e.g. one per epoch.
fn derived_rng(seed: u64, stream: u64, counter: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((stream << 56) | counter);
    rng
}

/// Training state: model, parameters, optimizer and log.
pub struct Trainer {
    config: TrainConfig,
    net: SampNet,
    store: ParamStore<f32>,
    adam: AdamState,
    step: usize,
    log: Vec<LogRow>,
    order: Option<(usize, Vec<usize>)>,
    dataset_fingerprint: Option<String>,
}

impl Trainer {
    pub fn new(config: TrainConfig) -> Result<Self> {
        config.validate()?;
        let model = config.model_config()?;
        let (net, store) = SampNet::build(&model, config.variant, config.iters, config.seed)?;
        let adam = AdamState::new(&store);
        Ok(Trainer {
            config,
            net,
            store,
            adam,
            step: 0,
            log: Vec::new(),
            order: None,
            dataset_fingerprint: None,
        })
    }

    /// Restores a run; `log` holds the rows written before the checkpoint.
    pub fn from_checkpoint(ckpt: Checkpoint, log: Vec<LogRow>) -> Result<Self> {
        let (net, fresh) = SampNet::build::<f32>(&ckpt.model, ckpt.config.variant, ckpt.config.iters, ckpt.config.seed)?;
        if fresh.names() != ckpt.params.names() {
            return Err(SampError::Config("checkpoint parameters do not match the model".into()));
        }
        Ok(Trainer {
            config: ckpt.config,
            net,
            store: ckpt.params,
            adam: ckpt.adam,
            step: ckpt.step,
            log: log.into_iter().filter(|r| r.step < ckpt.step).collect(),
            order: None,
            dataset_fingerprint: ckpt.dataset_fingerprint,
        })
    }

    pub fn set_dataset_fingerprint(&mut self, fp: impl Into<String>) {
        self.dataset_fingerprint = Some(fp.into());
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    pub fn net(&self) -> &SampNet {
        &self.net
    }

    pub fn store(&self) -> &ParamStore<f32> {
        &self.store
    }

    /// Completed updates.
    pub fn step(&self) -> usize {
        self.step
    }

    pub fn log(&self) -> &[LogRow] {
        &self.log
    }

    pub fn checkpoint(&self) -> Checkpoint {
        let tail_start = self.log.len().saturating_sub(LOSS_TAIL);
        Checkpoint {
            config: self.config.clone(),
            model: self.net.config().clone(),
            step: self.step,
            params: self.store.clone(),
            adam: self.adam.clone(),
            rng_seed: self.config.seed,
            dataset_fingerprint: self.dataset_fingerprint.clone(),
            loss_tail: self.log[tail_start..].iter().map(|r| r.loss).collect(),
        }
    }

    /// Training-set indices of the batch for `step`: consecutive slices of
    /// per-epoch permutations, each a pure function of `(seed, epoch)`.
    pub fn batch_indices(&mut self, step: usize, n_train: usize) -> Vec<usize> {
        let b = self.config.batch_size;
        (step * b..(step + 1) * b)
            .map(|pos| {
                let epoch = pos / n_train;
                if self.order.as_ref().map(|(e, _)| *e) != Some(epoch) {
                    let mut perm: Vec<usize> = (0..n_train).collect();
                    perm.shuffle(&mut derived_rng(self.config.seed, STREAM_SHUFFLE, epoch as u64));
                    self.order = Some((epoch, perm));
                }
                self.order.as_ref().expect("just set").1[pos % n_train]
            })
            .collect()
    }

    /// One optimizer update on the next batch.
    pub fn train_step(&mut self, train: &[Sample]) -> Result<LogRow> {
        if train.is_empty() {
            return Err(SampError::InvalidArgument("empty training set".into()));
        }
        let step = self.step;
        let idx = self.batch_indices(step, train.len());
        let batch: Vec<&Sample> = idx.iter().map(|&i| &train[i]).collect();
        let images = super::images_tensor(&batch)?;
        let mut tape = Tape::new();
        let x = tape.input(images);
        let noise = if self.net.needs_noise() {
            let mut rng = derived_rng(self.config.seed, STREAM_NOISE, step as u64);
            Some(tape.input(self.net.sample_noise(batch.len(), &mut rng)))
        } else {
            None
        };
        let out = match self.net.forward(&self.store, &mut tape, x, noise) {
            Err(SampError::NonFinite { .. }) => return Err(SampError::NonFiniteLoss { step }),
            other => other?,
        };
        let loss = tape.data(out.loss)[0];
        if !loss.is_finite() {
            return Err(SampError::NonFiniteLoss { step });
        }
        let grads = tape.backward(out.loss)?;
        drop(tape);
        self.store.zero_grad();
        grads.accumulate_into(&mut self.store)?;
        drop(grads);
        if let Some(max) = self.config.grad_clip_norm {
            clip_grad_norm(&mut self.store, max);
        }
        let lr = self.config.lr_at(step);
        self.adam.step(&mut self.store, lr)?;
        self.store.zero_grad();
        self.step += 1;
        let row = LogRow {
            step,
            loss,
            lr,
            fg_ari: None,
        };
        self.log.push(row.clone());
        Ok(row)
    }

    fn text_log(&self) -> String {
        let mut s = String::new();
        for r in &self.log {
            let _ = write!(s, "step {} loss {} lr {}", r.step, r.loss, r.lr);
            if let Some(a) = r.fg_ari {
                let _ = write!(s, " val_fg_ari {a}");
            }
            s.push('\n');
        }
        s
    }

    /// Trains until `config.steps` updates are done, evaluating,
    /// checkpointing and snapshotting on schedule. `progress` sees every row.
    pub fn run(
        &mut self,
        train: &[Sample],
        val: Option<&[Sample]>,
        run_dir: Option<&RunDir>,
        progress: &mut dyn FnMut(&LogRow),
    ) -> Result<()> {
        if let Some(dir) = run_dir {
            dir.write_config(&self.config, self.dataset_fingerprint.as_deref())?;
        }
        while self.step < self.config.steps {
            let mut row = self.train_step(train)?;
            let done = self.step;
            let cfg = &self.config;
            if let Some(val) = val {
                if cfg.eval_every > 0 && (done % cfg.eval_every == 0 || done == cfg.steps) {
                    let n = cfg.eval_samples.min(val.len()).max(1);
                    let report = evaluate(&self.net, &self.store, &val[..n], cfg.batch_size, cfg.seed)?;
                    row.fg_ari = Some(report.mean);
                    self.log.last_mut().expect("row just pushed").fg_ari = row.fg_ari;
                }
            }
            progress(&row);
            if let Some(dir) = run_dir {
                if self.config.snapshot_steps.contains(&done) {
                    let sample = val.and_then(|v| v.first()).unwrap_or(&train[0]);
                    crate::viz::write_snapshot(&self.net, &self.store, sample, &dir.images_dir(), done)?;
                }
                let ck = self.config.checkpoint_every;
                if (ck > 0 && done % ck == 0) || done == self.config.steps {
                    dir.save_checkpoint(&self.checkpoint())?;
                    dir.write_metrics(&self.log)?;
                    atomic_write(&dir.log_path(), self.text_log().as_bytes())?;
                }
            }
        }
        Ok(())
    }
}
