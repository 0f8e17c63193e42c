use super::storage::{checkpoint_path, AgentMetadata};
use crate::learning::{compute_gradients, Adam, LossConfig, MetricsRow, OptimizerConfig, Sequence};
use crate::model::AgentNet;
use crate::tensor::{Checkpoint, ParameterStore};
use crate::{Error, Result};
use std::collections::VecDeque;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

/// One agent's parameters, optimizer and incoming sequence buffer.
///
/// Every update consumes exactly `batch_size` sequences and advances the
/// step counter by `unroll * batch_size`, whatever the sequences' actual
/// lengths; `frames` counts the environment steps really consumed.
pub struct Learner {
    pub id: String,
    pub seed: u64,
    net: Arc<AgentNet>,
    arch_hash: [u8; 32],
    params: Arc<ParameterStore<f32>>,
    opt: Adam,
    loss: LossConfig,
    batch_size: usize,
    unroll: usize,
    buffer: VecDeque<Sequence>,
    steps: u64,
    frames: u64,
    updates: u64,
    dir: Option<PathBuf>,
    metrics: Option<std::io::BufWriter<std::fs::File>>,
}

impl Learner {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        id: String,
        seed: u64,
        net: Arc<AgentNet>,
        params: ParameterStore<f32>,
        loss: LossConfig,
        optimizer: OptimizerConfig,
        batch_size: usize,
        unroll: usize,
    ) -> Result<Self> {
        net.check_params(&params)?;
        let arch_hash = net.arch_hash();
        Ok(Learner {
            id,
            seed,
            net,
            arch_hash,
            params: Arc::new(params),
            opt: Adam::new(optimizer),
            loss,
            batch_size,
            unroll,
            buffer: VecDeque::new(),
            steps: 0,
            frames: 0,
            updates: 0,
            dir: None,
            metrics: None,
        })
    }

    /// Writes metadata, metrics and checkpoints under `dir`.
    pub fn attach_dir(&mut self, dir: PathBuf, meta: &AgentMetadata) -> Result<()> {
        meta.write(&dir)?;
        let f = std::fs::OpenOptions::new().create(true).append(true).open(dir.join("metrics.jsonl"))?;
        self.metrics = Some(std::io::BufWriter::new(f));
        self.dir = Some(dir);
        Ok(())
    }

    pub fn dir(&self) -> Option<&Path> {
        self.dir.as_deref()
    }

    pub fn net(&self) -> &Arc<AgentNet> {
        &self.net
    }

    /// The current immutable snapshot.
    pub fn snapshot(&self) -> Arc<ParameterStore<f32>> {
        self.params.clone()
    }

    pub fn version(&self) -> u64 {
        self.params.version()
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn frames(&self) -> u64 {
        self.frames
    }

    pub fn updates(&self) -> u64 {
        self.updates
    }

    pub fn buffered(&self) -> usize {
        self.buffer.len()
    }

    pub fn push(&mut self, seq: Sequence) {
        self.buffer.push_back(seq);
    }

    pub fn ready(&self) -> bool {
        self.buffer.len() >= self.batch_size
    }

    /// Runs one update on the oldest `batch_size` sequences.
    pub fn update(&mut self) -> Result<MetricsRow> {
        if !self.ready() {
            return Err(Error::Usage(format!("{} has {} of {} sequences", self.id, self.buffer.len(), self.batch_size)));
        }
        let batch: Vec<Sequence> = self.buffer.drain(..self.batch_size).collect();
        self.update_on(&batch)
    }

    /// Runs one update on an explicit batch.
    pub fn update_on(&mut self, batch: &[Sequence]) -> Result<MetricsRow> {
        let (grads, breakdown) = compute_gradients(&self.net, &self.params, batch, &self.loss)?;
        let mut params = (*self.params).clone();
        let info = self.opt.apply(&mut params, &grads)?;
        self.params = Arc::new(params);
        self.updates += 1;
        self.steps += (self.unroll * batch.len()) as u64;
        self.frames += batch.iter().map(|s| s.len() as u64).sum::<u64>();
        let row = MetricsRow {
            agent: self.id.clone(),
            variant: self.net.variant().id().to_string(),
            step: self.steps,
            version: self.params.version(),
            grad_norm: info.grad_norm,
            skipped: info.skipped,
            loss: breakdown,
        };
        if let Some(m) = &mut self.metrics {
            serde_json::to_writer(&mut *m, &row)?;
            m.write_all(b"\n")?;
        }
        log::debug!(
            "{} update {} step {}: loss {:.4} policy {:.4} value {:.4} kl {:.4} grad norm {:.2}",
            self.id,
            self.updates,
            self.steps,
            row.loss.total,
            row.loss.policy_loss,
            row.loss.value_loss,
            row.loss.kl_qp,
            row.grad_norm
        );
        Ok(row)
    }

    /// Parameters, optimizer moments and counters in one checkpoint.
    pub fn checkpoint(&self) -> Checkpoint {
        let mut ckpt = Checkpoint::from_store(self.arch_hash, &self.params);
        ckpt.optimizer_steps = self.opt.steps();
        ckpt.arrays.extend(self.opt.export());
        ckpt
    }

    /// Saves `step_{steps}.ckpt` into the attached directory.
    pub fn save(&mut self) -> Result<PathBuf> {
        let dir = self.dir.clone().ok_or_else(|| Error::Usage(format!("{} has no output directory", self.id)))?;
        if let Some(m) = &mut self.metrics {
            m.flush()?;
        }
        let path = checkpoint_path(&dir, self.steps);
        self.checkpoint().save(&path)?;
        Ok(path)
    }

    /// Restores parameters, moments and counters from a checkpoint written
    /// by [`Learner::checkpoint`].
    pub fn restore(&mut self, ckpt: &Checkpoint) -> Result<()> {
        if ckpt.arch_hash != self.arch_hash {
            return Err(Error::Format(format!("{}: checkpoint architecture does not match", self.id)));
        }
        let mut params = ParameterStore::new();
        for (name, t) in &ckpt.arrays {
            if !name.starts_with("opt.") {
                params.insert(name, t.clone())?;
            }
        }
        params.set_version(ckpt.version);
        self.net.check_params(&params)?;
        self.params = Arc::new(params);
        self.opt = Adam::restore(self.opt.config().clone(), ckpt);
        self.updates = ckpt.optimizer_steps;
        self.steps = self.updates * (self.unroll * self.batch_size) as u64;
        self.buffer.clear();
        Ok(())
    }

    pub fn flush(&mut self) -> Result<()> {
        if let Some(m) = &mut self.metrics {
            m.flush()?;
        }
        Ok(())
    }
}
