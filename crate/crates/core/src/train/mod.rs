//! Autoregressive pretraining loop: AdamW with warmup and cosine decay,
//! gradient accumulation and clipping, checkpoints that resume exactly, and
//! a carbon estimate for the run.
//!
//! Batch composition is a pure function of `(seed, step)`: rows are visited
//! in a per-epoch permutation drawn from a ChaCha stream keyed by the epoch.
//! Resuming therefore only needs the step counter, not RNG state.

mod carbon;
mod checkpoint;
mod config;
mod optim;

use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::corpus::ShardSet;
use crate::error::{Error, Result};
use crate::model::{loss_and_grads, ModelConfig, ParamStore, TokenBatch};

pub use carbon::{estimate_carbon, CarbonQuery};
pub use checkpoint::{Checkpoint, FORMAT_VERSION};
pub use config::TrainConfig;
pub use optim::{adamw_step, adamw_update, clip_grad_norm, lr_at, AdamMoments};

/// Hook for combining gradients across data-parallel workers before the
/// optimizer step. A single process needs nothing, so the default is the
/// identity; a sharded backend would sum and rescale here.
pub trait GradientAllReduce: Send + Sync {
    fn all_reduce(&self, grads: &mut ParamStore<f32>) -> Result<()>;
}

#[derive(Debug, Default, Clone, Copy)]
pub struct SingleProcess;

impl GradientAllReduce for SingleProcess {
    fn all_reduce(&self, _grads: &mut ParamStore<f32>) -> Result<()> {
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRow {
    pub step: u64,
    pub loss: f32,
    pub lr: f64,
}

impl TraceRow {
    pub const CSV_HEADER: &'static str = "step,loss,lr";

    pub fn to_csv(&self) -> String {
        format!("{},{},{}", self.step, self.loss, self.lr)
    }
}

/// Parameters, optimizer moments and the number of completed updates.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainState {
    pub params: ParamStore<f32>,
    pub moments: AdamMoments<f32>,
    pub step: u64,
}

impl TrainState {
    pub fn fresh(model: &ModelConfig, seed: u64) -> Self {
        let params = ParamStore::init(model, seed);
        let moments = AdamMoments::zeros_like(&params);
        TrainState {
            params,
            moments,
            step: 0,
        }
    }

    /// Restores a state. A checkpoint saved without moments restarts them
    /// from zero, which changes the trajectory.
    pub fn from_checkpoint(ck: Checkpoint) -> Self {
        let moments = ck.moments.unwrap_or_else(|| {
            log::warn!(
                "checkpoint at step {} has no optimizer moments; resetting them",
                ck.step
            );
            AdamMoments::zeros_like(&ck.params)
        });
        TrainState {
            params: ck.params,
            moments,
            step: ck.step,
        }
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        Checkpoint {
            step: self.step,
            params: self.params.clone(),
            moments: Some(self.moments.clone()),
        }
    }
}

pub struct Trainer<'a> {
    model: ModelConfig,
    cfg: TrainConfig,
    data: &'a ShardSet,
    reducer: Box<dyn GradientAllReduce>,
    epoch_order: Option<(u64, Vec<usize>)>,
}

impl<'a> Trainer<'a> {
    pub fn new(model: ModelConfig, cfg: TrainConfig, data: &'a ShardSet) -> Result<Self> {
        model.validate()?;
        cfg.validate()?;
        if data.rows.is_empty() {
            return Err(Error::TrainingDataEmpty);
        }
        if data.seq_len > model.max_seq_len {
            return Err(Error::ContextTooLong {
                needed: data.seq_len,
                max: model.max_seq_len,
            });
        }
        let vocab = model.vocab_size;
        if let Some(&id) = data
            .rows
            .iter()
            .flat_map(|(ids, _)| ids)
            .find(|&&id| id as usize >= vocab)
        {
            return Err(Error::VocabMismatch { id, vocab_size: vocab });
        }
        Ok(Trainer {
            model,
            cfg,
            data,
            reducer: Box::new(SingleProcess),
            epoch_order: None,
        })
    }

    pub fn with_reducer(mut self, reducer: Box<dyn GradientAllReduce>) -> Self {
        self.reducer = reducer;
        self
    }

    pub fn config(&self) -> &TrainConfig {
        &self.cfg
    }

    pub fn fresh_state(&self) -> TrainState {
        TrainState::fresh(&self.model, self.cfg.seed)
    }

    fn check_state(&self, state: &TrainState) -> Result<()> {
        if state.params.config != self.model {
            return Err(Error::ConfigInvalid(
                "checkpoint model config differs from the requested model config".into(),
            ));
        }
        Ok(())
    }

    /// Row index at global position `pos` of the visiting order.
    fn row_at(&mut self, pos: u64) -> usize {
        let n = self.data.rows.len() as u64;
        let epoch = pos / n;
        if self.epoch_order.as_ref().map(|(e, _)| *e) != Some(epoch) {
            let mut order: Vec<usize> = (0..n as usize).collect();
            let mut rng = ChaCha8Rng::seed_from_u64(self.cfg.seed);
            rng.set_stream(epoch);
            order.shuffle(&mut rng);
            self.epoch_order = Some((epoch, order));
        }
        self.epoch_order.as_ref().unwrap().1[(pos % n) as usize]
    }

    /// Micro-batches for the update after `completed` steps.
    pub fn batches_for_step(&mut self, completed: u64) -> Result<Vec<TokenBatch>> {
        let (bs, accum) = (self.cfg.batch_size, self.cfg.grad_accum_steps);
        let seq = self.data.seq_len;
        let mut out = Vec::with_capacity(accum);
        for j in 0..accum {
            let base = (completed * accum as u64 + j as u64) * bs as u64;
            let mut ids = Vec::with_capacity(bs * seq);
            let mut mask = Vec::with_capacity(bs * seq);
            for r in 0..bs {
                let row = self.row_at(base + r as u64);
                let (i, m) = &self.data.rows[row];
                ids.extend_from_slice(i);
                mask.extend_from_slice(m);
            }
            out.push(TokenBatch::new(bs, seq, ids)?.with_mask(mask)?);
        }
        Ok(out)
    }

    /// One optimizer update. Micro-batches run concurrently; their gradients
    /// are summed in micro-batch order.
    pub fn step(&mut self, state: &mut TrainState) -> Result<TraceRow> {
        self.check_state(state)?;
        let batches = self.batches_for_step(state.step)?;
        let results: Vec<(f32, ParamStore<f32>)> = batches
            .par_iter()
            .map(|b| loss_and_grads(&state.params, b))
            .collect::<Result<_>>()?;
        let accum = results.len() as f32;
        let mut iter = results.into_iter();
        let (mut loss, mut grads) = iter.next().expect("grad_accum_steps >= 1");
        for (l, g) in iter {
            loss += l;
            grads.add_assign(&g);
        }
        loss /= accum;
        grads.scale(1.0 / accum);
        self.reducer.all_reduce(&mut grads)?;
        clip_grad_norm(&mut grads, self.cfg.grad_clip);
        let t = state.step + 1;
        adamw_step(&mut state.params, &grads, &mut state.moments, t, &self.cfg)?;
        state.step = t;
        Ok(TraceRow {
            step: t,
            loss,
            lr: lr_at(t, &self.cfg),
        })
    }

    /// Trains until `state.step == total_steps`. With an output directory,
    /// writes `trace.csv` and `step-%08d.ckpt` files; a resumed run keeps
    /// the trace rows up to the resume step and appends after them.
    pub fn run(&mut self, state: &mut TrainState, out_dir: Option<&Path>) -> Result<Vec<TraceRow>> {
        self.check_state(state)?;
        let mut trace_text = String::new();
        if let Some(dir) = out_dir {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
            trace_text = retained_trace(&dir.join("trace.csv"), state.step)?;
        }
        let mut rows = Vec::new();
        while state.step < self.cfg.total_steps {
            let row = self.step(state)?;
            if row.step == 1 || row.step % 10 == 0 || row.step == self.cfg.total_steps {
                log::info!("step {} loss {:.4} lr {:.3e}", row.step, row.loss, row.lr);
            }
            rows.push(row);
            if let Some(dir) = out_dir {
                writeln!(trace_text, "{}", row.to_csv()).unwrap();
                let every = self.cfg.checkpoint_every;
                let due = (every > 0 && row.step % every == 0) || row.step == self.cfg.total_steps;
                if due {
                    let trace_path = dir.join("trace.csv");
                    std::fs::write(&trace_path, &trace_text).map_err(|e| Error::io(&trace_path, e))?;
                    state.to_checkpoint().save(&dir.join(Checkpoint::file_name(row.step)))?;
                }
            }
        }
        Ok(rows)
    }
}

/// Existing trace lines with `step <= keep_through`, header included.
fn retained_trace(path: &Path, keep_through: u64) -> Result<String> {
    let mut out = format!("{}\n", TraceRow::CSV_HEADER);
    if keep_through == 0 || !path.exists() {
        return Ok(out);
    }
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    for line in text.lines().skip(1) {
        let step: u64 = line
            .split(',')
            .next()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::format("trace.csv", format!("bad line {line:?}")))?;
        if step <= keep_through {
            out.push_str(line);
            out.push('\n');
        }
    }
    Ok(out)
}

/// Most recent `step-*.ckpt` in `dir`, if any.
pub fn latest_checkpoint(dir: &Path) -> Result<Option<std::path::PathBuf>> {
    if !dir.is_dir() {
        return Ok(None);
    }
    let mut found: Vec<_> = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.file_name()
                .and_then(|n| n.to_str())
                .is_some_and(|n| n.starts_with("step-") && n.ends_with(".ckpt"))
        })
        .collect();
    found.sort();
    Ok(found.pop())
}
