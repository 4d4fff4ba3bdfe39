use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::kv;

/// Optimizer, schedule and loop settings. Every constant the trainer uses
/// lives here.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub peak_lr: f64,
    pub warmup_steps: u64,
    pub total_steps: u64,
    pub min_lr_ratio: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    /// Rows per micro-batch.
    pub batch_size: usize,
    pub grad_accum_steps: usize,
    /// Global gradient-norm ceiling; 0 disables clipping.
    pub grad_clip: f64,
    pub seed: u64,
    /// Checkpoint every N steps; 0 writes only the final checkpoint.
    pub checkpoint_every: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            peak_lr: 3e-4,
            warmup_steps: 100,
            total_steps: 1000,
            min_lr_ratio: 0.1,
            weight_decay: 0.1,
            beta1: 0.9,
            beta2: 0.95,
            adam_eps: 1e-8,
            batch_size: 8,
            grad_accum_steps: 1,
            grad_clip: 1.0,
            seed: 0,
            checkpoint_every: 100,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::ConfigInvalid(msg));
        if self.total_steps == 0 {
            return fail("total_steps must be positive".into());
        }
        if self.warmup_steps > self.total_steps {
            return fail(format!(
                "warmup_steps ({}) exceeds total_steps ({})",
                self.warmup_steps, self.total_steps
            ));
        }
        if !(self.peak_lr > 0.0 && self.peak_lr.is_finite()) {
            return fail(format!("peak_lr must be positive, got {}", self.peak_lr));
        }
        if !(self.min_lr_ratio > 0.0 && self.min_lr_ratio <= 1.0) {
            return fail(format!("min_lr_ratio must be in (0, 1], got {}", self.min_lr_ratio));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return fail(format!("weight_decay must be non-negative, got {}", self.weight_decay));
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(b > 0.0 && b < 1.0) {
                return fail(format!("{name} must be in (0, 1), got {b}"));
            }
        }
        if !(self.adam_eps > 0.0 && self.adam_eps.is_finite()) {
            return fail(format!("adam_eps must be positive, got {}", self.adam_eps));
        }
        if !(self.grad_clip >= 0.0 && self.grad_clip.is_finite()) {
            return fail(format!("grad_clip must be non-negative, got {}", self.grad_clip));
        }
        if self.batch_size == 0 || self.grad_accum_steps == 0 {
            return fail("batch_size and grad_accum_steps must be at least 1".into());
        }
        Ok(())
    }

    pub fn to_kv(&self) -> String {
        let mut s = String::new();
        writeln!(s, "peak_lr={:e}", self.peak_lr).unwrap();
        writeln!(s, "warmup_steps={}", self.warmup_steps).unwrap();
        writeln!(s, "total_steps={}", self.total_steps).unwrap();
        writeln!(s, "min_lr_ratio={}", self.min_lr_ratio).unwrap();
        writeln!(s, "weight_decay={}", self.weight_decay).unwrap();
        writeln!(s, "beta1={}", self.beta1).unwrap();
        writeln!(s, "beta2={}", self.beta2).unwrap();
        writeln!(s, "adam_eps={:e}", self.adam_eps).unwrap();
        writeln!(s, "batch_size={}", self.batch_size).unwrap();
        writeln!(s, "grad_accum_steps={}", self.grad_accum_steps).unwrap();
        writeln!(s, "grad_clip={}", self.grad_clip).unwrap();
        writeln!(s, "seed={}", self.seed).unwrap();
        writeln!(s, "checkpoint_every={}", self.checkpoint_every).unwrap();
        s
    }

    /// Parses `key=value` lines over the defaults.
    pub fn from_kv(text: &str) -> Result<Self> {
        let mut c = TrainConfig::default();
        for (key, value) in kv::parse(text)? {
            let v = value.as_str();
            match key.as_str() {
                "peak_lr" => c.peak_lr = kv::value(&key, v)?,
                "warmup_steps" => c.warmup_steps = kv::value(&key, v)?,
                "total_steps" => c.total_steps = kv::value(&key, v)?,
                "min_lr_ratio" => c.min_lr_ratio = kv::value(&key, v)?,
                "weight_decay" => c.weight_decay = kv::value(&key, v)?,
                "beta1" => c.beta1 = kv::value(&key, v)?,
                "beta2" => c.beta2 = kv::value(&key, v)?,
                "adam_eps" => c.adam_eps = kv::value(&key, v)?,
                "batch_size" => c.batch_size = kv::value(&key, v)?,
                "grad_accum_steps" => c.grad_accum_steps = kv::value(&key, v)?,
                "grad_clip" => c.grad_clip = kv::value(&key, v)?,
                "seed" => c.seed = kv::value(&key, v)?,
                "checkpoint_every" => c.checkpoint_every = kv::value(&key, v)?,
                _ => return Err(Error::ConfigInvalid(format!("unknown train config key {key:?}"))),
            }
        }
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_kv(&text)
    }
}
