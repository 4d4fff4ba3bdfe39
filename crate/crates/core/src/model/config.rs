use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::kv;

/// Transformer hyperparameters. Defaults are the 0.4B reference model.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub hidden_size: usize,
    pub intermediate_size: usize,
    pub num_attention_heads: usize,
    pub num_hidden_layers: usize,
    pub rms_norm_eps: f64,
    pub max_seq_len: usize,
    pub vocab_size: usize,
    /// One SwiGLU block shared by every layer.
    pub share_ffn: bool,
    /// Reuse the token embedding as the output projection.
    pub tie_embeddings: bool,
    pub rope_theta: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            hidden_size: 2048,
            intermediate_size: 5632,
            num_attention_heads: 32,
            num_hidden_layers: 8,
            rms_norm_eps: 1e-5,
            max_seq_len: 2048,
            vocab_size: 61788,
            share_ffn: true,
            tie_embeddings: false,
            rope_theta: 10000.0,
        }
    }
}

impl ModelConfig {
    /// Small configuration used throughout the tests.
    pub fn toy(vocab_size: usize) -> Self {
        ModelConfig {
            hidden_size: 4,
            intermediate_size: 8,
            num_attention_heads: 2,
            num_hidden_layers: 1,
            rms_norm_eps: 1e-5,
            max_seq_len: 64,
            vocab_size,
            share_ffn: true,
            tie_embeddings: false,
            rope_theta: 10000.0,
        }
    }

    pub fn head_dim(&self) -> usize {
        self.hidden_size / self.num_attention_heads
    }

    /// Number of distinct SwiGLU blocks stored.
    pub fn ffn_blocks(&self) -> usize {
        if self.share_ffn {
            1
        } else {
            self.num_hidden_layers
        }
    }

    pub fn validate(&self) -> Result<()> {
        let sizes = [
            ("hidden_size", self.hidden_size),
            ("intermediate_size", self.intermediate_size),
            ("num_attention_heads", self.num_attention_heads),
            ("num_hidden_layers", self.num_hidden_layers),
            ("max_seq_len", self.max_seq_len),
            ("vocab_size", self.vocab_size),
        ];
        if let Some((name, _)) = sizes.iter().find(|(_, v)| *v == 0) {
            return Err(Error::ConfigInvalid(format!("{name} must be positive")));
        }
        if !self.hidden_size.is_multiple_of(self.num_attention_heads) {
            return Err(Error::ConfigInvalid(format!(
                "hidden_size {} is not divisible by num_attention_heads {}",
                self.hidden_size, self.num_attention_heads
            )));
        }
        if !self.head_dim().is_multiple_of(2) {
            return Err(Error::ConfigInvalid(format!(
                "head_dim {} must be even for rotary embeddings",
                self.head_dim()
            )));
        }
        if !(self.rms_norm_eps >= 0.0 && self.rms_norm_eps.is_finite()) {
            return Err(Error::ConfigInvalid(
                "rms_norm_eps must be finite and non-negative".into(),
            ));
        }
        if !(self.rope_theta > 0.0 && self.rope_theta.is_finite()) {
            return Err(Error::ConfigInvalid("rope_theta must be positive".into()));
        }
        Ok(())
    }

    /// Closed-form parameter count:
    /// `V·H + L·4H² + 3·H·I·blocks + (2L+1)·H + H·V` (head term dropped when tied).
    pub fn count_params(&self) -> u64 {
        let (v, h, i, l) = (
            self.vocab_size as u64,
            self.hidden_size as u64,
            self.intermediate_size as u64,
            self.num_hidden_layers as u64,
        );
        let embed = v * h;
        let attention = l * 4 * h * h;
        let ffn = 3 * h * i * self.ffn_blocks() as u64;
        let norms = (2 * l + 1) * h;
        let head = if self.tie_embeddings { 0 } else { h * v };
        embed + attention + ffn + norms + head
    }

    pub fn to_kv(&self) -> String {
        let mut s = String::new();
        writeln!(s, "hidden_size={}", self.hidden_size).unwrap();
        writeln!(s, "intermediate_size={}", self.intermediate_size).unwrap();
        writeln!(s, "num_attention_heads={}", self.num_attention_heads).unwrap();
        writeln!(s, "num_hidden_layers={}", self.num_hidden_layers).unwrap();
        writeln!(s, "rms_norm_eps={:e}", self.rms_norm_eps).unwrap();
        writeln!(s, "max_seq_len={}", self.max_seq_len).unwrap();
        writeln!(s, "vocab_size={}", self.vocab_size).unwrap();
        writeln!(s, "share_ffn={}", self.share_ffn).unwrap();
        writeln!(s, "tie_embeddings={}", self.tie_embeddings).unwrap();
        writeln!(s, "rope_theta={}", self.rope_theta).unwrap();
        s
    }

    /// Parses `key=value` lines; missing keys keep their defaults.
    pub fn from_kv(text: &str) -> Result<Self> {
        let mut cfg = ModelConfig::default();
        for (key, value) in kv::parse(text)? {
            match key.as_str() {
                "hidden_size" => cfg.hidden_size = kv::value(&key, &value)?,
                "intermediate_size" => cfg.intermediate_size = kv::value(&key, &value)?,
                "num_attention_heads" => cfg.num_attention_heads = kv::value(&key, &value)?,
                "num_hidden_layers" => cfg.num_hidden_layers = kv::value(&key, &value)?,
                "rms_norm_eps" => cfg.rms_norm_eps = kv::value(&key, &value)?,
                "max_seq_len" => cfg.max_seq_len = kv::value(&key, &value)?,
                "vocab_size" => cfg.vocab_size = kv::value(&key, &value)?,
                "share_ffn" => cfg.share_ffn = kv::value(&key, &value)?,
                "tie_embeddings" => cfg.tie_embeddings = kv::value(&key, &value)?,
                "rope_theta" => cfg.rope_theta = kv::value(&key, &value)?,
                _ => return Err(Error::ConfigInvalid(format!("unknown model config key {key:?}"))),
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_kv(&text)
    }
}
