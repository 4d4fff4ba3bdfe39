//! Decoder-only transformer: pre-norm residual blocks of RMSNorm, rotary
//! causal attention and SwiGLU, with no bias terms.

mod config;
pub mod layers;
mod params;

use rayon::prelude::*;

pub use config::ModelConfig;
pub use params::{FfnParams, LayerParams, ParamStore, INIT_STD};

use crate::attention::{attention_backward, AttentionInputs, AttentionKernel};
use crate::error::{Error, Result};
use crate::tensor::{matmul, matmul_at_acc, matmul_bt, Real};
use layers::{rmsnorm_backward, rmsnorm_rows, swiglu_backward, swiglu_rows, RopeTable, SwigluCache};

/// A `[batch × seq]` block of token ids. Targets are the inputs shifted left
/// by one; the last position of each row has no target.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenBatch {
    pub batch: usize,
    pub seq: usize,
    pub ids: Vec<u32>,
    /// `false` marks padding; a position only gets a target when both it and
    /// its successor are real tokens.
    pub mask: Option<Vec<bool>>,
}

impl TokenBatch {
    pub fn new(batch: usize, seq: usize, ids: Vec<u32>) -> Result<Self> {
        if ids.len() != batch * seq {
            return Err(Error::ConfigInvalid(format!(
                "batch of {batch}×{seq} needs {} ids, got {}",
                batch * seq,
                ids.len()
            )));
        }
        Ok(TokenBatch {
            batch,
            seq,
            ids,
            mask: None,
        })
    }

    pub fn with_mask(mut self, mask: Vec<bool>) -> Result<Self> {
        if mask.len() != self.ids.len() {
            return Err(Error::ConfigInvalid("loss mask length does not match batch".into()));
        }
        self.mask = Some(mask);
        Ok(self)
    }

    pub fn row(&self, b: usize) -> &[u32] {
        &self.ids[b * self.seq..(b + 1) * self.seq]
    }

    fn is_real(&self, idx: usize) -> bool {
        self.mask.as_ref().is_none_or(|m| m[idx])
    }

    /// Target of position `t` in row `b`, if it has one.
    pub fn target(&self, b: usize, t: usize) -> Option<u32> {
        let idx = b * self.seq + t;
        (t + 1 < self.seq && self.is_real(idx) && self.is_real(idx + 1)).then(|| self.ids[idx + 1])
    }

    pub fn num_targets(&self) -> usize {
        (0..self.batch)
            .map(|b| (0..self.seq).filter(|&t| self.target(b, t).is_some()).count())
            .sum()
    }

    pub fn validate(&self, config: &ModelConfig) -> Result<()> {
        if self.seq > config.max_seq_len {
            return Err(Error::ContextTooLong {
                needed: self.seq,
                max: config.max_seq_len,
            });
        }
        if let Some(&id) = self.ids.iter().find(|&&id| id as usize >= config.vocab_size) {
            return Err(Error::IdOutOfRange {
                id,
                vocab_size: config.vocab_size,
            });
        }
        Ok(())
    }
}

struct LayerCache<T> {
    x_in: Vec<T>,
    attn_in: Vec<T>,
    attn_inv_rms: Vec<T>,
    attn: AttentionInputs<T>,
    attn_concat: Vec<T>,
    x_mid: Vec<T>,
    ffn_in: Vec<T>,
    ffn_inv_rms: Vec<T>,
    ffn: SwigluCache<T>,
}

struct SeqCache<T> {
    layers: Vec<LayerCache<T>>,
    x_final: Vec<T>,
    final_normed: Vec<T>,
    final_inv_rms: Vec<T>,
}

/// `[S×H]` → `[heads × S × head_dim]`.
fn split_heads<T: Real>(x: &[T], seq: usize, heads: usize, hd: usize) -> Vec<T> {
    let mut out = vec![T::zero(); x.len()];
    for t in 0..seq {
        for h in 0..heads {
            out[(h * seq + t) * hd..(h * seq + t + 1) * hd]
                .copy_from_slice(&x[t * heads * hd + h * hd..t * heads * hd + (h + 1) * hd]);
        }
    }
    out
}

fn merge_heads<T: Real>(x: &[T], seq: usize, heads: usize, hd: usize) -> Vec<T> {
    let mut out = vec![T::zero(); x.len()];
    for t in 0..seq {
        for h in 0..heads {
            out[t * heads * hd + h * hd..t * heads * hd + (h + 1) * hd]
                .copy_from_slice(&x[(h * seq + t) * hd..(h * seq + t + 1) * hd]);
        }
    }
    out
}

fn add_into<T: Real>(acc: &mut [T], x: &[T]) {
    for (a, &b) in acc.iter_mut().zip(x) {
        *a += b;
    }
}

/// Forward pass over one sequence; returns `[S×V]` logits and, on request,
/// everything the backward pass needs.
fn forward_seq<T: Real>(
    params: &ParamStore<T>,
    ids: &[u32],
    kernel: AttentionKernel,
    keep: bool,
) -> (Vec<T>, Option<SeqCache<T>>) {
    let cfg = &params.config;
    let (seq, h, inter, v) = (ids.len(), cfg.hidden_size, cfg.intermediate_size, cfg.vocab_size);
    let (heads, hd) = (cfg.num_attention_heads, cfg.head_dim());
    let eps = T::from_f64_lossy(cfg.rms_norm_eps);
    let rope = RopeTable::<T>::new(hd, seq, cfg.rope_theta);
    let positions: Vec<usize> = (0..heads).flat_map(|_| 0..seq).collect();

    let emb = params.tok_embeddings.data();
    let mut x: Vec<T> = ids
        .iter()
        .flat_map(|&id| emb[id as usize * h..(id as usize + 1) * h].iter().copied())
        .collect();

    let mut caches = Vec::new();
    for (l, layer) in params.layers.iter().enumerate() {
        let (attn_in, attn_inv_rms) = rmsnorm_rows(&x, layer.attn_norm.data(), eps);
        let q = matmul(&attn_in, layer.wq.data(), seq, h, h);
        let k = matmul(&attn_in, layer.wk.data(), seq, h, h);
        let vv = matmul(&attn_in, layer.wv.data(), seq, h, h);
        let mut q = split_heads(&q, seq, heads, hd);
        let mut k = split_heads(&k, seq, heads, hd);
        rope.apply(&mut q, &positions);
        rope.apply(&mut k, &positions);
        let attn = AttentionInputs {
            n_heads: heads,
            seq,
            head_dim: hd,
            q,
            k,
            v: split_heads(&vv, seq, heads, hd),
        };
        let attn_concat = merge_heads(&attn.run(kernel), seq, heads, hd);
        let mut x_mid = matmul(&attn_concat, layer.wo.data(), seq, h, h);
        add_into(&mut x_mid, &x);

        let ffn = params.ffn_for(l);
        let (ffn_in, ffn_inv_rms) = rmsnorm_rows(&x_mid, layer.ffn_norm.data(), eps);
        let (ffn_out, ffn_cache) =
            swiglu_rows(&ffn_in, ffn.w_gate.data(), ffn.w_up.data(), ffn.w_down.data(), h, inter);
        let mut x_out = ffn_out;
        add_into(&mut x_out, &x_mid);

        if keep {
            caches.push(LayerCache {
                x_in: std::mem::take(&mut x),
                attn_in,
                attn_inv_rms,
                attn,
                attn_concat,
                x_mid,
                ffn_in,
                ffn_inv_rms,
                ffn: ffn_cache,
            });
        }
        x = x_out;
    }

    let (final_normed, final_inv_rms) = rmsnorm_rows(&x, params.final_norm.data(), eps);
    let logits = match params.head() {
        Some(head) => matmul(&final_normed, head.data(), seq, h, v),
        None => matmul_bt(&final_normed, emb, seq, h, v),
    };
    let cache = keep.then_some(SeqCache {
        layers: caches,
        x_final: x,
        final_normed,
        final_inv_rms,
    });
    (logits, cache)
}

fn backward_seq<T: Real>(
    params: &ParamStore<T>,
    ids: &[u32],
    cache: &SeqCache<T>,
    d_logits: &[T],
    grads: &mut ParamStore<T>,
) {
    let cfg = &params.config;
    let (seq, h, inter, v) = (ids.len(), cfg.hidden_size, cfg.intermediate_size, cfg.vocab_size);
    let (heads, hd) = (cfg.num_attention_heads, cfg.head_dim());
    let rope = RopeTable::<T>::new(hd, seq, cfg.rope_theta);
    let positions: Vec<usize> = (0..heads).flat_map(|_| 0..seq).collect();

    let d_normed = match params.head() {
        Some(head) => {
            let dh = grads.lm_head.as_mut().expect("grad store mirrors params");
            matmul_at_acc(&cache.final_normed, d_logits, seq, h, v, dh.data_mut());
            matmul_bt(d_logits, head.data(), seq, v, h)
        }
        None => {
            matmul_at_acc(
                d_logits,
                &cache.final_normed,
                seq,
                v,
                h,
                grads.tok_embeddings.data_mut(),
            );
            matmul(d_logits, params.tok_embeddings.data(), seq, v, h)
        }
    };
    let mut dx = rmsnorm_backward(
        &cache.x_final,
        params.final_norm.data(),
        &cache.final_inv_rms,
        &d_normed,
        grads.final_norm.data_mut(),
    );

    for (l, lc) in cache.layers.iter().enumerate().rev() {
        let layer = &params.layers[l];
        let ffn = params.ffn_for(l);

        // x_out = x_mid + swiglu(norm(x_mid))
        let g = grads.ffn_for_mut(l);
        let d_ffn_in = swiglu_backward(
            &lc.ffn_in,
            &lc.ffn,
            ffn.w_gate.data(),
            ffn.w_up.data(),
            ffn.w_down.data(),
            &dx,
            h,
            inter,
            (g.w_gate.data_mut(), g.w_up.data_mut(), g.w_down.data_mut()),
        );
        let gl = &mut grads.layers[l];
        let d_mid = rmsnorm_backward(
            &lc.x_mid,
            layer.ffn_norm.data(),
            &lc.ffn_inv_rms,
            &d_ffn_in,
            gl.ffn_norm.data_mut(),
        );
        add_into(&mut dx, &d_mid);

        // x_mid = x_in + attention(norm(x_in)) · Wo
        matmul_at_acc(&lc.attn_concat, &dx, seq, h, h, gl.wo.data_mut());
        let d_concat = matmul_bt(&dx, layer.wo.data(), seq, h, h);
        let ag = attention_backward(&lc.attn, &split_heads(&d_concat, seq, heads, hd));
        let (mut dq, mut dk) = (ag.dq, ag.dk);
        rope.apply_inverse(&mut dq, &positions);
        rope.apply_inverse(&mut dk, &positions);
        let dq = merge_heads(&dq, seq, heads, hd);
        let dk = merge_heads(&dk, seq, heads, hd);
        let dv = merge_heads(&ag.dv, seq, heads, hd);
        matmul_at_acc(&lc.attn_in, &dq, seq, h, h, gl.wq.data_mut());
        matmul_at_acc(&lc.attn_in, &dk, seq, h, h, gl.wk.data_mut());
        matmul_at_acc(&lc.attn_in, &dv, seq, h, h, gl.wv.data_mut());
        let mut d_attn_in = matmul_bt(&dq, layer.wq.data(), seq, h, h);
        add_into(&mut d_attn_in, &matmul_bt(&dk, layer.wk.data(), seq, h, h));
        add_into(&mut d_attn_in, &matmul_bt(&dv, layer.wv.data(), seq, h, h));
        let d_in = rmsnorm_backward(
            &lc.x_in,
            layer.attn_norm.data(),
            &lc.attn_inv_rms,
            &d_attn_in,
            gl.attn_norm.data_mut(),
        );
        add_into(&mut dx, &d_in);
    }

    let d_emb = grads.tok_embeddings.data_mut();
    for (t, &id) in ids.iter().enumerate() {
        add_into(
            &mut d_emb[id as usize * h..(id as usize + 1) * h],
            &dx[t * h..(t + 1) * h],
        );
    }
}

/// Logits `[batch × seq × vocab]` using the default streaming attention kernel.
pub fn forward<T: Real>(params: &ParamStore<T>, batch: &TokenBatch) -> Result<Vec<T>> {
    forward_with(params, batch, AttentionKernel::default())
}

pub fn forward_with<T: Real>(params: &ParamStore<T>, batch: &TokenBatch, kernel: AttentionKernel) -> Result<Vec<T>> {
    batch.validate(&params.config)?;
    let rows: Vec<Vec<T>> = (0..batch.batch)
        .into_par_iter()
        .map(|b| forward_seq(params, batch.row(b), kernel, false).0)
        .collect();
    Ok(rows.concat())
}

/// Log-softmax of each `width`-sized row.
pub fn log_softmax_rows<T: Real>(logits: &[T], width: usize) -> Vec<T> {
    let mut out = Vec::with_capacity(logits.len());
    for row in logits.chunks(width) {
        let max = row.iter().copied().fold(T::neg_infinity(), T::max);
        let lse = max + row.iter().map(|&x| (x - max).exp()).sum::<T>().ln();
        out.extend(row.iter().map(|&x| x - lse));
    }
    out
}

/// Mean next-token cross-entropy over every target in the batch, with
/// gradients for every parameter.
pub fn loss_and_grads<T: Real>(params: &ParamStore<T>, batch: &TokenBatch) -> Result<(T, ParamStore<T>)> {
    batch.validate(&params.config)?;
    let n_targets = batch.num_targets();
    if n_targets == 0 {
        return Err(Error::ConfigInvalid("batch has no prediction targets".into()));
    }
    let v = params.config.vocab_size;
    let inv_n = T::one() / T::from_usize(n_targets).unwrap();

    let per_row: Vec<(T, ParamStore<T>)> = (0..batch.batch)
        .into_par_iter()
        .map(|b| {
            let ids = batch.row(b);
            let mut grads = ParamStore::zeros(&params.config);
            let (logits, cache) = forward_seq(params, ids, AttentionKernel::Naive, true);
            let mut d_logits = vec![T::zero(); logits.len()];
            let mut loss = T::zero();
            for t in 0..batch.seq {
                let Some(target) = batch.target(b, t) else {
                    continue;
                };
                let row = &logits[t * v..(t + 1) * v];
                let max = row.iter().copied().fold(T::neg_infinity(), T::max);
                let sum: T = row.iter().map(|&x| (x - max).exp()).sum();
                loss += max + sum.ln() - row[target as usize];
                let d = &mut d_logits[t * v..(t + 1) * v];
                for (g, &x) in d.iter_mut().zip(row) {
                    *g = (x - max).exp() / sum * inv_n;
                }
                d[target as usize] -= inv_n;
            }
            backward_seq(params, ids, cache.as_ref().expect("cache kept"), &d_logits, &mut grads);
            (loss, grads)
        })
        .collect();

    // fixed row order keeps the reduction deterministic
    let mut iter = per_row.into_iter();
    let (mut loss, mut grads) = iter.next().expect("batch has at least one row");
    for (l, g) in iter {
        loss += l;
        grads.add_assign(&g);
    }
    let loss = loss * inv_n;
    if !loss.is_finite() {
        return Err(Error::NumericalDivergence(format!("loss is {loss:?}")));
    }
    Ok((loss, grads))
}

/// Mean cross-entropy without gradients, computed with the same kernel as
/// [`loss_and_grads`].
pub fn loss<T: Real>(params: &ParamStore<T>, batch: &TokenBatch) -> Result<T> {
    batch.validate(&params.config)?;
    let n_targets = batch.num_targets();
    if n_targets == 0 {
        return Err(Error::ConfigInvalid("batch has no prediction targets".into()));
    }
    let v = params.config.vocab_size;
    let mut total = T::zero();
    for b in 0..batch.batch {
        let (logits, _) = forward_seq(params, batch.row(b), AttentionKernel::Naive, false);
        let logp = log_softmax_rows(&logits, v);
        for t in 0..batch.seq {
            if let Some(target) = batch.target(b, t) {
                total -= logp[t * v + target as usize];
            }
        }
    }
    Ok(total / T::from_usize(n_targets).unwrap())
}
