//! Causal multi-head attention.
//!
//! Two forward implementations compute the same function: a reference that
//! materializes the full score matrix, and a tiled streaming kernel that keeps
//! a running row maximum and denominator (online softmax) so only one
//! `tile × tile` block of scores exists at a time.
//!
//! All tensors are laid out `[n_heads × seq × head_dim]`, row-major.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::tensor::{dot, Real};

pub const DEFAULT_TILE: usize = 64;

#[derive(Debug, Clone)]
pub struct AttentionInputs<T> {
    pub n_heads: usize,
    pub seq: usize,
    pub head_dim: usize,
    pub q: Vec<T>,
    pub k: Vec<T>,
    pub v: Vec<T>,
}

#[derive(Debug, Clone)]
pub struct AttentionGrads<T> {
    pub dq: Vec<T>,
    pub dk: Vec<T>,
    pub dv: Vec<T>,
}

/// Which forward implementation a caller wants.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AttentionKernel {
    Naive,
    Streaming { tile: usize },
}

impl Default for AttentionKernel {
    fn default() -> Self {
        AttentionKernel::Streaming { tile: DEFAULT_TILE }
    }
}

impl<T: Real> AttentionInputs<T> {
    pub fn new(n_heads: usize, seq: usize, head_dim: usize, q: Vec<T>, k: Vec<T>, v: Vec<T>) -> Result<Self> {
        let want = n_heads * seq * head_dim;
        if head_dim == 0 || [q.len(), k.len(), v.len()].iter().any(|&l| l != want) {
            return Err(Error::ConfigInvalid(format!(
                "attention inputs must all hold {n_heads}×{seq}×{head_dim} values"
            )));
        }
        Ok(AttentionInputs {
            n_heads,
            seq,
            head_dim,
            q,
            k,
            v,
        })
    }

    pub fn scale(&self) -> T {
        T::one() / T::from_usize(self.head_dim).unwrap().sqrt()
    }

    fn head_len(&self) -> usize {
        self.seq * self.head_dim
    }

    fn row<'a>(&self, buf: &'a [T], h: usize, t: usize) -> &'a [T] {
        let start = h * self.head_len() + t * self.head_dim;
        &buf[start..start + self.head_dim]
    }

    pub fn run(&self, kernel: AttentionKernel) -> Vec<T> {
        match kernel {
            AttentionKernel::Naive => naive_attention(self),
            AttentionKernel::Streaming { tile } => streaming_attention(self, tile),
        }
    }
}

/// Causal softmax weights, `[n_heads × seq × seq]`; entries above the
/// diagonal are zero.
pub fn attention_probs<T: Real>(inp: &AttentionInputs<T>) -> Vec<T> {
    let (seq, scale) = (inp.seq, inp.scale());
    let mut probs = vec![T::zero(); inp.n_heads * seq * seq];
    probs
        .par_chunks_mut((seq * seq).max(1))
        .enumerate()
        .for_each(|(h, head)| {
            for t in 0..seq {
                let row = &mut head[t * seq..t * seq + t + 1];
                let q = inp.row(&inp.q, h, t);
                for (s, p) in row.iter_mut().enumerate() {
                    *p = scale * dot(q, inp.row(&inp.k, h, s));
                }
                let max = row.iter().copied().fold(T::neg_infinity(), T::max);
                let mut sum = T::zero();
                for p in row.iter_mut() {
                    *p = (*p - max).exp();
                    sum += *p;
                }
                for p in row.iter_mut() {
                    *p /= sum;
                }
            }
        });
    probs
}

/// Reference attention: `out_t = Σ_{s≤t} softmax_s(scale·q_t·k_s) v_s`.
pub fn naive_attention<T: Real>(inp: &AttentionInputs<T>) -> Vec<T> {
    let probs = attention_probs(inp);
    let (seq, d) = (inp.seq, inp.head_dim);
    let mut out = vec![T::zero(); inp.n_heads * seq * d];
    out.par_chunks_mut(inp.head_len().max(1))
        .enumerate()
        .for_each(|(h, head_out)| {
            for t in 0..seq {
                let o = &mut head_out[t * d..(t + 1) * d];
                for s in 0..=t {
                    let p = probs[h * seq * seq + t * seq + s];
                    for (x, &v) in o.iter_mut().zip(inp.row(&inp.v, h, s)) {
                        *x += p * v;
                    }
                }
            }
        });
    out
}

/// Tiled online-softmax attention. `tile` is clamped to at least 1.
pub fn streaming_attention<T: Real>(inp: &AttentionInputs<T>, tile: usize) -> Vec<T> {
    let tile = tile.max(1);
    let (seq, d, scale) = (inp.seq, inp.head_dim, inp.scale());
    let mut out = vec![T::zero(); inp.n_heads * seq * d];
    out.par_chunks_mut(inp.head_len().max(1))
        .enumerate()
        .for_each(|(h, head_out)| {
            let mut scores = vec![T::zero(); tile * tile];
            let mut acc = vec![T::zero(); tile * d];
            let mut run_max = vec![T::neg_infinity(); tile];
            let mut run_sum = vec![T::zero(); tile];
            for q_start in (0..seq).step_by(tile) {
                let q_end = (q_start + tile).min(seq);
                let rows = q_end - q_start;
                acc[..rows * d].fill(T::zero());
                run_max[..rows].fill(T::neg_infinity());
                run_sum[..rows].fill(T::zero());
                // keys after the last query row of this tile are masked for all rows
                for k_start in (0..q_end).step_by(tile) {
                    let k_end = (k_start + tile).min(q_end);
                    for r in 0..rows {
                        let t = q_start + r;
                        let valid = (t + 1).min(k_end) - k_start;
                        let s_row = &mut scores[r * tile..r * tile + valid];
                        let q = inp.row(&inp.q, h, t);
                        let mut tile_max = T::neg_infinity();
                        for (j, sc) in s_row.iter_mut().enumerate() {
                            *sc = scale * dot(q, inp.row(&inp.k, h, k_start + j));
                            tile_max = tile_max.max(*sc);
                        }
                        let new_max = run_max[r].max(tile_max);
                        let correction = (run_max[r] - new_max).exp();
                        let a = &mut acc[r * d..(r + 1) * d];
                        for x in a.iter_mut() {
                            *x *= correction;
                        }
                        let mut tile_sum = T::zero();
                        for (j, sc) in s_row.iter().enumerate() {
                            let p = (*sc - new_max).exp();
                            tile_sum += p;
                            for (x, &v) in a.iter_mut().zip(inp.row(&inp.v, h, k_start + j)) {
                                *x += p * v;
                            }
                        }
                        run_sum[r] = run_sum[r] * correction + tile_sum;
                        run_max[r] = new_max;
                    }
                }
                for r in 0..rows {
                    let t = q_start + r;
                    let inv = T::one() / run_sum[r];
                    for (o, &x) in head_out[t * d..(t + 1) * d].iter_mut().zip(&acc[r * d..(r + 1) * d]) {
                        *o = x * inv;
                    }
                }
            }
        });
    out
}

/// Bytes of per-head working memory used by [`streaming_attention`]:
/// one score tile, the output accumulator and the running max/sum.
pub fn streaming_buffer_bytes<T>(tile: usize, head_dim: usize) -> usize {
    let tile = tile.max(1);
    (tile * tile + tile * head_dim + 2 * tile) * std::mem::size_of::<T>()
}

/// Bytes of per-head working memory used by [`naive_attention`].
pub fn naive_buffer_bytes<T>(seq: usize) -> usize {
    seq * seq * std::mem::size_of::<T>()
}

/// Gradients of [`naive_attention`] with respect to Q, K and V.
pub fn attention_backward<T: Real>(inp: &AttentionInputs<T>, d_out: &[T]) -> AttentionGrads<T> {
    assert_eq!(d_out.len(), inp.q.len(), "d_out shape mismatch");
    let probs = attention_probs(inp);
    let (seq, d, scale) = (inp.seq, inp.head_dim, inp.scale());
    let head_len = inp.head_len().max(1);
    let mut dq = vec![T::zero(); inp.q.len()];
    let mut dk = vec![T::zero(); inp.k.len()];
    let mut dv = vec![T::zero(); inp.v.len()];
    dq.par_chunks_mut(head_len)
        .zip(dk.par_chunks_mut(head_len))
        .zip(dv.par_chunks_mut(head_len))
        .enumerate()
        .for_each(|(h, ((dq_h, dk_h), dv_h))| {
            let mut d_scores = vec![T::zero(); seq];
            for t in 0..seq {
                let p_row = &probs[h * seq * seq + t * seq..h * seq * seq + t * seq + t + 1];
                let g = &d_out[h * inp.head_len() + t * d..h * inp.head_len() + (t + 1) * d];
                // dP[t,s] = dO_t · v_s, then softmax Jacobian
                let mut weighted = T::zero();
                for s in 0..=t {
                    d_scores[s] = dot(g, inp.row(&inp.v, h, s));
                    weighted += p_row[s] * d_scores[s];
                }
                for s in 0..=t {
                    let ds = p_row[s] * (d_scores[s] - weighted) * scale;
                    let p = p_row[s];
                    for (x, &gv) in dv_h[s * d..(s + 1) * d].iter_mut().zip(g) {
                        *x += p * gv;
                    }
                    for (x, &kv) in dq_h[t * d..(t + 1) * d].iter_mut().zip(inp.row(&inp.k, h, s)) {
                        *x += ds * kv;
                    }
                    for (x, &qv) in dk_h[s * d..(s + 1) * d].iter_mut().zip(inp.row(&inp.q, h, t)) {
                        *x += ds * qv;
                    }
                }
            }
        });
    AttentionGrads { dq, dk, dv }
}
