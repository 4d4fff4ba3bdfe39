//! Building blocks with their hand-written backward passes. Activations are
//! row-major `[rows × width]`.

use crate::tensor::{matmul, matmul_at_acc, matmul_bt, Real};

/// `out_i = w_i · x_i / sqrt(mean_j x_j² + eps)` for a single vector.
pub fn rmsnorm<T: Real>(x: &[T], w: &[T], eps: T) -> Vec<T> {
    rmsnorm_rows(x, w, eps).0
}

/// Row-wise RMSNorm; also returns `1/rms` per row for the backward pass.
pub fn rmsnorm_rows<T: Real>(x: &[T], w: &[T], eps: T) -> (Vec<T>, Vec<T>) {
    let h = w.len();
    let rows = x.len() / h;
    let mut y = vec![T::zero(); x.len()];
    let mut inv = Vec::with_capacity(rows);
    let width = T::from_usize(h).unwrap();
    for (xr, yr) in x.chunks(h).zip(y.chunks_mut(h)) {
        let ms = xr.iter().map(|&v| v * v).sum::<T>() / width;
        let r = T::one() / (ms + eps).sqrt();
        // a zero row with eps = 0 normalizes to zero rather than NaN
        let r = if r.is_finite() { r } else { T::zero() };
        for ((o, &xv), &wv) in yr.iter_mut().zip(xr).zip(w) {
            *o = wv * xv * r;
        }
        inv.push(r);
    }
    (y, inv)
}

/// Backward of [`rmsnorm_rows`]; accumulates into `dw` and returns `dx`.
pub fn rmsnorm_backward<T: Real>(x: &[T], w: &[T], inv_rms: &[T], dy: &[T], dw: &mut [T]) -> Vec<T> {
    let h = w.len();
    let width = T::from_usize(h).unwrap();
    let mut dx = vec![T::zero(); x.len()];
    for (((xr, dyr), dxr), &r) in x.chunks(h).zip(dy.chunks(h)).zip(dx.chunks_mut(h)).zip(inv_rms) {
        let mut proj = T::zero();
        for j in 0..h {
            dw[j] += dyr[j] * xr[j] * r;
            proj += w[j] * dyr[j] * xr[j];
        }
        let coeff = r * r * r * proj / width;
        for j in 0..h {
            dxr[j] = r * w[j] * dyr[j] - coeff * xr[j];
        }
    }
    dx
}

#[inline]
pub fn sigmoid<T: Real>(x: T) -> T {
    T::one() / (T::one() + (-x).exp())
}

#[inline]
pub fn silu<T: Real>(x: T) -> T {
    x * sigmoid(x)
}

#[inline]
fn silu_grad<T: Real>(x: T) -> T {
    let s = sigmoid(x);
    s * (T::one() + x * (T::one() - s))
}

/// Intermediate values of a SwiGLU block kept for the backward pass.
#[derive(Debug, Clone)]
pub struct SwigluCache<T> {
    pub gate: Vec<T>,
    pub up: Vec<T>,
    pub hidden: Vec<T>,
}

/// `W_down · (silu(W_gate·x) ⊙ W_up·x)` for a single vector; weights are
/// `[H×I]`, `[H×I]`, `[I×H]`.
pub fn swiglu<T: Real>(x: &[T], w_gate: &[T], w_up: &[T], w_down: &[T]) -> Vec<T> {
    let inter = w_gate.len() / x.len();
    swiglu_rows(x, w_gate, w_up, w_down, x.len(), inter).0
}

pub fn swiglu_rows<T: Real>(
    x: &[T],
    w_gate: &[T],
    w_up: &[T],
    w_down: &[T],
    hidden: usize,
    inter: usize,
) -> (Vec<T>, SwigluCache<T>) {
    let rows = x.len() / hidden;
    let gate = matmul(x, w_gate, rows, hidden, inter);
    let up = matmul(x, w_up, rows, hidden, inter);
    let act: Vec<T> = gate.iter().zip(&up).map(|(&g, &u)| silu(g) * u).collect();
    let y = matmul(&act, w_down, rows, inter, hidden);
    (y, SwigluCache { gate, up, hidden: act })
}

/// Backward of [`swiglu_rows`]; accumulates weight gradients and returns `dx`.
#[allow(clippy::too_many_arguments)]
pub fn swiglu_backward<T: Real>(
    x: &[T],
    cache: &SwigluCache<T>,
    w_gate: &[T],
    w_up: &[T],
    w_down: &[T],
    dy: &[T],
    hidden: usize,
    inter: usize,
    grads: (&mut [T], &mut [T], &mut [T]),
) -> Vec<T> {
    let (d_gate_w, d_up_w, d_down_w) = grads;
    let rows = x.len() / hidden;
    matmul_at_acc(&cache.hidden, dy, rows, inter, hidden, d_down_w);
    let d_act = matmul_bt(dy, w_down, rows, hidden, inter);
    let mut d_gate = vec![T::zero(); d_act.len()];
    let mut d_up = vec![T::zero(); d_act.len()];
    for i in 0..d_act.len() {
        let g = cache.gate[i];
        d_up[i] = d_act[i] * silu(g);
        d_gate[i] = d_act[i] * cache.up[i] * silu_grad(g);
    }
    matmul_at_acc(x, &d_gate, rows, hidden, inter, d_gate_w);
    matmul_at_acc(x, &d_up, rows, hidden, inter, d_up_w);
    let mut dx = matmul_bt(&d_gate, w_gate, rows, inter, hidden);
    let dx_up = matmul_bt(&d_up, w_up, rows, inter, hidden);
    for (a, b) in dx.iter_mut().zip(dx_up) {
        *a += b;
    }
    dx
}

/// Cosine/sine tables for rotary embeddings, `[position × head_dim/2]`.
#[derive(Debug, Clone)]
pub struct RopeTable<T> {
    half: usize,
    cos: Vec<T>,
    sin: Vec<T>,
}

impl<T: Real> RopeTable<T> {
    pub fn new(head_dim: usize, max_pos: usize, theta: f64) -> Self {
        assert!(head_dim.is_multiple_of(2), "rotary embeddings need an even head_dim");
        let half = head_dim / 2;
        let mut cos = Vec::with_capacity(max_pos * half);
        let mut sin = Vec::with_capacity(max_pos * half);
        for pos in 0..max_pos {
            for i in 0..half {
                let freq = theta.powf(-2.0 * i as f64 / head_dim as f64);
                let angle = pos as f64 * freq;
                cos.push(T::from_f64_lossy(angle.cos()));
                sin.push(T::from_f64_lossy(angle.sin()));
            }
        }
        RopeTable { half, cos, sin }
    }

    /// Rotates each `(2i, 2i+1)` pair of every row by `pos · theta^(−2i/d)`.
    /// `x` is `[rows × head_dim]` and `positions[r]` is the position of row `r`.
    pub fn apply(&self, x: &mut [T], positions: &[usize]) {
        self.rotate(x, positions, false)
    }

    /// Inverse rotation; this is also the backward pass of [`Self::apply`].
    pub fn apply_inverse(&self, x: &mut [T], positions: &[usize]) {
        self.rotate(x, positions, true)
    }

    fn rotate(&self, x: &mut [T], positions: &[usize], inverse: bool) {
        let d = 2 * self.half;
        for (row, &pos) in x.chunks_mut(d).zip(positions) {
            let base = pos * self.half;
            for i in 0..self.half {
                let c = self.cos[base + i];
                let s = if inverse {
                    -self.sin[base + i]
                } else {
                    self.sin[base + i]
                };
                let (a, b) = (row[2 * i], row[2 * i + 1]);
                row[2 * i] = a * c - b * s;
                row[2 * i + 1] = a * s + b * c;
            }
        }
    }
}

/// Rotary embedding of `q_or_k` (`[seq × head_dim]`) at the given positions.
pub fn apply_rope<T: Real>(q_or_k: &[T], head_dim: usize, positions: &[usize], theta: f64) -> Vec<T> {
    let max_pos = positions.iter().copied().max().map_or(0, |p| p + 1);
    let table = RopeTable::new(head_dim, max_pos, theta);
    let mut out = q_or_k.to_vec();
    table.apply(&mut out, positions);
    out
}
