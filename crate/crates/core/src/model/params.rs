use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::ModelConfig;
use crate::tensor::{Real, Tensor};

pub const INIT_STD: f64 = 0.02;

#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams<T> {
    pub attn_norm: Tensor<T>,
    pub wq: Tensor<T>,
    pub wk: Tensor<T>,
    pub wv: Tensor<T>,
    pub wo: Tensor<T>,
    pub ffn_norm: Tensor<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FfnParams<T> {
    pub w_gate: Tensor<T>,
    pub w_up: Tensor<T>,
    pub w_down: Tensor<T>,
}

/// Every trainable tensor of the model. Weight matrices are stored
/// `[in × out]` so a layer computes `y = x · W`.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamStore<T> {
    pub config: ModelConfig,
    pub tok_embeddings: Tensor<T>,
    pub layers: Vec<LayerParams<T>>,
    /// One block when `share_ffn`, else one per layer.
    pub ffn: Vec<FfnParams<T>>,
    pub final_norm: Tensor<T>,
    /// `None` when the embedding doubles as the output projection.
    pub lm_head: Option<Tensor<T>>,
}

impl<T: Real> ParamStore<T> {
    /// All-zero store with the shapes implied by `config`.
    pub fn zeros(config: &ModelConfig) -> Self {
        let (v, h, i) = (config.vocab_size, config.hidden_size, config.intermediate_size);
        ParamStore {
            config: config.clone(),
            tok_embeddings: Tensor::zeros(&[v, h]),
            layers: (0..config.num_hidden_layers)
                .map(|_| LayerParams {
                    attn_norm: Tensor::zeros(&[h]),
                    wq: Tensor::zeros(&[h, h]),
                    wk: Tensor::zeros(&[h, h]),
                    wv: Tensor::zeros(&[h, h]),
                    wo: Tensor::zeros(&[h, h]),
                    ffn_norm: Tensor::zeros(&[h]),
                })
                .collect(),
            ffn: (0..config.ffn_blocks())
                .map(|_| FfnParams {
                    w_gate: Tensor::zeros(&[h, i]),
                    w_up: Tensor::zeros(&[h, i]),
                    w_down: Tensor::zeros(&[i, h]),
                })
                .collect(),
            final_norm: Tensor::zeros(&[h]),
            lm_head: (!config.tie_embeddings).then(|| Tensor::zeros(&[h, v])),
        }
    }

    /// Seeded initialization: norm weights are 1, everything else is drawn
    /// from a normal with std 0.02 truncated at two standard deviations.
    pub fn init(config: &ModelConfig, seed: u64) -> Self {
        let mut store = Self::zeros(config);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, INIT_STD).expect("valid std");
        for (name, tensor) in store.tensors_mut() {
            if name.ends_with("norm") {
                tensor.data_mut().fill(T::one());
                continue;
            }
            for x in tensor.data_mut() {
                let z = loop {
                    let z: f64 = normal.sample(&mut rng);
                    if z.abs() <= 2.0 * INIT_STD {
                        break z;
                    }
                };
                *x = T::from_f64_lossy(z);
            }
        }
        store
    }

    /// SwiGLU block used by layer `layer`.
    pub fn ffn_for(&self, layer: usize) -> &FfnParams<T> {
        if self.config.share_ffn {
            &self.ffn[0]
        } else {
            &self.ffn[layer]
        }
    }

    pub fn ffn_for_mut(&mut self, layer: usize) -> &mut FfnParams<T> {
        if self.config.share_ffn {
            &mut self.ffn[0]
        } else {
            &mut self.ffn[layer]
        }
    }

    /// Output projection as `[H × V]` data, or `None` when tied.
    pub fn head(&self) -> Option<&Tensor<T>> {
        self.lm_head.as_ref()
    }

    /// Named tensors in canonical order.
    pub fn tensors(&self) -> Vec<(String, &Tensor<T>)> {
        let mut out = vec![("tok_embeddings".to_string(), &self.tok_embeddings)];
        for (l, layer) in self.layers.iter().enumerate() {
            out.push((format!("layers.{l}.attn_norm"), &layer.attn_norm));
            out.push((format!("layers.{l}.wq"), &layer.wq));
            out.push((format!("layers.{l}.wk"), &layer.wk));
            out.push((format!("layers.{l}.wv"), &layer.wv));
            out.push((format!("layers.{l}.wo"), &layer.wo));
            out.push((format!("layers.{l}.ffn_norm"), &layer.ffn_norm));
        }
        for (j, f) in self.ffn.iter().enumerate() {
            out.push((format!("ffn.{j}.w_gate"), &f.w_gate));
            out.push((format!("ffn.{j}.w_up"), &f.w_up));
            out.push((format!("ffn.{j}.w_down"), &f.w_down));
        }
        out.push(("final_norm".to_string(), &self.final_norm));
        if let Some(head) = &self.lm_head {
            out.push(("lm_head".to_string(), head));
        }
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<(String, &mut Tensor<T>)> {
        let mut out = vec![("tok_embeddings".to_string(), &mut self.tok_embeddings)];
        for (l, layer) in self.layers.iter_mut().enumerate() {
            out.push((format!("layers.{l}.attn_norm"), &mut layer.attn_norm));
            out.push((format!("layers.{l}.wq"), &mut layer.wq));
            out.push((format!("layers.{l}.wk"), &mut layer.wk));
            out.push((format!("layers.{l}.wv"), &mut layer.wv));
            out.push((format!("layers.{l}.wo"), &mut layer.wo));
            out.push((format!("layers.{l}.ffn_norm"), &mut layer.ffn_norm));
        }
        for (j, f) in self.ffn.iter_mut().enumerate() {
            out.push((format!("ffn.{j}.w_gate"), &mut f.w_gate));
            out.push((format!("ffn.{j}.w_up"), &mut f.w_up));
            out.push((format!("ffn.{j}.w_down"), &mut f.w_down));
        }
        out.push(("final_norm".to_string(), &mut self.final_norm));
        if let Some(head) = &mut self.lm_head {
            out.push(("lm_head".to_string(), head));
        }
        out
    }

    pub fn num_params(&self) -> usize {
        self.tensors().iter().map(|(_, t)| t.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|(_, t)| t.is_finite())
    }

    /// Elementwise `self += other`.
    pub fn add_assign(&mut self, other: &ParamStore<T>) {
        for ((_, a), (_, b)) in self.tensors_mut().into_iter().zip(other.tensors()) {
            a.add_assign(b);
        }
    }

    pub fn scale(&mut self, s: T) {
        for (_, t) in self.tensors_mut() {
            t.scale(s);
        }
    }

    /// Global L2 norm over every tensor.
    pub fn global_norm(&self) -> T {
        self.tensors().iter().map(|(_, t)| t.sum_squares()).sum::<T>().sqrt()
    }

    pub fn cast<U: Real>(&self) -> ParamStore<U> {
        ParamStore {
            config: self.config.clone(),
            tok_embeddings: self.tok_embeddings.cast(),
            layers: self
                .layers
                .iter()
                .map(|l| LayerParams {
                    attn_norm: l.attn_norm.cast(),
                    wq: l.wq.cast(),
                    wk: l.wk.cast(),
                    wv: l.wv.cast(),
                    wo: l.wo.cast(),
                    ffn_norm: l.ffn_norm.cast(),
                })
                .collect(),
            ffn: self
                .ffn
                .iter()
                .map(|f| FfnParams {
                    w_gate: f.w_gate.cast(),
                    w_up: f.w_up.cast(),
                    w_down: f.w_down.cast(),
                })
                .collect(),
            final_norm: self.final_norm.cast(),
            lm_head: self.lm_head.as_ref().map(Tensor::cast),
        }
    }
}
