//! Fixtures and independent oracles shared by the integration tests.
#![allow(dead_code)]

use inkuba::corpus::{pack, ShardSet};
use inkuba::model::{loss, loss_and_grads, ModelConfig, ParamStore, TokenBatch};
use inkuba::tokenizer::{SpecialTokens, TokenizerModel, EOS_ID, PAD_ID};
use inkuba::train::TrainConfig;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub const MULTILINGUAL: &str = include_str!("../fixtures/multilingual.tsv");

/// Sentences of the bundled multilingual fixture, `code<TAB>text` per line.
pub fn fixture_sentences() -> Vec<&'static str> {
    MULTILINGUAL.lines().map(|l| l.split_once('\t').unwrap().1).collect()
}

/// Random pseudo-words, each occurring twice, so every word can become a
/// token of its own.
pub fn synthetic_corpus(words: usize, seed: u64) -> Vec<String> {
    let syllables = [
        "ka", "ba", "ma", "na", "ta", "la", "wa", "ya", "za", "sha", "ngo", "mbi", "ku", "lo", "se", "di", "fu", "ri",
        "ọ", "ẹ", "ṣe", "hla", "tsh", "qo", "xa",
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let vocab: Vec<String> = (0..words)
        .map(|_| {
            (0..rng.gen_range(2..6))
                .map(|_| syllables[rng.gen_range(0..syllables.len())])
                .collect()
        })
        .collect();
    vocab.chunks(20).flat_map(|c| [c.join(" "), c.join(" ")]).collect()
}

/// Direct softmax(QKᵀ/√d)V with a causal mask, accumulated in f64.
pub fn reference_attention(h: usize, s: usize, d: usize, q: &[f32], k: &[f32], v: &[f32]) -> Vec<f64> {
    let at = |buf: &[f32], head: usize, t: usize, j: usize| buf[(head * s + t) * d + j] as f64;
    let mut out = vec![0.0; h * s * d];
    for head in 0..h {
        for t in 0..s {
            let scores: Vec<f64> = (0..=t)
                .map(|u| (0..d).map(|j| at(q, head, t, j) * at(k, head, u, j)).sum::<f64>() / (d as f64).sqrt())
                .collect();
            let m = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let w: Vec<f64> = scores.iter().map(|x| (x - m).exp()).collect();
            let z: f64 = w.iter().sum();
            for j in 0..d {
                out[(head * s + t) * d + j] = (0..=t).map(|u| w[u] * at(v, head, u, j)).sum::<f64>() / z;
            }
        }
    }
    out
}

pub fn randn(rng: &mut ChaCha8Rng, n: usize) -> Vec<f32> {
    (0..n).map(|_| rng.sample::<f32, _>(StandardNormal)).collect()
}

pub const FD_STEP: f64 = 1e-5;

/// Params with larger-than-default weights so gradients are well above
/// finite-difference noise.
pub fn conditioned_params(cfg: &ModelConfig, seed: u64) -> ParamStore<f64> {
    let mut p = ParamStore::<f64>::init(cfg, seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabcd);
    for (name, t) in p.tensors_mut() {
        for x in t.data_mut() {
            *x = if name.ends_with("norm") {
                rng.gen_range(0.5..1.5)
            } else {
                rng.gen_range(-0.5..0.5)
            };
        }
    }
    p
}

pub fn random_batch(cfg: &ModelConfig, rows: usize, seq: usize, seed: u64) -> TokenBatch {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ids = (0..rows * seq)
        .map(|_| rng.gen_range(0..cfg.vocab_size as u32))
        .collect();
    TokenBatch::new(rows, seq, ids).unwrap()
}

/// Worst relative error between the analytic gradient and central
/// differences over `coords` random coordinates of every tensor.
pub fn worst_relative_error(cfg: &ModelConfig, coords: usize, seed: u64) -> (f64, String) {
    let params = conditioned_params(cfg, seed);
    let batch = random_batch(cfg, 2, 6, seed + 1);
    let (_, grads) = loss_and_grads(&params, &batch).unwrap();
    let grad_list: Vec<(String, Vec<f64>)> = grads
        .tensors()
        .into_iter()
        .map(|(n, t)| (n, t.data().to_vec()))
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(seed + 2);
    let mut worst = (0.0f64, String::new());
    for (ti, (name, g)) in grad_list.iter().enumerate() {
        for _ in 0..coords {
            let i = rng.gen_range(0..g.len());
            let mut plus = params.clone();
            plus.tensors_mut()[ti].1.data_mut()[i] += FD_STEP;
            let mut minus = params.clone();
            minus.tensors_mut()[ti].1.data_mut()[i] -= FD_STEP;
            let fd = (loss(&plus, &batch).unwrap() - loss(&minus, &batch).unwrap()) / (2.0 * FD_STEP);
            let rel = (fd - g[i]).abs() / fd.abs().max(g[i].abs()).max(1e-7);
            if rel > worst.0 {
                worst = (rel, format!("{name}[{i}] analytic {} fd {fd}", g[i]));
            }
        }
    }
    worst
}

pub const SENTENCE: &str = "Habari ya asubuhi, karibu sana kwenye mkutano wetu wa leo.";

/// 64 copies of one sentence, one copy per row, byte-level ids.
pub fn repeated_sentence_data() -> (ShardSet, usize) {
    let tok = TokenizerModel::byte_level(SpecialTokens::default());
    let ids = tok.encode(SENTENCE);
    let docs = vec![ids.clone(); 64];
    let shard = pack(&docs, ids.len() + 1, EOS_ID, PAD_ID).unwrap();
    assert_eq!(shard.rows(), 64);
    (ShardSet::from_shards(&[shard]).unwrap(), tok.vocab_size())
}

/// Toy model (about 0.1M parameters) and schedule for the overfit run.
pub fn overfit_setup(vocab: usize) -> (ModelConfig, TrainConfig) {
    let model = ModelConfig {
        hidden_size: 64,
        intermediate_size: 176,
        num_attention_heads: 4,
        num_hidden_layers: 2,
        max_seq_len: 128,
        ..ModelConfig::toy(vocab)
    };
    let train = TrainConfig {
        peak_lr: 3e-3,
        warmup_steps: 20,
        total_steps: 300,
        weight_decay: 0.0,
        batch_size: 8,
        seed: 2024,
        checkpoint_every: 0,
        ..TrainConfig::default()
    };
    (model, train)
}

/// Means of every window of `window` consecutive losses.
pub fn smoothed(losses: &[f32], window: usize) -> Vec<f64> {
    losses
        .windows(window)
        .map(|w| w.iter().map(|&x| x as f64).sum::<f64>() / window as f64)
        .collect()
}
