use crate::error::{Error, Result};
use crate::model::{forward, log_softmax_rows, ParamStore, TokenBatch};
use crate::tokenizer::{TokenizerModel, EOS_ID};

/// What the harness needs from a model: next-token log-probabilities.
pub trait LanguageModel: Sync {
    fn vocab_size(&self) -> usize;

    fn max_seq_len(&self) -> usize;

    /// Log-probabilities of the token following `context`.
    fn next_token_logprobs(&self, context: &[u32]) -> Result<Vec<f64>>;

    /// Row `t` holds the distribution of the token after `ids[..=t]`.
    /// The default asks [`next_token_logprobs`](Self::next_token_logprobs)
    /// once per prefix.
    fn sequence_logprobs(&self, ids: &[u32]) -> Result<Vec<Vec<f64>>> {
        (1..=ids.len()).map(|t| self.next_token_logprobs(&ids[..t])).collect()
    }
}

/// The transformer as a [`LanguageModel`], using the streaming attention
/// kernel.
pub struct TransformerLm {
    pub params: ParamStore<f32>,
}

impl TransformerLm {
    pub fn new(params: ParamStore<f32>) -> Self {
        TransformerLm { params }
    }

    fn logprob_rows(&self, ids: &[u32]) -> Result<Vec<f32>> {
        let batch = TokenBatch::new(1, ids.len(), ids.to_vec())?;
        let logits = forward(&self.params, &batch)?;
        Ok(log_softmax_rows(&logits, self.params.config.vocab_size))
    }
}

impl LanguageModel for TransformerLm {
    fn vocab_size(&self) -> usize {
        self.params.config.vocab_size
    }

    fn max_seq_len(&self) -> usize {
        self.params.config.max_seq_len
    }

    fn next_token_logprobs(&self, context: &[u32]) -> Result<Vec<f64>> {
        let v = self.vocab_size();
        let rows = self.logprob_rows(context)?;
        Ok(rows[rows.len() - v..].iter().map(|&x| x as f64).collect())
    }

    fn sequence_logprobs(&self, ids: &[u32]) -> Result<Vec<Vec<f64>>> {
        let v = self.vocab_size();
        let rows = self.logprob_rows(ids)?;
        Ok(rows.chunks(v).map(|r| r.iter().map(|&x| x as f64).collect()).collect())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GenerationParams {
    pub max_new_tokens: usize,
    /// Generation stops before the first occurrence of any of these. The
    /// end-of-sequence token always stops it.
    pub stop_sequences: Vec<String>,
}

impl Default for GenerationParams {
    fn default() -> Self {
        GenerationParams {
            max_new_tokens: 64,
            stop_sequences: vec!["\n".to_string()],
        }
    }
}

/// Prompt ids as the model saw documents during training: EOS first.
pub fn encode_prompt(tokenizer: &TokenizerModel, prompt: &str) -> Vec<u32> {
    let mut ids = vec![EOS_ID];
    ids.extend(tokenizer.encode(prompt));
    ids
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate().skip(1) {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

/// Greedy decoding from token ids. Returns the generated ids, without the
/// terminating EOS.
pub fn generate_ids(model: &dyn LanguageModel, context: &[u32], max_new_tokens: usize) -> Result<Vec<u32>> {
    if max_new_tokens == 0 {
        return Err(Error::ConfigInvalid("max_new_tokens must be at least 1".into()));
    }
    let needed = context.len() + max_new_tokens;
    if needed > model.max_seq_len() {
        return Err(Error::ContextTooLong {
            needed,
            max: model.max_seq_len(),
        });
    }
    let mut ids = context.to_vec();
    let mut out = Vec::new();
    for _ in 0..max_new_tokens {
        let next = argmax(&model.next_token_logprobs(&ids)?) as u32;
        if next == EOS_ID {
            break;
        }
        ids.push(next);
        out.push(next);
    }
    Ok(out)
}

/// Greedy continuation of `prompt`, cut at the first stop sequence.
pub fn generate(
    model: &dyn LanguageModel,
    tokenizer: &TokenizerModel,
    prompt: &str,
    params: &GenerationParams,
) -> Result<String> {
    let context = encode_prompt(tokenizer, prompt);
    if params.max_new_tokens == 0 {
        return Err(Error::ConfigInvalid("max_new_tokens must be at least 1".into()));
    }
    let needed = context.len() + params.max_new_tokens;
    if needed > model.max_seq_len() {
        return Err(Error::ContextTooLong {
            needed,
            max: model.max_seq_len(),
        });
    }
    let mut ids = context;
    let mut generated = Vec::new();
    for _ in 0..params.max_new_tokens {
        let next = argmax(&model.next_token_logprobs(&ids)?) as u32;
        if next == EOS_ID {
            break;
        }
        ids.push(next);
        generated.push(next);
        let text = tokenizer.decode(&generated)?;
        if let Some(cut) = first_stop(&text, &params.stop_sequences) {
            return Ok(text[..cut].to_string());
        }
    }
    tokenizer.decode(&generated)
}

fn first_stop(text: &str, stops: &[String]) -> Option<usize> {
    stops
        .iter()
        .filter(|s| !s.is_empty())
        .filter_map(|s| text.find(s.as_str()))
        .min()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChoiceScores {
    /// Summed log-probability of each continuation.
    pub raw: Vec<f64>,
    /// `raw` divided by the continuation's token count.
    pub normalized: Vec<f64>,
    pub best_raw: usize,
    pub best_normalized: usize,
}

/// Log-likelihood of each continuation after `context`.
pub fn score_continuations(
    model: &dyn LanguageModel,
    context: &[u32],
    continuations: &[Vec<u32>],
) -> Result<ChoiceScores> {
    if continuations.len() < 2 {
        return Err(Error::ConfigInvalid(format!(
            "need at least 2 choices, got {}",
            continuations.len()
        )));
    }
    if context.is_empty() {
        return Err(Error::ConfigInvalid("choice scoring needs a non-empty context".into()));
    }
    let mut raw = Vec::with_capacity(continuations.len());
    let mut normalized = Vec::with_capacity(continuations.len());
    for cont in continuations {
        if cont.is_empty() {
            return Err(Error::ConfigInvalid("a choice encodes to zero tokens".into()));
        }
        let mut ids = context.to_vec();
        ids.extend_from_slice(cont);
        if ids.len() > model.max_seq_len() {
            return Err(Error::ContextTooLong {
                needed: ids.len(),
                max: model.max_seq_len(),
            });
        }
        // the last position predicts nothing we score
        let rows = model.sequence_logprobs(&ids[..ids.len() - 1])?;
        let total: f64 = cont
            .iter()
            .enumerate()
            .map(|(j, &tok)| rows[context.len() - 1 + j][tok as usize])
            .sum();
        raw.push(total);
        normalized.push(total / cont.len() as f64);
    }
    Ok(ChoiceScores {
        best_raw: argmax(&raw),
        best_normalized: argmax(&normalized),
        raw,
        normalized,
    })
}

/// Scores text choices after `prompt`; each choice is tokenized on its own
/// as a continuation.
pub fn score_choices<S: AsRef<str>>(
    model: &dyn LanguageModel,
    tokenizer: &TokenizerModel,
    prompt: &str,
    choices: &[S],
) -> Result<ChoiceScores> {
    let context = encode_prompt(tokenizer, prompt);
    let conts: Vec<Vec<u32>> = choices.iter().map(|c| tokenizer.encode(c.as_ref())).collect();
    score_continuations(model, &context, &conts)
}
