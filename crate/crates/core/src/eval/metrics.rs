use std::collections::HashMap;

use unicode_normalization::char::is_combining_mark;

use crate::error::{Error, Result};

pub const BLEU_MAX_ORDER: usize = 4;

/// Splits punctuation off words, then splits on whitespace. Letters,
/// digits and combining marks (tone and under-dot diacritics) stay inside
/// words.
pub fn bleu_tokenize(text: &str) -> Vec<String> {
    let mut spaced = String::with_capacity(text.len() + 8);
    for c in text.chars() {
        if !c.is_alphanumeric() && !c.is_whitespace() && !is_combining_mark(c) {
            spaced.push(' ');
            spaced.push(c);
            spaced.push(' ');
        } else {
            spaced.push(c);
        }
    }
    spaced.split_whitespace().map(str::to_string).collect()
}

fn ngram_counts(tokens: &[String], n: usize) -> HashMap<&[String], usize> {
    let mut m = HashMap::new();
    if tokens.len() >= n {
        for w in tokens.windows(n) {
            *m.entry(w).or_insert(0) += 1;
        }
    }
    m
}

/// Corpus BLEU-4 in `[0, 100]` with one reference per hypothesis.
///
/// Precisions are clipped n-gram matches summed over the corpus. A zero
/// precision for n >= 2 is replaced by `1 / (total + 1)`; a zero unigram
/// precision makes the score 0. Brevity penalty is
/// `exp(min(0, 1 - ref_len / hyp_len))`.
pub fn bleu<H: AsRef<str>, R: AsRef<str>>(hypotheses: &[H], references: &[R]) -> Result<f64> {
    if hypotheses.len() != references.len() {
        return Err(Error::CorpusMismatch(format!(
            "{} hypotheses for {} references",
            hypotheses.len(),
            references.len()
        )));
    }
    if references.is_empty() {
        return Err(Error::CorpusMismatch("no references to score against".into()));
    }
    let mut matches = [0usize; BLEU_MAX_ORDER];
    let mut totals = [0usize; BLEU_MAX_ORDER];
    let (mut hyp_len, mut ref_len) = (0usize, 0usize);
    for (h, r) in hypotheses.iter().zip(references) {
        let h = bleu_tokenize(h.as_ref());
        let r = bleu_tokenize(r.as_ref());
        hyp_len += h.len();
        ref_len += r.len();
        for n in 1..=BLEU_MAX_ORDER {
            let hc = ngram_counts(&h, n);
            let rc = ngram_counts(&r, n);
            matches[n - 1] += hc
                .iter()
                .map(|(g, &c)| c.min(rc.get(g).copied().unwrap_or(0)))
                .sum::<usize>();
            totals[n - 1] += h.len().saturating_sub(n - 1);
        }
    }
    if hyp_len == 0 || matches[0] == 0 {
        return Ok(0.0);
    }
    let mut log_sum = 0.0;
    for n in 0..BLEU_MAX_ORDER {
        let p = if matches[n] == 0 {
            1.0 / (totals[n] as f64 + 1.0)
        } else {
            matches[n] as f64 / totals[n] as f64
        };
        log_sum += p.ln();
    }
    let bp = (1.0 - ref_len as f64 / hyp_len as f64).min(0.0).exp();
    Ok(100.0 * bp * (log_sum / BLEU_MAX_ORDER as f64).exp())
}

/// Unweighted mean over `labels` of per-label F1, in `[0, 100]`. A label
/// with no true positives, false positives or false negatives scores 0.
pub fn macro_f1<P: AsRef<str>, G: AsRef<str>, L: AsRef<str>>(
    predictions: &[P],
    golds: &[G],
    labels: &[L],
) -> Result<f64> {
    if predictions.len() != golds.len() {
        return Err(Error::CorpusMismatch(format!(
            "{} predictions for {} gold labels",
            predictions.len(),
            golds.len()
        )));
    }
    if labels.is_empty() {
        return Ok(0.0);
    }
    let mut sum = 0.0;
    for label in labels {
        let label = label.as_ref();
        let (mut tp, mut fp, mut fn_) = (0usize, 0usize, 0usize);
        for (p, g) in predictions.iter().zip(golds) {
            match (p.as_ref() == label, g.as_ref() == label) {
                (true, true) => tp += 1,
                (true, false) => fp += 1,
                (false, true) => fn_ += 1,
                (false, false) => {}
            }
        }
        let denom = 2 * tp + fp + fn_;
        if denom > 0 {
            sum += 2.0 * tp as f64 / denom as f64;
        }
    }
    Ok(100.0 * sum / labels.len() as f64)
}

/// Percentage of exact matches; 0 for empty input.
pub fn accuracy<P: PartialEq<G>, G>(predictions: &[P], golds: &[G]) -> Result<f64> {
    if predictions.len() != golds.len() {
        return Err(Error::CorpusMismatch(format!(
            "{} predictions for {} gold labels",
            predictions.len(),
            golds.len()
        )));
    }
    if golds.is_empty() {
        return Ok(0.0);
    }
    let hits = predictions.iter().zip(golds).filter(|(p, g)| *p == *g).count();
    Ok(100.0 * hits as f64 / golds.len() as f64)
}
