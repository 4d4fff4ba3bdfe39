use std::cmp::Reverse;
use std::collections::{BTreeMap, BinaryHeap, HashMap, HashSet};

use unicode_normalization::UnicodeNormalization;

use super::{byte_id, pre_tokenize, SpecialTokens, TokenizerModel, BASE_VOCAB_SIZE, NUM_SPECIALS};
use crate::error::{Error, Result};

type Pair = (u32, u32);
/// (pre-token index in order of first appearance, symbol position)
type Position = (u32, u32);

struct Word {
    symbols: Vec<u32>,
    count: u64,
}

#[derive(Default)]
struct PairStat {
    count: u64,
    /// word index -> occurrences of the pair inside that word
    words: BTreeMap<u32, u32>,
}

/// Trains a byte-level BPE model.
///
/// Each round merges the most frequent adjacent pair; equal counts go to the
/// pair that occurs earliest in the normalized corpus stream. Pairs whose
/// concatenation is already a token are skipped. Training stops early, with a
/// warning, when no remaining pair occurs at least twice.
pub fn train_bpe<I, S>(corpus: I, target_vocab_size: usize, specials: SpecialTokens) -> Result<TokenizerModel>
where
    I: IntoIterator<Item = S>,
    S: AsRef<str>,
{
    if target_vocab_size < BASE_VOCAB_SIZE {
        return Err(Error::ConfigInvalid(format!(
            "target vocabulary {target_vocab_size} is below the base size {BASE_VOCAB_SIZE}"
        )));
    }
    let mut words = collect_words(corpus);
    if words.is_empty() {
        return Err(Error::TrainingDataEmpty);
    }
    let wanted = target_vocab_size - BASE_VOCAB_SIZE;

    let mut stats: HashMap<Pair, PairStat> = HashMap::new();
    for (w, word) in words.iter().enumerate() {
        for pair in word.symbols.windows(2) {
            let stat = stats.entry((pair[0], pair[1])).or_default();
            stat.count += word.count;
            *stat.words.entry(w as u32).or_default() += 1;
        }
    }

    let mut heap: BinaryHeap<(u64, Reverse<Position>, Pair)> = stats
        .iter()
        .map(|(&pair, stat)| (stat.count, Reverse(first_occurrence(&words, stat, pair)), pair))
        .collect();

    let mut tokens: Vec<Vec<u8>> = (0..=255u8).map(|b| vec![b]).collect();
    let mut known: HashSet<Vec<u8>> = tokens.iter().cloned().collect();
    let mut banned: HashSet<Pair> = HashSet::new();
    let mut merges: Vec<Pair> = Vec::with_capacity(wanted);

    while merges.len() < wanted {
        let Some((count, Reverse(first), pair)) = heap.pop() else {
            break;
        };
        if banned.contains(&pair) {
            continue;
        }
        let Some(stat) = stats.get(&pair).filter(|s| s.count > 0) else {
            continue;
        };
        // Lazy heap: stale entries only ever overestimate, so re-queue the
        // current value and try again.
        let current = (stat.count, first_occurrence(&words, stat, pair));
        if current != (count, first) {
            heap.push((current.0, Reverse(current.1), pair));
            continue;
        }
        if count < 2 {
            break;
        }
        let mut joined = tokens[pair.0 as usize - NUM_SPECIALS].clone();
        joined.extend_from_slice(&tokens[pair.1 as usize - NUM_SPECIALS]);
        if !known.insert(joined.clone()) {
            banned.insert(pair);
            continue;
        }
        let new_id = (tokens.len() + NUM_SPECIALS) as u32;
        tokens.push(joined);
        merges.push(pair);

        let affected: Vec<u32> = stat.words.keys().copied().collect();
        let mut gained: HashSet<Pair> = HashSet::new();
        for w in affected {
            apply_merge(&mut words, &mut stats, &mut gained, w, pair, new_id);
        }
        stats.remove(&pair);
        for p in gained {
            if let Some(s) = stats.get(&p) {
                heap.push((s.count, Reverse(first_occurrence(&words, s, p)), p));
            }
        }
    }

    if merges.len() < wanted {
        log::warn!(
            "tokenizer training stopped after {} of {} merges: no pair occurs at least twice",
            merges.len(),
            wanted
        );
    }
    TokenizerModel::from_merges(specials, merges)
}

fn collect_words<I, S>(corpus: I) -> Vec<Word>
where
    I: IntoIterator<Item = S>,
    S: AsRef<str>,
{
    let mut index: HashMap<Vec<u8>, usize> = HashMap::new();
    let mut words: Vec<Word> = Vec::new();
    for doc in corpus {
        let normalized: String = doc.as_ref().nfc().collect();
        for piece in pre_tokenize(&normalized) {
            match index.get(piece.as_bytes()) {
                Some(&w) => words[w].count += 1,
                None => {
                    index.insert(piece.as_bytes().to_vec(), words.len());
                    words.push(Word {
                        symbols: piece.bytes().map(byte_id).collect(),
                        count: 1,
                    });
                }
            }
        }
    }
    words
}

fn first_occurrence(words: &[Word], stat: &PairStat, pair: Pair) -> Position {
    let (&w, _) = stat.words.iter().next().expect("pair with a positive count has a word");
    let pos = words[w as usize]
        .symbols
        .windows(2)
        .position(|s| s[0] == pair.0 && s[1] == pair.1)
        .expect("pair index is consistent with word contents");
    (w, pos as u32)
}

fn pair_histogram(symbols: &[u32]) -> HashMap<Pair, u32> {
    let mut h = HashMap::new();
    for s in symbols.windows(2) {
        *h.entry((s[0], s[1])).or_insert(0) += 1;
    }
    h
}

fn apply_merge(
    words: &mut [Word],
    stats: &mut HashMap<Pair, PairStat>,
    gained: &mut HashSet<Pair>,
    w: u32,
    pair: Pair,
    new_id: u32,
) {
    let word = &mut words[w as usize];
    let before = pair_histogram(&word.symbols);
    let mut merged = Vec::with_capacity(word.symbols.len());
    let mut i = 0;
    while i < word.symbols.len() {
        if i + 1 < word.symbols.len() && (word.symbols[i], word.symbols[i + 1]) == pair {
            merged.push(new_id);
            i += 2;
        } else {
            merged.push(word.symbols[i]);
            i += 1;
        }
    }
    word.symbols = merged;
    let after = pair_histogram(&word.symbols);

    let weight = word.count;
    for (&p, &old) in &before {
        let new = after.get(&p).copied().unwrap_or(0);
        if new < old {
            let stat = stats.get_mut(&p).expect("existing pair has stats");
            stat.count -= u64::from(old - new) * weight;
            if new == 0 {
                stat.words.remove(&w);
            } else {
                stat.words.insert(w, new);
            }
        }
    }
    for (&p, &new) in &after {
        let old = before.get(&p).copied().unwrap_or(0);
        if new > old {
            let stat = stats.entry(p).or_default();
            stat.count += u64::from(new - old) * weight;
            stat.words.insert(w, new);
            gained.insert(p);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bytes_of(m: &TokenizerModel, id: u32) -> String {
        String::from_utf8(m.token_bytes(id).unwrap().to_vec()).unwrap()
    }

    #[test]
    fn gage_example_merge_sequence() {
        let m = train_bpe(["aaabdaaabac"], 263, SpecialTokens::default()).unwrap();
        let named: Vec<(String, String)> = m
            .merges()
            .iter()
            .map(|&(a, b)| (bytes_of(&m, a), bytes_of(&m, b)))
            .collect();
        let expect = [("a", "a"), ("aa", "a"), ("aaa", "b")];
        let expect: Vec<(String, String)> = expect.iter().map(|(a, b)| (a.to_string(), b.to_string())).collect();
        assert_eq!(named, expect);
        assert_eq!(m.encode("aaab").len(), 1);
        assert_eq!(bytes_of(&m, m.encode("aaab")[0]), "aaab");
    }

    #[test]
    fn single_char_corpus_zero_merges() {
        let m = train_bpe(["x"], 260, SpecialTokens::default()).unwrap();
        assert_eq!(m.vocab_size(), 260);
        assert!(m.merges().is_empty());
    }

    #[test]
    fn stops_early_when_pairs_are_unique() {
        let m = train_bpe(["abcdef"], 300, SpecialTokens::default()).unwrap();
        assert!(m.merges().is_empty());
        let m = train_bpe(["abab"], 300, SpecialTokens::default()).unwrap();
        assert_eq!(m.merges().len(), 1);
    }

    #[test]
    fn errors() {
        assert!(matches!(
            train_bpe(["abc"], 100, SpecialTokens::default()),
            Err(Error::ConfigInvalid(_))
        ));
        assert!(matches!(
            train_bpe(Vec::<String>::new(), 300, SpecialTokens::default()),
            Err(Error::TrainingDataEmpty)
        ));
        assert!(matches!(
            train_bpe([""], 300, SpecialTokens::default()),
            Err(Error::TrainingDataEmpty)
        ));
    }

    #[test]
    fn merges_never_cross_whitespace() {
        let m = train_bpe(["ab ab ab ab"; 4], 300, SpecialTokens::default()).unwrap();
        for id in 260..m.vocab_size() as u32 {
            let tok = m.token_bytes(id).unwrap();
            assert!(!tok[1..].contains(&b' '), "token {tok:?} spans a boundary");
        }
    }

    #[test]
    fn deterministic() {
        let corpus = ["the cat sat on the mat", "the dog sat on the log", "a cat and a dog"];
        let a = train_bpe(corpus, 290, SpecialTokens::default()).unwrap();
        let b = train_bpe(corpus, 290, SpecialTokens::default()).unwrap();
        assert_eq!(a.merges(), b.merges());
    }

    #[test]
    fn duplicate_string_pairs_are_skipped() {
        // After (a,a) and (aa,a), the pair (a,aa) would mint "aaa" again.
        let m = train_bpe(["aaa aaa baaa baaa"], 300, SpecialTokens::default()).unwrap();
        let mut seen = HashSet::new();
        for id in 4..m.vocab_size() as u32 {
            assert!(seen.insert(m.token_bytes(id).unwrap().to_vec()));
        }
    }
}
