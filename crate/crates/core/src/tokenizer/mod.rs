//! Byte-level BPE tokenizer.
//!
//! Text is NFC-normalized, converted to UTF-8 bytes and split into
//! pre-tokens at whitespace boundaries (a single whitespace character that
//! precedes a word travels with that word). Merges never cross pre-token
//! boundaries. Ids 0..4 are reserved for the special tokens, ids 4..260
//! are the 256 raw bytes, and merge `i` creates id `260 + i`.

mod file;
mod train;

use std::collections::HashMap;

use unicode_normalization::UnicodeNormalization;

use crate::error::{Error, Result};

pub use train::train_bpe;

pub const PAD_ID: u32 = 0;
pub const UNK_ID: u32 = 1;
pub const BOS_ID: u32 = 2;
pub const EOS_ID: u32 = 3;

/// Number of reserved special ids.
pub const NUM_SPECIALS: usize = 4;
/// Smallest legal vocabulary: specials plus the byte alphabet.
pub const BASE_VOCAB_SIZE: usize = NUM_SPECIALS + 256;

/// Display names for the four reserved ids, in id order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SpecialTokens {
    pub pad: String,
    pub unk: String,
    pub bos: String,
    pub eos: String,
}

impl Default for SpecialTokens {
    fn default() -> Self {
        SpecialTokens {
            pad: "<pad>".into(),
            unk: "<unk>".into(),
            bos: "<s>".into(),
            eos: "</s>".into(),
        }
    }
}

impl SpecialTokens {
    pub fn as_array(&self) -> [&str; 4] {
        [&self.pad, &self.unk, &self.bos, &self.eos]
    }
}

/// A trained tokenizer: an ordered merge list plus the vocabulary it induces.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenizerModel {
    specials: SpecialTokens,
    merges: Vec<(u32, u32)>,
    /// Byte string of every non-special id; index = id - NUM_SPECIALS.
    tokens: Vec<Vec<u8>>,
    token_to_id: HashMap<Vec<u8>, u32>,
    merge_rank: HashMap<(u32, u32), u32>,
}

#[inline]
pub(crate) fn byte_id(b: u8) -> u32 {
    NUM_SPECIALS as u32 + b as u32
}

impl TokenizerModel {
    /// Builds a model by replaying `merges` over the byte alphabet.
    ///
    /// Fails if a merge references a special or not-yet-created id, or would
    /// mint a byte string that is already in the vocabulary.
    pub fn from_merges(specials: SpecialTokens, merges: Vec<(u32, u32)>) -> Result<Self> {
        let mut model = Self::byte_level(specials);
        for pair in merges {
            model.push_merge(pair)?;
        }
        Ok(model)
    }

    /// Model with only the byte alphabet.
    pub fn byte_level(specials: SpecialTokens) -> Self {
        let tokens: Vec<Vec<u8>> = (0..=255u8).map(|b| vec![b]).collect();
        let token_to_id = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), (i + NUM_SPECIALS) as u32))
            .collect();
        TokenizerModel {
            specials,
            merges: Vec::new(),
            tokens,
            token_to_id,
            merge_rank: HashMap::new(),
        }
    }

    pub fn vocab_size(&self) -> usize {
        NUM_SPECIALS + self.tokens.len()
    }

    pub fn merges(&self) -> &[(u32, u32)] {
        &self.merges
    }

    pub fn specials(&self) -> &SpecialTokens {
        &self.specials
    }

    /// Bytes of a non-special token.
    pub fn token_bytes(&self, id: u32) -> Option<&[u8]> {
        (id as usize)
            .checked_sub(NUM_SPECIALS)
            .and_then(|i| self.tokens.get(i))
            .map(Vec::as_slice)
    }

    pub fn token_id(&self, bytes: &[u8]) -> Option<u32> {
        self.token_to_id.get(bytes).copied()
    }

    /// Copy of this model keeping only the first `k` merges.
    pub fn truncated(&self, k: usize) -> Self {
        let merges = self.merges[..k.min(self.merges.len())].to_vec();
        Self::from_merges(self.specials.clone(), merges).expect("prefix of a valid merge list")
    }

    /// Encodes text. Total: every string maps to byte-level ids, never `unk`.
    pub fn encode(&self, text: &str) -> Vec<u32> {
        let normalized: String = text.nfc().collect();
        let mut out = Vec::with_capacity(normalized.len());
        for piece in pre_tokenize(&normalized) {
            self.encode_piece(piece.as_bytes(), &mut out);
        }
        out
    }

    fn encode_piece(&self, bytes: &[u8], out: &mut Vec<u32>) {
        let mut symbols: Vec<u32> = bytes.iter().map(|&b| byte_id(b)).collect();
        // Repeatedly apply the lowest-ranked merge present. Merges only ever
        // reference earlier ids, so this equals replaying merges in order.
        while symbols.len() > 1 {
            let best = symbols
                .windows(2)
                .filter_map(|w| self.merge_rank.get(&(w[0], w[1])).map(|&id| (id, w[0], w[1])))
                .min();
            let Some((new_id, left, right)) = best else {
                break;
            };
            let mut merged = Vec::with_capacity(symbols.len());
            let mut i = 0;
            while i < symbols.len() {
                if i + 1 < symbols.len() && symbols[i] == left && symbols[i + 1] == right {
                    merged.push(new_id);
                    i += 2;
                } else {
                    merged.push(symbols[i]);
                    i += 1;
                }
            }
            symbols = merged;
        }
        out.extend_from_slice(&symbols);
    }

    /// Decodes ids back to text; special ids render as nothing.
    pub fn decode(&self, ids: &[u32]) -> Result<String> {
        let mut bytes = Vec::with_capacity(ids.len() * 2);
        for &id in ids {
            if id as usize >= self.vocab_size() {
                return Err(Error::IdOutOfRange {
                    id,
                    vocab_size: self.vocab_size(),
                });
            }
            if let Some(tok) = self.token_bytes(id) {
                bytes.extend_from_slice(tok);
            }
        }
        Ok(match String::from_utf8(bytes) {
            Ok(s) => s,
            Err(e) => String::from_utf8_lossy(e.as_bytes()).into_owned(),
        })
    }

    /// Appends one merge, minting id `vocab_size()`.
    pub(crate) fn push_merge(&mut self, pair: (u32, u32)) -> Result<()> {
        let mut joined = self
            .token_bytes(pair.0)
            .ok_or_else(|| Error::format("merge list", "special id in merge"))?
            .to_vec();
        joined.extend_from_slice(
            self.token_bytes(pair.1)
                .ok_or_else(|| Error::format("merge list", "special id in merge"))?,
        );
        if self.token_to_id.contains_key(&joined) {
            return Err(Error::format("merge list", "merge duplicates an existing token"));
        }
        let id = self.vocab_size() as u32;
        if self.merge_rank.insert(pair, id).is_some() {
            return Err(Error::format("merge list", "merge repeats an earlier pair"));
        }
        self.token_to_id.insert(joined.clone(), id);
        self.tokens.push(joined);
        self.merges.push(pair);
        Ok(())
    }

    /// Human-readable form of a token (specials by name, bytes lossily).
    pub fn token_display(&self, id: u32) -> String {
        match id {
            PAD_ID => self.specials.pad.clone(),
            UNK_ID => self.specials.unk.clone(),
            BOS_ID => self.specials.bos.clone(),
            EOS_ID => self.specials.eos.clone(),
            _ => self
                .token_bytes(id)
                .map(|b| String::from_utf8_lossy(b).into_owned())
                .unwrap_or_default(),
        }
    }
}

/// Splits normalized text into pre-tokens.
///
/// A word keeps the single whitespace character directly before it; any
/// other whitespace forms its own pre-token. Concatenating the pieces
/// reproduces the input exactly.
pub(crate) fn pre_tokenize(text: &str) -> Vec<&str> {
    let chars: Vec<(usize, char)> = text.char_indices().collect();
    let n = chars.len();
    let offset = |i: usize| if i < n { chars[i].0 } else { text.len() };
    let mut pieces = Vec::new();
    let mut i = 0;
    while i < n {
        let mut word_start = i;
        if chars[i].1.is_whitespace() {
            let mut j = i;
            while j < n && chars[j].1.is_whitespace() {
                j += 1;
            }
            if j == n {
                pieces.push(&text[offset(i)..]);
                break;
            }
            if j - 1 > i {
                pieces.push(&text[offset(i)..offset(j - 1)]);
            }
            word_start = j - 1;
            i = j;
        }
        while i < n && !chars[i].1.is_whitespace() {
            i += 1;
        }
        pieces.push(&text[offset(word_start)..offset(i)]);
    }
    pieces
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pre_tokenize_attaches_single_space() {
        assert_eq!(pre_tokenize("ab cd"), vec!["ab", " cd"]);
        assert_eq!(pre_tokenize("  ab\n\ncd  "), vec![" ", " ab", "\n", "\ncd", "  "]);
        assert_eq!(pre_tokenize(""), Vec::<&str>::new());
        assert_eq!(pre_tokenize(" "), vec![" "]);
    }

    #[test]
    fn empty_text_encodes_to_nothing() {
        let m = TokenizerModel::byte_level(SpecialTokens::default());
        assert!(m.encode("").is_empty());
        assert_eq!(m.decode(&[]).unwrap(), "");
    }

    #[test]
    fn ascii_char_is_one_base_id() {
        let m = TokenizerModel::byte_level(SpecialTokens::default());
        assert_eq!(m.vocab_size(), 260);
        assert_eq!(m.encode("q"), vec![byte_id(b'q')]);
    }

    #[test]
    fn specials_decode_to_empty() {
        let m = TokenizerModel::byte_level(SpecialTokens::default());
        assert_eq!(m.decode(&[BOS_ID, EOS_ID]).unwrap(), "");
        assert_eq!(m.decode(&[PAD_ID, byte_id(b'x'), UNK_ID]).unwrap(), "x");
    }

    #[test]
    fn out_of_range_id_is_rejected() {
        let m = TokenizerModel::byte_level(SpecialTokens::default());
        assert!(matches!(
            m.decode(&[260]),
            Err(Error::IdOutOfRange {
                id: 260,
                vocab_size: 260
            })
        ));
    }

    #[test]
    fn from_merges_rejects_forward_reference_and_duplicates() {
        let a = byte_id(b'a');
        assert!(TokenizerModel::from_merges(SpecialTokens::default(), vec![(a, 260)]).is_err());
        assert!(TokenizerModel::from_merges(SpecialTokens::default(), vec![(a, EOS_ID)]).is_err());
        // (a,a)=260, (260,a)="aaa", (a,260)="aaa" again
        let dup = vec![(a, a), (260, a), (a, 260)];
        assert!(TokenizerModel::from_merges(SpecialTokens::default(), dup).is_err());
    }

    #[test]
    fn encode_normalizes_to_nfc() {
        let m = TokenizerModel::byte_level(SpecialTokens::default());
        let decomposed = "e\u{0301}";
        assert_eq!(m.decode(&m.encode(decomposed)).unwrap(), "\u{00e9}");
    }
}
