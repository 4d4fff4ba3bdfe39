//! Monolingual corpus preparation: cleaning, exact deduplication,
//! per-language statistics and packing into fixed-length training shards.

mod language;
mod shard;
mod stats;

use std::collections::HashSet;
use std::path::Path;

use sha2::{Digest, Sha256};
use unicode_normalization::UnicodeNormalization;

use crate::error::{Error, Result};

pub use language::Language;
pub use shard::{pack, Shard, ShardSet};
pub use stats::{compute_stats, count_sentences, CorpusStats, LanguageCounts};

/// Minimum number of whitespace-delimited words a cleaned document needs.
pub const MIN_WORDS: usize = 3;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CorpusDocument {
    pub text: String,
    pub language: Language,
    pub source: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CleanOutcome {
    Kept(CorpusDocument),
    Rejected { reason: String },
}

impl CleanOutcome {
    pub fn kept(self) -> Option<CorpusDocument> {
        match self {
            CleanOutcome::Kept(doc) => Some(doc),
            CleanOutcome::Rejected { .. } => None,
        }
    }
}

/// NFC-normalizes, strips control characters, collapses whitespace, and
/// rejects documents with fewer than [`MIN_WORDS`] words.
pub fn clean(doc: CorpusDocument) -> CleanOutcome {
    // controls go first: one between a letter and its combining mark would
    // otherwise block composition
    let normalized: String = doc
        .text
        .chars()
        .filter(|c| !c.is_control() || c.is_whitespace())
        .nfc()
        .collect();
    let words: Vec<&str> = normalized.split_whitespace().collect();
    if words.len() < MIN_WORDS {
        return CleanOutcome::Rejected {
            reason: format!("{} word(s), need {MIN_WORDS}", words.len()),
        };
    }
    CleanOutcome::Kept(CorpusDocument {
        text: words.join(" "),
        ..doc
    })
}

/// Streaming exact-duplicate filter keyed on the SHA-256 of the text.
#[derive(Debug, Default)]
pub struct Deduplicator {
    seen: HashSet<[u8; 32]>,
}

impl Deduplicator {
    pub fn new() -> Self {
        Self::default()
    }

    /// `true` the first time a text is seen.
    pub fn admit(&mut self, text: &str) -> bool {
        let digest: [u8; 32] = Sha256::digest(text.as_bytes()).into();
        self.seen.insert(digest)
    }
}

/// Drops repeated documents, keeping first occurrences in order.
pub fn dedup<I>(docs: I) -> impl Iterator<Item = CorpusDocument>
where
    I: IntoIterator<Item = CorpusDocument>,
{
    let mut filter = Deduplicator::new();
    docs.into_iter().filter(move |d| filter.admit(&d.text))
}

/// Reads `<dir>/<language code>/*.txt`, one document per non-empty line.
/// Languages come back in table order, files sorted by name.
pub fn read_corpus_dir(dir: &Path) -> Result<Vec<CorpusDocument>> {
    let mut docs = Vec::new();
    let mut found_any = false;
    for lang in Language::ALL {
        let sub = dir.join(lang.code());
        if !sub.is_dir() {
            continue;
        }
        found_any = true;
        let mut files: Vec<_> = std::fs::read_dir(&sub)
            .map_err(|e| Error::io(&sub, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "txt"))
            .collect();
        files.sort();
        for file in files {
            let text = std::fs::read_to_string(&file).map_err(|e| Error::io(&file, e))?;
            let source = file.display().to_string();
            docs.extend(
                text.lines()
                    .filter(|l| !l.trim().is_empty())
                    .map(|line| CorpusDocument {
                        text: line.to_string(),
                        language: lang,
                        source: source.clone(),
                    }),
            );
        }
    }
    if !found_any {
        return Err(Error::CorpusMismatch(format!(
            "{} has no language subdirectories (expected e.g. {}/swa)",
            dir.display(),
            dir.display()
        )));
    }
    Ok(docs)
}

/// Writes documents back out as `<dir>/<code>/corpus.txt`.
pub fn write_corpus_dir(dir: &Path, docs: &[CorpusDocument]) -> Result<()> {
    for lang in Language::ALL {
        let lines: Vec<&str> = docs
            .iter()
            .filter(|d| d.language == lang)
            .map(|d| d.text.as_str())
            .collect();
        if lines.is_empty() {
            continue;
        }
        let sub = dir.join(lang.code());
        std::fs::create_dir_all(&sub).map_err(|e| Error::io(&sub, e))?;
        let path = sub.join("corpus.txt");
        let mut body = lines.join("\n");
        body.push('\n');
        std::fs::write(&path, body).map_err(|e| Error::io(&path, e))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn doc(text: &str) -> CorpusDocument {
        CorpusDocument {
            text: text.into(),
            language: Language::Swa,
            source: "test".into(),
        }
    }

    #[test]
    fn collapses_whitespace() {
        assert_eq!(clean(doc("a  b\tc")).kept().unwrap().text, "a b c");
        assert_eq!(clean(doc("  a\u{0007}b c\r\n d ")).kept().unwrap().text, "ab c d");
    }

    #[test]
    fn rejects_short() {
        assert!(matches!(clean(doc("hi")), CleanOutcome::Rejected { .. }));
        assert!(matches!(clean(doc("two words")), CleanOutcome::Rejected { .. }));
        assert!(clean(doc("now three words")).kept().is_some());
    }

    #[test]
    fn nfd_yoruba_matches_nfc() {
        let nfc = "Ọjọ́ àìkú ni òní";
        let nfd: String = nfc.nfd().collect();
        assert_ne!(nfc.as_bytes(), nfd.as_bytes());
        let a = clean(doc(nfc)).kept().unwrap();
        let b = clean(doc(&nfd)).kept().unwrap();
        assert_eq!(a.text.as_bytes(), b.text.as_bytes());
        assert_eq!(a.text, nfc);
    }

    #[test]
    fn dedup_keeps_first() {
        let out: Vec<_> = dedup(vec![doc("x y z"), doc("x y z"), doc("p q r")]).collect();
        assert_eq!(out, vec![doc("x y z"), doc("p q r")]);
        assert_eq!(dedup(Vec::new()).count(), 0);
    }
}
