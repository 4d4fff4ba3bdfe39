use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::sync::OnceLock;

use regex::Regex;

use super::{CorpusDocument, Language};
use crate::tokenizer::TokenizerModel;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct LanguageCounts {
    pub sentences: u64,
    pub tokens: u64,
}

impl std::ops::AddAssign for LanguageCounts {
    fn add_assign(&mut self, o: Self) {
        self.sentences += o.sentences;
        self.tokens += o.tokens;
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CorpusStats {
    pub per_language: BTreeMap<Language, LanguageCounts>,
}

/// Sentences are the non-blank pieces left after splitting on runs of
/// `.`, `?`, `!` and on newlines.
pub fn count_sentences(text: &str) -> u64 {
    static SPLIT: OnceLock<Regex> = OnceLock::new();
    let re = SPLIT.get_or_init(|| Regex::new(r"[.?!]+|\n").unwrap());
    re.split(text).filter(|s| !s.trim().is_empty()).count() as u64
}

pub fn compute_stats<'a, I>(docs: I, tokenizer: &TokenizerModel) -> CorpusStats
where
    I: IntoIterator<Item = &'a CorpusDocument>,
{
    let mut stats = CorpusStats::default();
    for doc in docs {
        *stats.per_language.entry(doc.language).or_default() += LanguageCounts {
            sentences: count_sentences(&doc.text),
            tokens: tokenizer.encode(&doc.text).len() as u64,
        };
    }
    stats
}

impl CorpusStats {
    pub fn get(&self, lang: Language) -> LanguageCounts {
        self.per_language.get(&lang).copied().unwrap_or_default()
    }

    pub fn african_only(&self) -> LanguageCounts {
        let mut acc = LanguageCounts::default();
        for l in Language::AFRICAN {
            acc += self.get(l);
        }
        acc
    }

    pub fn total(&self) -> LanguageCounts {
        let mut acc = LanguageCounts::default();
        for c in self.per_language.values() {
            acc += *c;
        }
        acc
    }

    /// Rows in table order: five African languages, "African only",
    /// English, French, "Total".
    pub fn rows(&self) -> Vec<(String, LanguageCounts)> {
        let mut rows: Vec<(String, LanguageCounts)> = Language::AFRICAN
            .iter()
            .map(|&l| (l.name().to_string(), self.get(l)))
            .collect();
        rows.push(("African only".into(), self.african_only()));
        rows.push((Language::Eng.name().into(), self.get(Language::Eng)));
        rows.push((Language::Fra.name().into(), self.get(Language::Fra)));
        rows.push(("Total".into(), self.total()));
        rows
    }

    pub fn render_table(&self) -> String {
        let rows = self.rows();
        let name_w = rows
            .iter()
            .map(|(n, _)| n.chars().count())
            .max()
            .unwrap_or(0)
            .max("Language".len());
        let sent_w = rows
            .iter()
            .map(|(_, c)| c.sentences.to_string().len())
            .max()
            .unwrap_or(0)
            .max("Number of sentences".len());
        let tok_w = rows
            .iter()
            .map(|(_, c)| c.tokens.to_string().len())
            .max()
            .unwrap_or(0)
            .max("Tokens".len());
        let rule = "-".repeat(name_w + sent_w + tok_w + 6);
        let mut s = String::new();
        writeln!(
            s,
            "{:<name_w$} | {:>sent_w$} | {:>tok_w$}",
            "Language", "Number of sentences", "Tokens"
        )
        .unwrap();
        writeln!(s, "{rule}").unwrap();
        for (name, c) in rows {
            if name == "African only" || name == "Total" {
                writeln!(s, "{rule}").unwrap();
            }
            writeln!(s, "{name:<name_w$} | {:>sent_w$} | {:>tok_w$}", c.sentences, c.tokens).unwrap();
        }
        s
    }
}
