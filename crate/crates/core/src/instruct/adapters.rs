use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TaggedSentence {
    pub tokens: Vec<String>,
    pub tags: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QaItem {
    pub question: String,
    pub context: String,
    pub answer: String,
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// Two tab-separated columns per line: African text, English text.
pub fn read_tsv_pairs(path: &Path) -> Result<Vec<(String, String)>> {
    let text = read(path)?;
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let (a, b) = line
            .split_once('\t')
            .ok_or_else(|| Error::format("tsv pairs", format!("{}:{}: missing tab", path.display(), n + 1)))?;
        if b.contains('\t') {
            return Err(Error::format(
                "tsv pairs",
                format!("{}:{}: more than two columns", path.display(), n + 1),
            ));
        }
        out.push((a.trim().to_string(), b.trim().to_string()));
    }
    Ok(out)
}

/// Token-per-line CoNLL: the first column is the token and the last the
/// tag; blank lines end sentences and `-DOCSTART-` lines are skipped.
pub fn read_conll(path: &Path) -> Result<Vec<TaggedSentence>> {
    let text = read(path)?;
    let mut out = Vec::new();
    let mut cur = TaggedSentence {
        tokens: Vec::new(),
        tags: Vec::new(),
    };
    let flush = |cur: &mut TaggedSentence, out: &mut Vec<TaggedSentence>| {
        if !cur.tokens.is_empty() {
            out.push(std::mem::replace(
                cur,
                TaggedSentence {
                    tokens: Vec::new(),
                    tags: Vec::new(),
                },
            ));
        }
    };
    for (n, line) in text.lines().enumerate() {
        let cols: Vec<&str> = line.split_whitespace().collect();
        if cols.is_empty() {
            flush(&mut cur, &mut out);
            continue;
        }
        if cols[0] == "-DOCSTART-" {
            continue;
        }
        if cols.len() < 2 {
            return Err(Error::format(
                "conll",
                format!("{}:{}: expected token and tag", path.display(), n + 1),
            ));
        }
        cur.tokens.push(cols[0].to_string());
        cur.tags.push(cols[cols.len() - 1].to_string());
    }
    flush(&mut cur, &mut out);
    Ok(out)
}

/// CSV with a header containing `text` and `label` columns.
pub fn read_labeled_csv(path: &Path) -> Result<Vec<(String, String)>> {
    let bad = |e: csv::Error| Error::format("labelled csv", format!("{}: {e}", path.display()));
    let mut rdr = csv::Reader::from_path(path).map_err(bad)?;
    let headers = rdr.headers().map_err(bad)?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h.trim().eq_ignore_ascii_case(name))
            .ok_or_else(|| Error::format("labelled csv", format!("{}: no {name:?} column", path.display())))
    };
    let (ti, li) = (col("text")?, col("label")?);
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(bad)?;
        out.push((rec[ti].to_string(), rec[li].to_string()));
    }
    Ok(out)
}

/// JSON Lines of `{question, context, answer}`.
pub fn read_qa_jsonl(path: &Path) -> Result<Vec<QaItem>> {
    let text = read(path)?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(n, l)| {
            serde_json::from_str(l).map_err(|e| Error::format("qa jsonl", format!("{}:{}: {e}", path.display(), n + 1)))
        })
        .collect()
}
