//! `bpe-v1` text format:
//!
//! ```text
//! bpe-v1 <vocab_size>
//! <pad name>
//! <unk name>
//! <bos name>
//! <eos name>
//! <left token> <right token>      (one line per merge, in order)
//! ```
//!
//! Token strings escape every byte outside `!`..=`~`, and the backslash
//! itself, as `\xNN`.

use std::fmt::Write as _;
use std::path::Path;

use super::{SpecialTokens, TokenizerModel};
use crate::error::{Error, Result};

const MAGIC: &str = "bpe-v1";

pub(crate) fn escape(bytes: &[u8]) -> String {
    let mut s = String::with_capacity(bytes.len());
    for &b in bytes {
        if (0x21..=0x7e).contains(&b) && b != b'\\' {
            s.push(b as char);
        } else {
            write!(s, "\\x{b:02X}").unwrap();
        }
    }
    s
}

pub(crate) fn unescape(s: &str) -> Result<Vec<u8>> {
    let raw = s.as_bytes();
    let mut out = Vec::with_capacity(raw.len());
    let mut i = 0;
    while i < raw.len() {
        if raw[i] == b'\\' {
            let hex = raw
                .get(i + 1..i + 4)
                .filter(|h| h[0] == b'x')
                .and_then(|h| std::str::from_utf8(&h[1..]).ok())
                .and_then(|h| u8::from_str_radix(h, 16).ok())
                .ok_or_else(|| Error::format("tokenizer file", format!("bad escape in {s:?}")))?;
            out.push(hex);
            i += 4;
        } else {
            out.push(raw[i]);
            i += 1;
        }
    }
    Ok(out)
}

impl TokenizerModel {
    pub fn to_text(&self) -> String {
        let mut s = format!("{MAGIC} {}\n", self.vocab_size());
        for name in self.specials.as_array() {
            s.push_str(&escape(name.as_bytes()));
            s.push('\n');
        }
        for &(a, b) in &self.merges {
            let left = escape(self.token_bytes(a).expect("merge ids are byte tokens"));
            let right = escape(self.token_bytes(b).expect("merge ids are byte tokens"));
            writeln!(s, "{left} {right}").unwrap();
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let bad = |detail: String| Error::format("tokenizer file", detail);
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| bad("empty file".into()))?;
        let vocab_size: usize = header
            .strip_prefix(MAGIC)
            .and_then(|rest| rest.strip_prefix(' '))
            .and_then(|n| n.trim().parse().ok())
            .ok_or_else(|| bad(format!("bad header {header:?}")))?;

        let mut names = Vec::with_capacity(4);
        for _ in 0..4 {
            let line = lines.next().ok_or_else(|| bad("missing special token line".into()))?;
            let name = String::from_utf8(unescape(line)?).map_err(|_| bad("special token name is not UTF-8".into()))?;
            names.push(name);
        }
        let specials = SpecialTokens {
            pad: names[0].clone(),
            unk: names[1].clone(),
            bos: names[2].clone(),
            eos: names[3].clone(),
        };

        // Grow the model one merge at a time so each line resolves against
        // the vocabulary that existed when the merge was learned.
        let mut model = TokenizerModel::byte_level(specials);
        for (n, line) in lines.enumerate() {
            if line.is_empty() {
                continue;
            }
            let (left, right) = line
                .split_once(' ')
                .ok_or_else(|| bad(format!("merge line {} has no separator", n + 1)))?;
            let lookup = |tok: &str| -> Result<u32> {
                let bytes = unescape(tok)?;
                model
                    .token_id(&bytes)
                    .ok_or_else(|| bad(format!("merge line {}: unknown token {tok:?}", n + 1)))
            };
            let pair = (lookup(left)?, lookup(right)?);
            model.push_merge(pair)?;
        }
        if model.vocab_size() != vocab_size {
            return Err(bad(format!(
                "header declares vocabulary {vocab_size} but merges yield {}",
                model.vocab_size()
            )));
        }
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text)
    }
}
