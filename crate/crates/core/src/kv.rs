//! Flat `key=value` config files. Blank lines and `#` comments are ignored.

use std::collections::HashSet;
use std::str::FromStr;

use crate::error::{Error, Result};

pub fn parse(text: &str) -> Result<Vec<(String, String)>> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| Error::ConfigInvalid(format!("line {}: expected key=value, got {line:?}", n + 1)))?;
        let key = key.trim().to_string();
        if !seen.insert(key.clone()) {
            return Err(Error::ConfigInvalid(format!("line {}: duplicate key {key:?}", n + 1)));
        }
        out.push((key, value.trim().to_string()));
    }
    Ok(out)
}

pub fn value<T: FromStr>(key: &str, raw: &str) -> Result<T> {
    raw.parse()
        .map_err(|_| Error::ConfigInvalid(format!("bad value {raw:?} for {key}")))
}
