use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;

/// Languages of the pretraining mix: five African languages plus English
/// and French.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Language {
    Hau,
    Yor,
    Swa,
    Zul,
    Xho,
    Eng,
    Fra,
}

impl Language {
    /// Table order: the African languages first, then English and French.
    pub const ALL: [Language; 7] = [
        Language::Hau,
        Language::Yor,
        Language::Swa,
        Language::Zul,
        Language::Xho,
        Language::Eng,
        Language::Fra,
    ];

    pub const AFRICAN: [Language; 5] = [
        Language::Hau,
        Language::Yor,
        Language::Swa,
        Language::Zul,
        Language::Xho,
    ];

    pub fn code(self) -> &'static str {
        match self {
            Language::Hau => "hau",
            Language::Yor => "yor",
            Language::Swa => "swa",
            Language::Zul => "zul",
            Language::Xho => "xho",
            Language::Eng => "eng",
            Language::Fra => "fra",
        }
    }

    /// English display name, as used in prompts and tables.
    pub fn name(self) -> &'static str {
        match self {
            Language::Hau => "Hausa",
            Language::Yor => "Yoruba",
            Language::Swa => "Swahili",
            Language::Zul => "isiZulu",
            Language::Xho => "isiXhosa",
            Language::Eng => "English",
            Language::Fra => "French",
        }
    }

    pub fn is_african(self) -> bool {
        Self::AFRICAN.contains(&self)
    }
}

impl fmt::Display for Language {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl FromStr for Language {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        Language::ALL
            .into_iter()
            .find(|l| l.code() == s)
            .ok_or_else(|| Error::ConfigInvalid(format!("unknown language code {s:?}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn codes_roundtrip() {
        for l in Language::ALL {
            assert_eq!(l.code().parse::<Language>().unwrap(), l);
            assert_eq!(serde_json::to_string(&l).unwrap(), format!("\"{}\"", l.code()));
        }
        assert!("xyz".parse::<Language>().is_err());
        assert_eq!(Language::ALL.iter().filter(|l| l.is_african()).count(), 5);
    }
}
