use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::Task;
use crate::corpus::Language;
use crate::error::{Error, Result};

pub const INPUTS_PLACEHOLDER: &str = "{inputs}";
pub const OUTPUT_MARKER: &str = "Output:";

const BUILTIN_TEMPLATES: &str = include_str!("../../assets/templates.jsonl");
const BUILTIN_LABELS: &str = include_str!("../../assets/labels.jsonl");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PromptLanguage {
    Native,
    English,
}

/// Translation direction relative to English, the pivot language.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum MtDirection {
    /// African language into English.
    #[serde(rename = "xxx-eng")]
    ToEnglish,
    /// English into the African language.
    #[serde(rename = "eng-xxx")]
    FromEnglish,
}

impl MtDirection {
    pub const BOTH: [MtDirection; 2] = [MtDirection::ToEnglish, MtDirection::FromEnglish];

    /// `(source, target)` languages for an African language `lang`.
    pub fn languages(self, lang: Language) -> (Language, Language) {
        match self {
            MtDirection::ToEnglish => (lang, Language::Eng),
            MtDirection::FromEnglish => (Language::Eng, lang),
        }
    }

    /// Label such as `swa-eng`.
    pub fn label(self, lang: Language) -> String {
        let (s, t) = self.languages(lang);
        format!("{}-{}", s.code(), t.code())
    }

    /// Parses `swa-eng` / `eng-swa` style labels, returning the African
    /// language too.
    pub fn parse_label(label: &str) -> Result<(Language, MtDirection)> {
        let bad = || Error::ConfigInvalid(format!("bad direction {label:?}, expected e.g. swa-eng or eng-swa"));
        let (a, b) = label.split_once('-').ok_or_else(bad)?;
        let (a, b): (Language, Language) = (a.parse()?, b.parse()?);
        match (a, b) {
            (l, Language::Eng) if l.is_african() => Ok((l, MtDirection::ToEnglish)),
            (Language::Eng, l) if l.is_african() => Ok((l, MtDirection::FromEnglish)),
            _ => Err(bad()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Origin {
    Published,
    Paraphrase,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TaskTemplate {
    pub task: Task,
    pub language: Language,
    pub variant: u8,
    pub prompt_language: PromptLanguage,
    pub direction: Option<MtDirection>,
    pub origin: Origin,
    pub text: String,
}

impl TaskTemplate {
    /// Substitutes `inputs`; the rest of the template is kept byte for byte.
    pub fn render(&self, inputs: &str) -> Result<String> {
        render_text(&self.text, inputs)
    }

    /// Text before and after the `{inputs}` placeholder.
    pub fn affixes(&self) -> (&str, &str) {
        self.text.split_once(INPUTS_PLACEHOLDER).expect("validated on load")
    }
}

pub fn render_text(template: &str, inputs: &str) -> Result<String> {
    let count = template.matches(INPUTS_PLACEHOLDER).count();
    if count != 1 {
        return Err(Error::TemplateInvalid(format!(
            "template must contain {INPUTS_PLACEHOLDER} exactly once, found {count}: {template:?}"
        )));
    }
    if inputs.trim().is_empty() {
        log::warn!("rendering template with empty inputs: {template:?}");
    }
    Ok(template.replacen(INPUTS_PLACEHOLDER, inputs, 1))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct TemplateLine {
    task: Task,
    /// A language code, or `*` for an English template shared by every
    /// African language.
    language: String,
    variant: u8,
    prompt_language: PromptLanguage,
    #[serde(default)]
    direction: Option<MtDirection>,
    origin: Origin,
    text: String,
}

type TemplateKey = (Task, Language, PromptLanguage, Option<MtDirection>, u8);

/// Every prompt template, keyed by task, language, prompt language,
/// direction (MT only) and variant.
#[derive(Debug, Clone, Default)]
pub struct TemplateSet {
    templates: BTreeMap<TemplateKey, TaskTemplate>,
}

impl TemplateSet {
    pub fn builtin() -> Self {
        Self::from_jsonl(BUILTIN_TEMPLATES).expect("bundled templates are valid")
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_jsonl(&text)
    }

    /// Parses template lines. `{language}`, `{source_language}` and
    /// `{target_language}` are filled with English language names, and `*`
    /// lines are expanded for each African language.
    pub fn from_jsonl(text: &str) -> Result<Self> {
        let mut set = TemplateSet::default();
        for (n, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let raw: TemplateLine = serde_json::from_str(line)
                .map_err(|e| Error::TemplateInvalid(format!("template line {}: {e}", n + 1)))?;
            if (raw.task == Task::Mt) != raw.direction.is_some() {
                return Err(Error::TemplateInvalid(format!(
                    "template line {}: direction is required for mt and only for mt",
                    n + 1
                )));
            }
            if !(1..=4).contains(&raw.variant) {
                return Err(Error::TemplateInvalid(format!(
                    "template line {}: variant must be 1-4",
                    n + 1
                )));
            }
            let langs: Vec<Language> = if raw.language == "*" {
                Language::AFRICAN.to_vec()
            } else {
                let l: Language = raw
                    .language
                    .parse()
                    .map_err(|_| Error::TemplateInvalid(format!("template line {}: bad language", n + 1)))?;
                vec![l]
            };
            for lang in langs {
                let text = expand(&raw.text, lang, raw.direction);
                validate_text(&text).map_err(|e| Error::TemplateInvalid(format!("template line {}: {e}", n + 1)))?;
                let t = TaskTemplate {
                    task: raw.task,
                    language: lang,
                    variant: raw.variant,
                    prompt_language: raw.prompt_language,
                    direction: raw.direction,
                    origin: raw.origin,
                    text,
                };
                let key = (t.task, t.language, t.prompt_language, t.direction, t.variant);
                if set.templates.insert(key, t).is_some() {
                    return Err(Error::TemplateInvalid(format!(
                        "template line {}: duplicate template",
                        n + 1
                    )));
                }
            }
        }
        Ok(set)
    }

    pub fn get(
        &self,
        task: Task,
        language: Language,
        prompt_language: PromptLanguage,
        direction: Option<MtDirection>,
        variant: u8,
    ) -> Result<&TaskTemplate> {
        self.templates
            .get(&(task, language, prompt_language, direction, variant))
            .ok_or_else(|| {
                let dir = direction.map(|d| format!(" {}", d.label(language))).unwrap_or_default();
                Error::TemplateMissing(format!(
                    "no {prompt_language:?} template for {task}{dir} in {} (variant {variant})",
                    language.name()
                ))
            })
    }

    pub fn iter(&self) -> impl Iterator<Item = &TaskTemplate> {
        self.templates.values()
    }

    /// Direction of an MT instruction for `language`, found by matching it
    /// against every MT template's fixed prefix and suffix.
    pub fn infer_direction(&self, language: Language, instruction: &str) -> Option<MtDirection> {
        self.iter()
            .filter(|t| t.task == Task::Mt && t.language == language)
            .find(|t| {
                let (pre, post) = t.affixes();
                instruction.len() >= pre.len() + post.len()
                    && instruction.starts_with(pre)
                    && instruction.ends_with(post)
            })
            .and_then(|t| t.direction)
    }
}

fn expand(text: &str, lang: Language, direction: Option<MtDirection>) -> String {
    let mut out = text.replace("{language}", lang.name());
    if let Some(d) = direction {
        let (s, t) = d.languages(lang);
        out = out
            .replace("{source_language}", s.name())
            .replace("{target_language}", t.name());
    }
    out
}

fn validate_text(text: &str) -> std::result::Result<(), String> {
    let count = text.matches(INPUTS_PLACEHOLDER).count();
    if count != 1 {
        return Err(format!("expected one {INPUTS_PLACEHOLDER}, found {count}"));
    }
    if !text.trim_end().ends_with(OUTPUT_MARKER) {
        return Err(format!("must end with {OUTPUT_MARKER:?}"));
    }
    let stray = text.replace(INPUTS_PLACEHOLDER, "");
    if let Some(pos) = stray.find('{') {
        if stray[pos..].contains('}') {
            return Err(format!("unknown placeholder near {:?}", &stray[pos..]));
        }
    }
    Ok(())
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct LabelLine {
    task: Task,
    language: Language,
    source: String,
    target: String,
    #[allow(dead_code)]
    origin: Origin,
}

/// Source label to target-language label for one (task, language).
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LabelMap {
    forward: BTreeMap<String, String>,
    backward: BTreeMap<String, String>,
}

impl LabelMap {
    /// Source labels are matched case-insensitively.
    pub fn get(&self, source: &str) -> Option<&str> {
        self.forward.get(&source.trim().to_lowercase()).map(String::as_str)
    }

    pub fn inverse(&self, target: &str) -> Option<&str> {
        self.backward.get(target).map(String::as_str)
    }

    /// Translated labels in source-label order.
    pub fn targets(&self) -> Vec<&str> {
        self.forward.values().map(String::as_str).collect()
    }

    pub fn pairs(&self) -> impl Iterator<Item = (&str, &str)> {
        self.forward.iter().map(|(a, b)| (a.as_str(), b.as_str()))
    }
}

/// Label maps for the tasks whose labels are translated (sentiment, topic).
#[derive(Debug, Clone, Default)]
pub struct LabelMaps {
    maps: BTreeMap<(Task, Language), LabelMap>,
}

impl LabelMaps {
    pub fn builtin() -> Self {
        Self::from_jsonl(BUILTIN_LABELS).expect("bundled label maps are valid")
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_jsonl(&text)
    }

    /// Rejects maps that are not one-to-one.
    pub fn from_jsonl(text: &str) -> Result<Self> {
        let mut maps: BTreeMap<(Task, Language), LabelMap> = BTreeMap::new();
        for (n, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let raw: LabelLine =
                serde_json::from_str(line).map_err(|e| Error::TemplateInvalid(format!("label line {}: {e}", n + 1)))?;
            if !raw.task.has_label_map() {
                return Err(Error::TemplateInvalid(format!(
                    "label line {}: {} labels are not translated",
                    n + 1,
                    raw.task
                )));
            }
            let map = maps.entry((raw.task, raw.language)).or_default();
            let source = raw.source.trim().to_lowercase();
            if map.forward.insert(source.clone(), raw.target.clone()).is_some()
                || map.backward.insert(raw.target.clone(), source).is_some()
            {
                return Err(Error::TemplateInvalid(format!(
                    "label line {}: map for {} {} is not one-to-one",
                    n + 1,
                    raw.task,
                    raw.language
                )));
            }
        }
        Ok(LabelMaps { maps })
    }

    pub fn get(&self, task: Task, language: Language) -> Option<&LabelMap> {
        self.maps.get(&(task, language))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&(Task, Language), &LabelMap)> {
        self.maps.iter()
    }

    /// Translates a gold label. NER and POS labels pass through unchanged.
    pub fn map_label(&self, task: Task, language: Language, label: &str) -> Result<String> {
        if !task.has_label_map() {
            return Ok(label.to_string());
        }
        let map = self
            .get(task, language)
            .ok_or_else(|| Error::TemplateMissing(format!("no {task} label map for {}", language.name())))?;
        map.get(label).map(str::to_string).ok_or_else(|| Error::LabelUnknown {
            task: task.to_string(),
            language: language.code().to_string(),
            label: label.to_string(),
        })
    }
}
