//! Instruction-dataset builder: turns raw task data into prompted records
//! for machine translation (both directions through English), sentiment,
//! NER, POS, QA and topic classification, then merges and splits them.

mod adapters;
mod split;
mod templates;

use std::fmt;
use std::io::{BufRead, BufReader, Write as _};
use std::path::Path;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::Language;
use crate::error::{Error, Result};

pub use adapters::{read_conll, read_labeled_csv, read_qa_jsonl, read_tsv_pairs, QaItem, TaggedSentence};
pub use split::{merge_and_split, InstructDataset, InstructStats, SplitRatios};
pub use templates::{
    render_text, LabelMap, LabelMaps, MtDirection, Origin, PromptLanguage, TaskTemplate, TemplateSet,
    INPUTS_PLACEHOLDER, OUTPUT_MARKER,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Mt,
    Sentiment,
    Ner,
    Pos,
    Qa,
    Topic,
}

impl Task {
    pub const ALL: [Task; 6] = [Task::Mt, Task::Sentiment, Task::Ner, Task::Pos, Task::Qa, Task::Topic];

    pub fn code(self) -> &'static str {
        match self {
            Task::Mt => "mt",
            Task::Sentiment => "sentiment",
            Task::Ner => "ner",
            Task::Pos => "pos",
            Task::Qa => "qa",
            Task::Topic => "topic",
        }
    }

    /// Sentiment and topic labels are translated; tag sets are not.
    pub fn has_label_map(self) -> bool {
        matches!(self, Task::Sentiment | Task::Topic)
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Task::ALL
            .into_iter()
            .find(|t| t.code() == s)
            .ok_or_else(|| Error::ConfigInvalid(format!("unknown task {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Dev,
    Test,
}

/// Which template a record is rendered with.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PromptMode {
    /// First native-language template.
    Native,
    /// First English template.
    English,
    /// One of the four native templates, drawn per record from the seed.
    Multiple,
}

impl FromStr for PromptMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "native" => Ok(PromptMode::Native),
            "english" => Ok(PromptMode::English),
            "multiple" => Ok(PromptMode::Multiple),
            _ => Err(Error::ConfigInvalid(format!("unknown prompt mode {s:?}"))),
        }
    }
}

/// Picks the template for one record. Only [`PromptMode::Multiple`] draws
/// from `rng`.
pub fn select_template<'t, R: Rng>(
    templates: &'t TemplateSet,
    mode: PromptMode,
    rng: &mut R,
    task: Task,
    language: Language,
    direction: Option<MtDirection>,
) -> Result<&'t TaskTemplate> {
    let (pl, variant) = match mode {
        PromptMode::Native => (PromptLanguage::Native, 1),
        PromptMode::English => (PromptLanguage::English, 1),
        PromptMode::Multiple => (PromptLanguage::Native, rng.gen_range(1..=4u8)),
    };
    templates.get(task, language, pl, direction, variant)
}

/// A rendered example before it is assigned to a split.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptedExample {
    pub task: Task,
    pub language: Language,
    pub instruction: String,
    pub inputs: String,
    pub targets: String,
}

/// One line of an instruction dataset. `language` is always the African
/// language, for MT records in either direction.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstructionRecord {
    pub task: Task,
    pub language: Language,
    pub instruction: String,
    pub inputs: String,
    pub targets: String,
    pub split: Split,
}

impl InstructionRecord {
    pub fn from_example(ex: PromptedExample, split: Split) -> Self {
        InstructionRecord {
            task: ex.task,
            language: ex.language,
            instruction: ex.instruction,
            inputs: ex.inputs,
            targets: ex.targets,
            split,
        }
    }
}

pub fn write_jsonl(path: &Path, records: &[InstructionRecord]) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    for r in records {
        let line = serde_json::to_string(r).expect("records serialize");
        writeln!(w, "{line}").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_jsonl(path: &Path) -> Result<Vec<InstructionRecord>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec = serde_json::from_str(&line)
            .map_err(|e| Error::format("instruction record", format!("{}:{}: {e}", path.display(), n + 1)))?;
        out.push(rec);
    }
    Ok(out)
}

/// Raw task data as read by the input adapters.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RawExamples {
    /// `(african_text, english_text)`.
    Pairs(Vec<(String, String)>),
    /// `(text, source_label)` for sentiment and topic.
    Labeled(Vec<(String, String)>),
    Tagged(Vec<TaggedSentence>),
    Qa(Vec<QaItem>),
}

/// Renders raw examples with templates chosen by a [`PromptMode`].
pub struct Builder<'a> {
    templates: &'a TemplateSet,
    labels: &'a LabelMaps,
    mode: PromptMode,
    rng: ChaCha8Rng,
}

struct Pending<'t> {
    template: &'t TaskTemplate,
    inputs: String,
    targets: String,
}

impl<'a> Builder<'a> {
    pub fn new(templates: &'a TemplateSet, labels: &'a LabelMaps, mode: PromptMode, seed: u64) -> Self {
        Builder {
            templates,
            labels,
            mode,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    fn template(&mut self, task: Task, lang: Language, dir: Option<MtDirection>) -> Result<&'a TaskTemplate> {
        select_template(self.templates, self.mode, &mut self.rng, task, lang, dir)
    }

    fn render(task: Task, language: Language, pending: Vec<Pending<'_>>) -> Result<Vec<PromptedExample>> {
        pending
            .into_par_iter()
            .map(|p| {
                Ok(PromptedExample {
                    task,
                    language,
                    instruction: p.template.render(&p.inputs)?,
                    inputs: p.inputs,
                    targets: p.targets,
                })
            })
            .collect()
    }

    fn require_african(language: Language) -> Result<()> {
        if language.is_african() {
            Ok(())
        } else {
            Err(Error::ConfigInvalid(format!(
                "instruction data is built for African languages, not {}",
                language.name()
            )))
        }
    }

    /// Two records per pair: African to English, then English to African.
    pub fn build_mt(&mut self, pairs: &[(String, String)], language: Language) -> Result<Vec<PromptedExample>> {
        Self::require_african(language)?;
        let mut pending = Vec::with_capacity(pairs.len() * 2);
        for (i, (african, english)) in pairs.iter().enumerate() {
            for (side, text) in [(language.name(), african), ("English", english)] {
                if text.trim().is_empty() {
                    return Err(Error::PairInvalid(format!("pair {}: {side} side is empty", i + 1)));
                }
            }
            for dir in MtDirection::BOTH {
                let (inputs, targets) = match dir {
                    MtDirection::ToEnglish => (african, english),
                    MtDirection::FromEnglish => (english, african),
                };
                pending.push(Pending {
                    template: self.template(Task::Mt, language, Some(dir))?,
                    inputs: inputs.clone(),
                    targets: targets.clone(),
                });
            }
        }
        Self::render(Task::Mt, language, pending)
    }

    /// Sentiment or topic examples; gold labels are translated through the
    /// label map.
    pub fn build_labeled(
        &mut self,
        task: Task,
        examples: &[(String, String)],
        language: Language,
    ) -> Result<Vec<PromptedExample>> {
        Self::require_african(language)?;
        if !task.has_label_map() {
            return Err(Error::ConfigInvalid(format!("{task} is not a labelled-text task")));
        }
        let mut pending = Vec::with_capacity(examples.len());
        for (text, label) in examples {
            pending.push(Pending {
                targets: self.labels.map_label(task, language, label)?,
                template: self.template(task, language, None)?,
                inputs: text.clone(),
            });
        }
        Self::render(task, language, pending)
    }

    /// NER or POS: inputs are the tokens joined by spaces, targets the tags.
    pub fn build_tagged(
        &mut self,
        task: Task,
        sentences: &[TaggedSentence],
        language: Language,
    ) -> Result<Vec<PromptedExample>> {
        Self::require_african(language)?;
        if !matches!(task, Task::Ner | Task::Pos) {
            return Err(Error::ConfigInvalid(format!("{task} is not a tagging task")));
        }
        let mut pending = Vec::with_capacity(sentences.len());
        for s in sentences {
            pending.push(Pending {
                template: self.template(task, language, None)?,
                inputs: s.tokens.join(" "),
                targets: s.tags.join(" "),
            });
        }
        Self::render(task, language, pending)
    }

    /// QA: inputs are the context and the question on separate lines.
    pub fn build_qa(&mut self, items: &[QaItem], language: Language) -> Result<Vec<PromptedExample>> {
        Self::require_african(language)?;
        let mut pending = Vec::with_capacity(items.len());
        for q in items {
            pending.push(Pending {
                template: self.template(Task::Qa, language, None)?,
                inputs: format!("{}\n{}", q.context, q.question),
                targets: q.answer.clone(),
            });
        }
        Self::render(Task::Qa, language, pending)
    }

    pub fn build(&mut self, task: Task, language: Language, raw: &RawExamples) -> Result<Vec<PromptedExample>> {
        match (task, raw) {
            (Task::Mt, RawExamples::Pairs(p)) => self.build_mt(p, language),
            (Task::Sentiment | Task::Topic, RawExamples::Labeled(x)) => self.build_labeled(task, x, language),
            (Task::Ner | Task::Pos, RawExamples::Tagged(s)) => self.build_tagged(task, s, language),
            (Task::Qa, RawExamples::Qa(q)) => self.build_qa(q, language),
            _ => Err(Error::ConfigInvalid(format!("input data does not fit task {task}"))),
        }
    }
}

/// Reads raw data for `task` with the matching adapter: TSV pairs for MT,
/// CoNLL for NER/POS, CSV for sentiment/topic, JSON Lines for QA.
pub fn read_raw(task: Task, path: &Path) -> Result<RawExamples> {
    Ok(match task {
        Task::Mt => RawExamples::Pairs(read_tsv_pairs(path)?),
        Task::Sentiment | Task::Topic => RawExamples::Labeled(read_labeled_csv(path)?),
        Task::Ner | Task::Pos => RawExamples::Tagged(read_conll(path)?),
        Task::Qa => RawExamples::Qa(read_qa_jsonl(path)?),
    })
}
