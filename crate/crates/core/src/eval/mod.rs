//! Zero-shot evaluation: greedy generation scored with BLEU, label and
//! multiple-choice scoring by log-likelihood, and per-language reports with
//! an AVG column.

mod lm;
mod metrics;
mod report;

use std::collections::{BTreeMap, BTreeSet};
use std::io::BufRead;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::Language;
use crate::error::{Error, Result};
use crate::instruct::{
    read_jsonl, select_template, InstructionRecord, LabelMaps, MtDirection, PromptMode, Split, Task, TemplateSet,
};
use crate::tokenizer::TokenizerModel;

pub use lm::{
    argmax, encode_prompt, generate, generate_ids, score_choices, score_continuations, ChoiceScores, GenerationParams,
    LanguageModel, TransformerLm,
};
pub use metrics::{accuracy, bleu, bleu_tokenize, macro_f1, BLEU_MAX_ORDER};
pub use report::{EvalReport, ReportRow};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EvalKind {
    /// Free generation, e.g. translation.
    Generation,
    /// Picking one translated label, e.g. sentiment.
    Classification,
    /// Picking one of the listed answers.
    MultipleChoice,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Metric {
    Bleu,
    MacroF1,
    Accuracy,
}

impl Metric {
    pub fn label(self) -> &'static str {
        match self {
            Metric::Bleu => "BLEU",
            Metric::MacroF1 => "macro-F1",
            Metric::Accuracy => "accuracy",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalTask {
    pub name: String,
    pub kind: EvalKind,
    /// Which instruction records to evaluate; unused for multiple choice.
    pub task: Option<Task>,
    pub mode: PromptMode,
    pub metric: Metric,
    pub seed: u64,
    pub generation: GenerationParams,
    /// MT only: keep records of this direction.
    pub direction: Option<MtDirection>,
    /// Keep records of this split; `None` keeps all.
    pub split: Option<Split>,
    /// Classification only: pick labels by length-normalized score.
    pub normalize: bool,
}

impl EvalTask {
    /// Defaults for a task name: `mt`, `sentiment`, `topic`, or `mc` for
    /// multiple choice. The prompt mode defaults to native.
    pub fn for_name(name: &str) -> Result<Self> {
        let (kind, task, metric) = match name {
            "mt" => (EvalKind::Generation, Some(Task::Mt), Metric::Bleu),
            "sentiment" => (EvalKind::Classification, Some(Task::Sentiment), Metric::MacroF1),
            "topic" => (EvalKind::Classification, Some(Task::Topic), Metric::MacroF1),
            "mc" => (EvalKind::MultipleChoice, None, Metric::Accuracy),
            _ => {
                return Err(Error::ConfigInvalid(format!(
                    "unknown eval task {name:?}; expected mt, sentiment, topic or mc"
                )))
            }
        };
        Ok(EvalTask {
            name: name.to_string(),
            kind,
            task,
            mode: PromptMode::Native,
            metric,
            seed: 0,
            generation: GenerationParams::default(),
            direction: None,
            split: None,
            normalize: false,
        })
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match self.kind {
            EvalKind::Generation => self.metric == Metric::Bleu && self.task.is_some(),
            EvalKind::Classification => self.metric != Metric::Bleu && self.task.is_some_and(Task::has_label_map),
            EvalKind::MultipleChoice => self.metric != Metric::Bleu,
        };
        if !ok {
            return Err(Error::ConfigInvalid(format!(
                "metric {} does not fit a {:?} task",
                self.metric.label(),
                self.kind
            )));
        }
        if self.direction.is_some() && self.task != Some(Task::Mt) {
            return Err(Error::ConfigInvalid("a direction only applies to mt".into()));
        }
        if self.generation.max_new_tokens == 0 {
            return Err(Error::ConfigInvalid("max_new_tokens must be at least 1".into()));
        }
        Ok(())
    }

    fn title(&self) -> String {
        let mut t = self.name.clone();
        if let Some(d) = self.direction {
            t.push_str(match d {
                MtDirection::ToEnglish => " xxx-eng",
                MtDirection::FromEnglish => " eng-xxx",
            });
        }
        if self.kind != EvalKind::MultipleChoice {
            t.push_str(match self.mode {
                PromptMode::Native => " (native)",
                PromptMode::English => " (english)",
                PromptMode::Multiple => " (multiple)",
            });
        }
        t
    }
}

/// One multiple-choice item. The prompt is the field values in file order,
/// one per line, followed by `Answer:`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McExample {
    pub language: Language,
    pub prompt_fields: serde_json::Map<String, serde_json::Value>,
    pub choices: Vec<String>,
    pub answer_index: usize,
}

impl McExample {
    pub fn prompt(&self) -> String {
        let mut parts: Vec<String> = self
            .prompt_fields
            .values()
            .map(|v| match v {
                serde_json::Value::String(s) => s.clone(),
                other => other.to_string(),
            })
            .collect();
        parts.push("Answer:".into());
        parts.join("\n")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum EvalDataset {
    Records(Vec<InstructionRecord>),
    MultipleChoice(Vec<McExample>),
}

impl EvalDataset {
    /// Reads instruction records, or multiple-choice items for
    /// [`EvalKind::MultipleChoice`].
    pub fn load(path: &Path, kind: EvalKind) -> Result<Self> {
        match kind {
            EvalKind::MultipleChoice => {
                let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
                let mut items = Vec::new();
                for (n, line) in std::io::BufReader::new(file).lines().enumerate() {
                    let line = line.map_err(|e| Error::io(path, e))?;
                    if line.trim().is_empty() {
                        continue;
                    }
                    let item: McExample = serde_json::from_str(&line).map_err(|e| {
                        Error::CorpusMismatch(format!("{}:{}: not a multiple-choice item: {e}", path.display(), n + 1))
                    })?;
                    items.push(item);
                }
                Ok(EvalDataset::MultipleChoice(items))
            }
            _ => read_jsonl(path).map(EvalDataset::Records).map_err(|e| match e {
                Error::Format { detail, .. } => Error::CorpusMismatch(format!("not an instruction dataset: {detail}")),
                other => other,
            }),
        }
    }
}

/// Everything evaluation needs besides the task and the data.
pub struct EvalContext<'a> {
    pub model_name: String,
    pub model: &'a dyn LanguageModel,
    pub tokenizer: &'a TokenizerModel,
    pub templates: &'a TemplateSet,
    pub labels: &'a LabelMaps,
}

/// Runs a zero-shot evaluation and reports one column per language plus AVG.
pub fn evaluate(ctx: &EvalContext<'_>, task: &EvalTask, data: &EvalDataset) -> Result<EvalReport> {
    task.validate()?;
    if ctx.tokenizer.vocab_size() != ctx.model.vocab_size() {
        return Err(Error::VocabMismatch {
            id: ctx.tokenizer.vocab_size() as u32,
            vocab_size: ctx.model.vocab_size(),
        });
    }
    match (task.kind, data) {
        (EvalKind::Generation, EvalDataset::Records(r)) => eval_generation(ctx, task, r),
        (EvalKind::Classification, EvalDataset::Records(r)) => eval_classification(ctx, task, r),
        (EvalKind::MultipleChoice, EvalDataset::MultipleChoice(m)) => eval_multiple_choice(ctx, task, m),
        _ => Err(Error::CorpusMismatch(format!(
            "dataset kind does not match task {}",
            task.name
        ))),
    }
}

fn select_records<'r>(task: &EvalTask, records: &'r [InstructionRecord]) -> Result<Vec<&'r InstructionRecord>> {
    let want = task.task.expect("validated");
    let kept: Vec<&InstructionRecord> = records
        .iter()
        .filter(|r| r.task == want && task.split.is_none_or(|s| r.split == s))
        .collect();
    if kept.is_empty() {
        return Err(Error::CorpusMismatch(format!(
            "dataset has no {want} records{}",
            task.split.map(|s| format!(" in split {s:?}")).unwrap_or_default()
        )));
    }
    Ok(kept)
}

fn by_language<T>(items: impl IntoIterator<Item = (Language, T)>) -> BTreeMap<Language, Vec<T>> {
    let mut m: BTreeMap<Language, Vec<T>> = BTreeMap::new();
    for (l, x) in items {
        m.entry(l).or_default().push(x);
    }
    m
}

fn eval_generation(ctx: &EvalContext<'_>, task: &EvalTask, records: &[InstructionRecord]) -> Result<EvalReport> {
    let records = select_records(task, records)?;
    let mut rng = ChaCha8Rng::seed_from_u64(task.seed);
    let mut jobs = Vec::new();
    for r in records {
        let dir = ctx
            .templates
            .infer_direction(r.language, &r.instruction)
            .ok_or_else(|| {
                Error::CorpusMismatch(format!("cannot tell the translation direction of {:?}", r.instruction))
            })?;
        if task.direction.is_some_and(|d| d != dir) {
            continue;
        }
        let template = select_template(ctx.templates, task.mode, &mut rng, Task::Mt, r.language, Some(dir))?;
        jobs.push((r.language, template.render(&r.inputs)?, r.targets.as_str()));
    }
    if jobs.is_empty() {
        return Err(Error::CorpusMismatch(
            "no records left after the direction filter".into(),
        ));
    }
    let hyps: Vec<String> = jobs
        .par_iter()
        .map(|(_, prompt, _)| {
            generate(ctx.model, ctx.tokenizer, prompt, &task.generation).map(|s| s.trim().to_string())
        })
        .collect::<Result<_>>()?;
    let grouped = by_language(
        jobs.iter()
            .zip(&hyps)
            .map(|((l, _, gold), h)| (*l, (h.as_str(), *gold))),
    );
    let mut scores = Vec::new();
    for pairs in grouped.values() {
        let (h, g): (Vec<&str>, Vec<&str>) = pairs.iter().copied().unzip();
        scores.push(bleu(&h, &g)?);
    }
    EvalReport::new(
        &ctx.model_name,
        &task.title(),
        grouped.keys().copied().collect(),
        vec![(Metric::Bleu.label().to_string(), scores)],
    )
}

/// Verbalizers for one language: the label map's targets, or the distinct
/// gold labels when no map exists.
fn verbalizers(ctx: &EvalContext<'_>, task: Task, lang: Language, golds: &[&str]) -> Vec<String> {
    match ctx.labels.get(task, lang) {
        Some(map) => map.targets().into_iter().map(str::to_string).collect(),
        None => golds
            .iter()
            .map(|s| s.to_string())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect(),
    }
}

fn metric_rows(
    primary: Metric,
    raw: (Vec<f64>, Vec<f64>),
    norm: Option<(Vec<f64>, Vec<f64>)>,
) -> Vec<(String, Vec<f64>)> {
    let (acc, f1) = raw;
    let mut rows = match primary {
        Metric::MacroF1 => vec![("macro-F1".to_string(), f1), ("accuracy".to_string(), acc)],
        _ => vec![("accuracy".to_string(), acc), ("macro-F1".to_string(), f1)],
    };
    if let Some((acc_n, f1_n)) = norm {
        match primary {
            Metric::MacroF1 => {
                rows.push(("macro-F1 (norm)".into(), f1_n));
                rows.push(("accuracy (norm)".into(), acc_n));
            }
            _ => {
                rows.push(("accuracy (norm)".into(), acc_n));
                rows.push(("macro-F1 (norm)".into(), f1_n));
            }
        }
    }
    rows
}

fn eval_classification(ctx: &EvalContext<'_>, task: &EvalTask, records: &[InstructionRecord]) -> Result<EvalReport> {
    let which = task.task.expect("validated");
    let records = select_records(task, records)?;
    let grouped = by_language(records.iter().map(|r| (r.language, *r)));
    let mut rng = ChaCha8Rng::seed_from_u64(task.seed);
    let (mut acc, mut f1) = (Vec::new(), Vec::new());
    for (&lang, recs) in &grouped {
        let golds: Vec<&str> = recs.iter().map(|r| r.targets.as_str()).collect();
        let labels = verbalizers(ctx, which, lang, &golds);
        if let Some(bad) = golds.iter().find(|g| !labels.iter().any(|l| l == *g)) {
            return Err(Error::LabelUnknown {
                task: which.to_string(),
                language: lang.code().to_string(),
                label: bad.to_string(),
            });
        }
        let conts: Vec<String> = labels.iter().map(|l| format!(" {l}")).collect();
        let mut prompts = Vec::with_capacity(recs.len());
        for r in recs {
            let t = select_template(ctx.templates, task.mode, &mut rng, which, lang, None)?;
            prompts.push(t.render(&r.inputs)?);
        }
        let picks: Vec<String> = prompts
            .par_iter()
            .map(|p| {
                let s = score_choices(ctx.model, ctx.tokenizer, p, &conts)?;
                let i = if task.normalize { s.best_normalized } else { s.best_raw };
                Ok(labels[i].clone())
            })
            .collect::<Result<_>>()?;
        acc.push(accuracy(&picks.iter().map(String::as_str).collect::<Vec<_>>(), &golds)?);
        f1.push(macro_f1(&picks, &golds, &labels)?);
    }
    EvalReport::new(
        &ctx.model_name,
        &task.title(),
        grouped.keys().copied().collect(),
        metric_rows(task.metric, (acc, f1), None),
    )
}

fn eval_multiple_choice(ctx: &EvalContext<'_>, task: &EvalTask, items: &[McExample]) -> Result<EvalReport> {
    if items.is_empty() {
        return Err(Error::CorpusMismatch("multiple-choice dataset is empty".into()));
    }
    for (i, it) in items.iter().enumerate() {
        if it.answer_index >= it.choices.len() {
            return Err(Error::CorpusMismatch(format!(
                "item {}: answer_index {} with {} choices",
                i + 1,
                it.answer_index,
                it.choices.len()
            )));
        }
    }
    let scored: Vec<ChoiceScores> = items
        .par_iter()
        .map(|it| {
            let conts: Vec<String> = it.choices.iter().map(|c| format!(" {c}")).collect();
            score_choices(ctx.model, ctx.tokenizer, &it.prompt(), &conts)
        })
        .collect::<Result<_>>()?;
    let grouped = by_language(items.iter().zip(&scored).map(|(it, s)| (it.language, (it, s))));
    let (mut acc, mut f1, mut acc_n, mut f1_n) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for entries in grouped.values() {
        let width = entries.iter().map(|(it, _)| it.choices.len()).max().unwrap_or(0);
        let labels: Vec<String> = (0..width).map(|i| i.to_string()).collect();
        let golds: Vec<String> = entries.iter().map(|(it, _)| it.answer_index.to_string()).collect();
        let raw: Vec<String> = entries.iter().map(|(_, s)| s.best_raw.to_string()).collect();
        let norm: Vec<String> = entries.iter().map(|(_, s)| s.best_normalized.to_string()).collect();
        acc.push(accuracy(&raw, &golds)?);
        f1.push(macro_f1(&raw, &golds, &labels)?);
        acc_n.push(accuracy(&norm, &golds)?);
        f1_n.push(macro_f1(&norm, &golds, &labels)?);
    }
    EvalReport::new(
        &ctx.model_name,
        &task.title(),
        grouped.keys().copied().collect(),
        metric_rows(task.metric, (acc, f1), Some((acc_n, f1_n))),
    )
}
