use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Subcommand};
use inkuba::corpus::Language;
use inkuba::instruct::{
    merge_and_split, read_raw, write_jsonl, Builder, LabelMaps, PromptMode, SplitRatios, Task, TemplateSet,
};
use inkuba::{Error, Result};

use crate::echo;

#[derive(Debug, Subcommand)]
pub enum InstructCommand {
    /// Render one task dataset into train/dev/test instruction records.
    Build(BuildArgs),
}

#[derive(Debug, Args)]
pub struct BuildArgs {
    /// mt, sentiment, ner, pos, qa or topic.
    #[arg(long)]
    task: Task,
    /// African language code of the dataset, e.g. swa.
    #[arg(long)]
    lang: Language,
    #[arg(long, default_value = "native")]
    mode: PromptMode,
    /// Raw task data: TSV pairs (mt), text,label CSV (sentiment, topic),
    /// CoNLL (ner, pos) or JSON Lines (qa).
    #[arg(long)]
    input: PathBuf,
    /// JSON Lines file of records, train then dev then test.
    #[arg(long)]
    out: PathBuf,
    /// Template file replacing the built-in templates.
    #[arg(long)]
    templates: Option<PathBuf>,
    /// Label-map file replacing the built-in label maps.
    #[arg(long)]
    labels: Option<PathBuf>,
    /// `train,dev,test` fractions, or `released`.
    #[arg(long, default_value = "0.8,0.1,0.1")]
    split_ratios: SplitRatios,
}

pub(crate) fn load_templates(path: Option<&Path>) -> Result<TemplateSet> {
    path.map_or_else(|| Ok(TemplateSet::builtin()), TemplateSet::load)
}

pub(crate) fn load_labels(path: Option<&Path>) -> Result<LabelMaps> {
    path.map_or_else(|| Ok(LabelMaps::builtin()), LabelMaps::load)
}

pub fn run(cmd: InstructCommand, seed: Option<u64>) -> Result<()> {
    let InstructCommand::Build(a) = cmd;
    let seed = seed.unwrap_or(0);
    let name = "instruct build";
    echo(name, "task", a.task);
    echo(name, "lang", a.lang);
    echo(name, "mode", format!("{:?}", a.mode).to_lowercase());
    echo(name, "input", a.input.display());
    echo(name, "out", a.out.display());
    echo(
        name,
        "split_ratios",
        format!(
            "{},{},{}",
            a.split_ratios.train, a.split_ratios.dev, a.split_ratios.test
        ),
    );
    echo(name, "seed", seed);
    let templates = load_templates(a.templates.as_deref())?;
    let labels = load_labels(a.labels.as_deref())?;
    let raw = read_raw(a.task, &a.input)?;
    let examples = Builder::new(&templates, &labels, a.mode, seed).build(a.task, a.lang, &raw)?;
    let dataset = merge_and_split(examples, a.split_ratios, seed)?;
    write_jsonl(&a.out, &dataset.records)?;
    write!(std::io::stdout(), "{}", dataset.stats.render_table()).map_err(|e| Error::io("<stdout>", e))?;
    Ok(())
}
