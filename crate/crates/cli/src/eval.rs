use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Subcommand, ValueEnum};
use inkuba::eval::{evaluate, EvalContext, EvalDataset, EvalTask, LanguageModel, TransformerLm};
use inkuba::instruct::{MtDirection, PromptMode, Split};
use inkuba::tokenizer::TokenizerModel;
use inkuba::train::Checkpoint;
use inkuba::{Error, Result};

use crate::echo;
use crate::instruct::{load_labels, load_templates};

#[derive(Debug, Subcommand)]
pub enum EvalCommand {
    /// Score a checkpoint on one task and print the per-language report.
    Run(RunArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Direction {
    #[value(name = "xxx-eng")]
    ToEnglish,
    #[value(name = "eng-xxx")]
    FromEnglish,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum SplitArg {
    Train,
    Dev,
    Test,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// mt, sentiment, topic, or mc for multiple choice.
    #[arg(long)]
    task: String,
    #[arg(long, default_value = "native")]
    mode: PromptMode,
    /// Checkpoint file.
    #[arg(long)]
    model: PathBuf,
    /// Instruction records (JSON Lines), or choice items for mc.
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    tokenizer: PathBuf,
    /// Only evaluate MT records of this direction.
    #[arg(long, value_enum)]
    direction: Option<Direction>,
    /// Only evaluate records of this split.
    #[arg(long, value_enum)]
    split: Option<SplitArg>,
    /// Rank classification labels by per-token score.
    #[arg(long)]
    normalize: bool,
    #[arg(long, default_value_t = 64)]
    max_new_tokens: usize,
    #[arg(long)]
    templates: Option<PathBuf>,
    #[arg(long)]
    labels: Option<PathBuf>,
    /// Write the report as CSV here.
    #[arg(long)]
    csv: Option<PathBuf>,
    /// Write the text table here as well as to stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

pub fn run(cmd: EvalCommand, seed: Option<u64>) -> Result<()> {
    let EvalCommand::Run(a) = cmd;
    let mut task = EvalTask::for_name(&a.task)?;
    task.mode = a.mode;
    task.seed = seed.unwrap_or(0);
    task.normalize = a.normalize;
    task.generation.max_new_tokens = a.max_new_tokens;
    task.direction = a.direction.map(|d| match d {
        Direction::ToEnglish => MtDirection::ToEnglish,
        Direction::FromEnglish => MtDirection::FromEnglish,
    });
    task.split = a.split.map(|s| match s {
        SplitArg::Train => Split::Train,
        SplitArg::Dev => Split::Dev,
        SplitArg::Test => Split::Test,
    });
    task.validate()?;
    let name = "eval run";
    echo(name, "task", &task.name);
    echo(name, "mode", format!("{:?}", task.mode).to_lowercase());
    echo(name, "model", a.model.display());
    echo(name, "data", a.data.display());
    echo(name, "tokenizer", a.tokenizer.display());
    echo(name, "direction", format!("{:?}", task.direction));
    echo(name, "split", format!("{:?}", task.split));
    echo(name, "normalize", task.normalize);
    echo(name, "max_new_tokens", task.generation.max_new_tokens);
    echo(name, "seed", task.seed);

    let templates = load_templates(a.templates.as_deref())?;
    let labels = load_labels(a.labels.as_deref())?;
    let tokenizer = TokenizerModel::load(&a.tokenizer)?;
    let data = EvalDataset::load(&a.data, task.kind)?;
    let lm = TransformerLm::new(Checkpoint::load(&a.model)?.params);
    let model_name = a
        .model
        .file_stem()
        .map_or_else(|| "model".to_string(), |s| s.to_string_lossy().into_owned());
    log::info!("model has {} vocabulary entries", lm.vocab_size());
    let ctx = EvalContext {
        model_name,
        model: &lm,
        tokenizer: &tokenizer,
        templates: &templates,
        labels: &labels,
    };
    let report = evaluate(&ctx, &task, &data)?;
    let table = report.render_table();
    if let Some(path) = &a.csv {
        std::fs::write(path, report.to_csv()).map_err(|e| Error::io(path, e))?;
    }
    if let Some(path) = &a.out {
        std::fs::write(path, &table).map_err(|e| Error::io(path, e))?;
    }
    write!(std::io::stdout(), "{table}").map_err(|e| Error::io("<stdout>", e))
}
