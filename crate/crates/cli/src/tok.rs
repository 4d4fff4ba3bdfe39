use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};

use clap::Subcommand;
use inkuba::corpus::read_corpus_dir;
use inkuba::tokenizer::{train_bpe, SpecialTokens, TokenizerModel};
use inkuba::{Error, Result};

use crate::echo;

#[derive(Debug, Subcommand)]
pub enum TokCommand {
    /// Learn merges from a corpus.
    Train {
        /// Corpus directory (one subdirectory per language code) or a
        /// single text file; one document per line.
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value_t = 61788)]
        vocab_size: usize,
        /// Tokenizer file to write.
        #[arg(long)]
        out: PathBuf,
    },
    /// Print token ids, one line of ids per input line.
    Encode {
        #[arg(long)]
        tokenizer: PathBuf,
        /// Text to encode; read from stdin when absent.
        #[arg(long)]
        text: Option<String>,
    },
    /// Print the text for whitespace-separated ids, one line per input line.
    Decode {
        #[arg(long)]
        tokenizer: PathBuf,
        /// Ids to decode; read from stdin when absent.
        #[arg(long)]
        ids: Option<String>,
    },
}

/// Documents from a corpus directory or a plain text file.
pub(crate) fn read_texts(path: &Path) -> Result<Vec<String>> {
    if path.is_dir() {
        return Ok(read_corpus_dir(path)?.into_iter().map(|d| d.text).collect());
    }
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(text
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(str::to_string)
        .collect())
}

fn input_lines(inline: Option<String>) -> Result<Vec<String>> {
    match inline {
        Some(s) => Ok(vec![s]),
        None => std::io::stdin()
            .lock()
            .lines()
            .collect::<std::io::Result<_>>()
            .map_err(|e| Error::io("<stdin>", e)),
    }
}

fn parse_ids(line: &str) -> Result<Vec<u32>> {
    line.split_whitespace()
        .map(|t| {
            t.parse()
                .map_err(|_| Error::format("token ids", format!("{t:?} is not an id")))
        })
        .collect()
}

pub fn run(cmd: TokCommand) -> Result<()> {
    let mut stdout = std::io::stdout().lock();
    let io_err = |e| Error::io("<stdout>", e);
    match cmd {
        TokCommand::Train { input, vocab_size, out } => {
            echo("tok train", "input", input.display());
            echo("tok train", "vocab_size", vocab_size);
            echo("tok train", "out", out.display());
            let texts = read_texts(&input)?;
            let model = train_bpe(&texts, vocab_size, SpecialTokens::default())?;
            model.save(&out)?;
            writeln!(
                stdout,
                "vocab_size {} merges {}",
                model.vocab_size(),
                model.merges().len()
            )
            .map_err(io_err)?;
        }
        TokCommand::Encode { tokenizer, text } => {
            let model = TokenizerModel::load(&tokenizer)?;
            for line in input_lines(text)? {
                let ids: Vec<String> = model.encode(&line).iter().map(u32::to_string).collect();
                writeln!(stdout, "{}", ids.join(" ")).map_err(io_err)?;
            }
        }
        TokCommand::Decode { tokenizer, ids } => {
            let model = TokenizerModel::load(&tokenizer)?;
            for line in input_lines(ids)? {
                writeln!(stdout, "{}", model.decode(&parse_ids(&line)?)?).map_err(io_err)?;
            }
        }
    }
    Ok(())
}
