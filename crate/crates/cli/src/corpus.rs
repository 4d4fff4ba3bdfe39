use std::io::Write;
use std::path::PathBuf;

use clap::Subcommand;
use inkuba::corpus::{clean, compute_stats, dedup, pack, read_corpus_dir, write_corpus_dir, CleanOutcome};
use inkuba::tokenizer::{TokenizerModel, EOS_ID, PAD_ID};
use inkuba::{Error, Result};

use crate::echo;

#[derive(Debug, Subcommand)]
pub enum CorpusCommand {
    /// Normalize text and drop documents that are too short.
    Clean {
        /// Directory with one subdirectory of `.txt` files per language code.
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Drop exact duplicate documents, keeping first occurrences.
    Dedup {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Sentence and token counts per language.
    Stats {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        tokenizer: PathBuf,
        /// Also write the table to this file.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Tokenize and pack documents into fixed-length training rows.
    Pack {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        tokenizer: PathBuf,
        #[arg(long, default_value_t = 2048)]
        seq_len: usize,
        /// Documents per shard file.
        #[arg(long, default_value_t = 100_000)]
        docs_per_shard: usize,
        /// Directory for `shard-NNNNN.shard` files.
        #[arg(long)]
        out: PathBuf,
    },
}

pub fn run(cmd: CorpusCommand) -> Result<()> {
    let mut stdout = std::io::stdout().lock();
    let io_err = |e| Error::io("<stdout>", e);
    match cmd {
        CorpusCommand::Clean { input, out } => {
            echo("corpus clean", "input", input.display());
            echo("corpus clean", "out", out.display());
            let mut kept = Vec::new();
            let mut rejected = 0usize;
            for doc in read_corpus_dir(&input)? {
                match clean(doc) {
                    CleanOutcome::Kept(d) => kept.push(d),
                    CleanOutcome::Rejected { reason } => {
                        log::debug!("rejected: {reason}");
                        rejected += 1;
                    }
                }
            }
            write_corpus_dir(&out, &kept)?;
            writeln!(stdout, "kept {} rejected {rejected}", kept.len()).map_err(io_err)?;
        }
        CorpusCommand::Dedup { input, out } => {
            echo("corpus dedup", "input", input.display());
            echo("corpus dedup", "out", out.display());
            let docs = read_corpus_dir(&input)?;
            let before = docs.len();
            let kept: Vec<_> = dedup(docs).collect();
            write_corpus_dir(&out, &kept)?;
            writeln!(stdout, "kept {} dropped {}", kept.len(), before - kept.len()).map_err(io_err)?;
        }
        CorpusCommand::Stats { input, tokenizer, out } => {
            echo("corpus stats", "input", input.display());
            echo("corpus stats", "tokenizer", tokenizer.display());
            let tok = TokenizerModel::load(&tokenizer)?;
            let docs = read_corpus_dir(&input)?;
            let table = compute_stats(&docs, &tok).render_table();
            if let Some(path) = out {
                std::fs::write(&path, &table).map_err(|e| Error::io(&path, e))?;
            }
            write!(stdout, "{table}").map_err(io_err)?;
        }
        CorpusCommand::Pack {
            input,
            tokenizer,
            seq_len,
            docs_per_shard,
            out,
        } => {
            for (k, v) in [
                ("input", input.display().to_string()),
                ("tokenizer", tokenizer.display().to_string()),
                ("seq_len", seq_len.to_string()),
                ("docs_per_shard", docs_per_shard.to_string()),
                ("out", out.display().to_string()),
            ] {
                echo("corpus pack", k, v);
            }
            if docs_per_shard == 0 {
                return Err(Error::ConfigInvalid("docs_per_shard must be at least 1".into()));
            }
            let tok = TokenizerModel::load(&tokenizer)?;
            let docs = read_corpus_dir(&input)?;
            let ids: Vec<Vec<u32>> = docs.iter().map(|d| tok.encode(&d.text)).collect();
            std::fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
            let (mut rows, mut real) = (0usize, 0usize);
            for (i, chunk) in ids.chunks(docs_per_shard).enumerate() {
                let shard = pack(chunk, seq_len, EOS_ID, PAD_ID)?;
                rows += shard.rows();
                real += shard.real_tokens();
                shard.save(&out.join(format!("shard-{i:05}.shard")))?;
            }
            writeln!(stdout, "documents {} rows {rows} tokens {real}", docs.len()).map_err(io_err)?;
        }
    }
    Ok(())
}
