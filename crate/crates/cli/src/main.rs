mod bench;
mod corpus;
mod eval;
mod instruct;
mod tok;
mod train;

use std::process::ExitCode;

use clap::{Parser, Subcommand};
use inkuba::{Error, ErrorClass};
use log::LevelFilter;

/// Data preparation, tokenizer and model training, and evaluation for small
/// multilingual language models.
#[derive(Debug, Parser)]
#[command(name = "inkuba", version, propagate_version = true)]
struct Cli {
    /// Seed for every randomized step; overrides seeds in config files.
    #[arg(long, global = true)]
    seed: Option<u64>,

    #[arg(long, global = true, default_value = "warn")]
    log_level: LevelFilter,

    /// Worker threads for parallel kernels; all cores by default.
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train, apply and invert the BPE tokenizer.
    #[command(subcommand)]
    Tok(tok::TokCommand),
    /// Clean, deduplicate, count and pack a directory-per-language corpus.
    #[command(subcommand)]
    Corpus(corpus::CorpusCommand),
    /// Turn task datasets into prompted instruction records.
    #[command(subcommand)]
    Instruct(instruct::InstructCommand),
    /// Pretrain a model on packed shards.
    Train(train::TrainArgs),
    /// Greedy generation from a checkpoint.
    Generate(train::GenerateArgs),
    /// Zero-shot evaluation of a checkpoint.
    #[command(subcommand)]
    Eval(eval::EvalCommand),
    /// Micro-benchmarks.
    #[command(subcommand)]
    Bench(bench::BenchCommand),
    /// Estimate the carbon footprint of a training run.
    Carbon(bench::CarbonArgs),
}

/// Writes a resolved setting to stderr so a run can be reproduced from its
/// log.
pub(crate) fn echo(command: &str, key: &str, value: impl std::fmt::Display) {
    eprintln!("[{command}] {key} = {value}");
}

/// Echoes every line of a `key=value` config block.
pub(crate) fn echo_kv(command: &str, kv: &str) {
    for line in kv.lines() {
        if let Some((k, v)) = line.split_once('=') {
            echo(command, k, v);
        }
    }
}

fn exit_code(err: &Error) -> u8 {
    match err.class() {
        ErrorClass::User => 1,
        ErrorClass::Data => 2,
        ErrorClass::Numerical => 3,
    }
}

fn run(cli: Cli) -> inkuba::Result<()> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::ConfigInvalid(format!("cannot start {n} threads: {e}")))?;
    }
    match cli.command {
        Command::Tok(c) => tok::run(c),
        Command::Corpus(c) => corpus::run(c),
        Command::Instruct(c) => instruct::run(c, cli.seed),
        Command::Train(a) => train::run_train(a, cli.seed),
        Command::Generate(a) => train::run_generate(a),
        Command::Eval(c) => eval::run(c, cli.seed),
        Command::Bench(c) => bench::run_bench(c, cli.seed),
        Command::Carbon(a) => bench::run_carbon(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    env_logger::Builder::new()
        .filter_level(cli.log_level)
        .format_timestamp(None)
        .init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
