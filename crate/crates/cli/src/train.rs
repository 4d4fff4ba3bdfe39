use std::io::Write;
use std::path::PathBuf;

use clap::Args;
use inkuba::corpus::ShardSet;
use inkuba::eval::{generate, GenerationParams, TransformerLm};
use inkuba::model::ModelConfig;
use inkuba::tokenizer::TokenizerModel;
use inkuba::train::{latest_checkpoint, Checkpoint, TrainConfig, TrainState, Trainer};
use inkuba::{Error, Result};

use crate::{echo, echo_kv};

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// `key=value` model configuration.
    #[arg(long, env = "INKUBA_MODEL_CONFIG")]
    model_config: PathBuf,
    /// `key=value` training configuration.
    #[arg(long, env = "INKUBA_TRAIN_CONFIG")]
    train_config: PathBuf,
    /// Directory of `.shard` files.
    #[arg(long)]
    data: PathBuf,
    /// Run directory for `trace.csv` and checkpoints.
    #[arg(long)]
    out: PathBuf,
    /// Continue from the latest checkpoint in the run directory.
    #[arg(long)]
    resume: bool,
}

pub fn run_train(a: TrainArgs, seed: Option<u64>) -> Result<()> {
    let name = "train";
    let model = ModelConfig::load(&a.model_config)?;
    let mut cfg = TrainConfig::load(&a.train_config)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    echo(name, "data", a.data.display());
    echo(name, "out", a.out.display());
    echo(name, "resume", a.resume);
    echo_kv(name, &model.to_kv());
    echo_kv(name, &cfg.to_kv());
    let data = ShardSet::load_dir(&a.data)?;
    let mut trainer = Trainer::new(model.clone(), cfg, &data)?;
    let mut state = match (a.resume, latest_checkpoint(&a.out)?) {
        (true, Some(path)) => {
            let ck = Checkpoint::load(&path)?;
            if ck.config() != &model {
                return Err(Error::ConfigInvalid(format!(
                    "{} was trained with a different model configuration",
                    path.display()
                )));
            }
            echo(name, "resumed_from", path.display());
            TrainState::from_checkpoint(ck)
        }
        (true, None) => {
            log::warn!("no checkpoint in {}; starting fresh", a.out.display());
            trainer.fresh_state()
        }
        (false, _) => trainer.fresh_state(),
    };
    let trace = trainer.run(&mut state, Some(&a.out))?;
    let mut stdout = std::io::stdout().lock();
    match trace.last() {
        Some(r) => writeln!(stdout, "step {} loss {:.6} lr {:.6e}", r.step, r.loss, r.lr),
        None => writeln!(stdout, "already at step {}", state.step),
    }
    .map_err(|e| Error::io("<stdout>", e))
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    /// Checkpoint file.
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    tokenizer: PathBuf,
    #[arg(long)]
    prompt: String,
    #[arg(long, default_value_t = 64)]
    max_new_tokens: usize,
    /// Stop before this text; repeatable. Defaults to a newline.
    #[arg(long = "stop")]
    stop_sequences: Vec<String>,
}

pub fn run_generate(a: GenerateArgs) -> Result<()> {
    let params = GenerationParams {
        max_new_tokens: a.max_new_tokens,
        stop_sequences: if a.stop_sequences.is_empty() {
            GenerationParams::default().stop_sequences
        } else {
            a.stop_sequences
        },
    };
    echo("generate", "model", a.model.display());
    echo("generate", "tokenizer", a.tokenizer.display());
    echo("generate", "max_new_tokens", params.max_new_tokens);
    echo("generate", "stop", format!("{:?}", params.stop_sequences));
    let tok = TokenizerModel::load(&a.tokenizer)?;
    let lm = TransformerLm::new(Checkpoint::load(&a.model)?.params);
    let text = generate(&lm, &tok, &a.prompt, &params)?;
    writeln!(std::io::stdout(), "{text}").map_err(|e| Error::io("<stdout>", e))
}
