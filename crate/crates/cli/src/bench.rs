use std::io::Write;
use std::time::Instant;

use clap::{Args, Subcommand};
use inkuba::attention::{
    naive_attention, naive_buffer_bytes, streaming_attention, streaming_buffer_bytes, AttentionInputs,
};
use inkuba::train::{estimate_carbon, CarbonQuery};
use inkuba::{Error, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::echo;

#[derive(Debug, Subcommand)]
pub enum BenchCommand {
    /// Time naive against streaming attention on random inputs.
    Attention {
        #[arg(long, default_value_t = 1024)]
        seq: usize,
        #[arg(long, default_value_t = 64)]
        tile: usize,
        #[arg(long, default_value_t = 8)]
        heads: usize,
        #[arg(long, default_value_t = 64)]
        head_dim: usize,
        /// Timed repetitions; the fastest is reported.
        #[arg(long, default_value_t = 3)]
        reps: usize,
    },
}

fn fastest(reps: usize, mut f: impl FnMut() -> Vec<f32>) -> (f64, Vec<f32>) {
    let mut best = f64::INFINITY;
    let mut out = Vec::new();
    for _ in 0..reps.max(1) {
        let start = Instant::now();
        out = f();
        best = best.min(start.elapsed().as_secs_f64());
    }
    (best, out)
}

pub fn run_bench(cmd: BenchCommand, seed: Option<u64>) -> Result<()> {
    let BenchCommand::Attention {
        seq,
        tile,
        heads,
        head_dim,
        reps,
    } = cmd;
    let seed = seed.unwrap_or(0);
    for (k, v) in [
        ("seq", seq),
        ("tile", tile),
        ("heads", heads),
        ("head_dim", head_dim),
        ("reps", reps),
    ] {
        echo("bench attention", k, v);
    }
    echo("bench attention", "seed", seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = heads * seq * head_dim;
    let mut draw = || (0..n).map(|_| rng.gen_range(-1.0f32..1.0)).collect::<Vec<_>>();
    let (q, k, v) = (draw(), draw(), draw());
    let inp = AttentionInputs::new(heads, seq, head_dim, q, k, v)?;
    let (t_naive, naive) = fastest(reps, || naive_attention(&inp));
    let (t_stream, stream) = fastest(reps, || streaming_attention(&inp, tile));
    let diff = naive
        .iter()
        .zip(&stream)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0f32, f32::max);
    let mut out = std::io::stdout().lock();
    let io_err = |e| Error::io("<stdout>", e);
    writeln!(out, "kernel     seconds    buffer_bytes_per_head").map_err(io_err)?;
    writeln!(out, "naive      {t_naive:<10.6} {}", naive_buffer_bytes::<f32>(seq)).map_err(io_err)?;
    writeln!(
        out,
        "streaming  {t_stream:<10.6} {}",
        streaming_buffer_bytes::<f32>(tile, head_dim)
    )
    .map_err(io_err)?;
    writeln!(out, "max_abs_diff {diff:e}").map_err(io_err)
}

#[derive(Debug, Args)]
pub struct CarbonArgs {
    #[arg(long)]
    gpus: f64,
    /// Wall-clock hours.
    #[arg(long)]
    hours: f64,
    /// Average draw per device in kW.
    #[arg(long)]
    power_kw: f64,
    #[arg(long, default_value_t = 1.0)]
    pue: f64,
    /// Grid carbon intensity in kgCO2e per kWh.
    #[arg(long, default_value_t = 0.0)]
    intensity: f64,
    /// Also report the intensity at which the run emits this many kg.
    #[arg(long)]
    target_kg: Option<f64>,
}

pub fn run_carbon(a: CarbonArgs) -> Result<()> {
    let q = CarbonQuery {
        gpu_count: a.gpus,
        wall_hours: a.hours,
        device_power_kw: a.power_kw,
        pue: a.pue,
        grid_intensity: a.intensity,
    };
    q.validate()?;
    echo("carbon", "gpus", q.gpu_count);
    echo("carbon", "hours", q.wall_hours);
    echo("carbon", "power_kw", q.device_power_kw);
    echo("carbon", "pue", q.pue);
    echo("carbon", "intensity", q.grid_intensity);
    let mut out = std::io::stdout().lock();
    let io_err = |e| Error::io("<stdout>", e);
    writeln!(out, "energy_kwh {:.4}", q.energy_kwh()).map_err(io_err)?;
    writeln!(out, "kg_co2e {:.4}", estimate_carbon(&q)).map_err(io_err)?;
    if let Some(target) = a.target_kg {
        if !(target >= 0.0 && target.is_finite()) {
            return Err(Error::ConfigInvalid(format!(
                "target_kg must be non-negative, got {target}"
            )));
        }
        writeln!(out, "implied_intensity {:.6}", q.implied_intensity(target)).map_err(io_err)?;
    }
    Ok(())
}
