use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use gmbound::data::{gen_toy, ToyKind};
use gmbound::nn::load_checkpoint;
use gmbound_experiments::griddensity::{grid_density_solver, GridDensityConfig};
use gmbound_experiments::heatmap::{feature_heatmap, write_heatmap_csv};
use gmbound_experiments::{run, ExperimentConfig};
use std::path::PathBuf;

#[derive(Parser)]
#[command(
    name = "gmbound",
    version,
    about = "Train and evaluate mixture-density objectives"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run one experiment described by a JSON config.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Output directory (overrides the config's out_dir).
        #[arg(long, env = "GMBOUND_OUT_DIR")]
        out: Option<PathBuf>,
        /// Overrides the config's seed.
        #[arg(long, env = "GMBOUND_SEED")]
        seed: Option<u64>,
    },
    /// Evaluate a checkpointed 2-D encoder on a grid and write CSV.
    Heatmap {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value_t = 50)]
        resolution: usize,
        /// Network name inside the checkpoint.
        #[arg(long, default_value = "encoder")]
        network: String,
        #[arg(long, default_value = "heatmap.csv")]
        output: PathBuf,
    },
    /// Solve the discretised autoencoder objective on a toy dataset.
    Griddensity {
        #[arg(long)]
        dataset: String,
        #[arg(long, default_value_t = 50)]
        grid: usize,
        #[arg(long, default_value_t = 3000)]
        y_points: usize,
        #[arg(long, default_value_t = 0.00025)]
        v: f64,
        #[arg(long, default_value_t = 300)]
        iterations: usize,
        #[arg(long, env = "GMBOUND_SEED", default_value_t = 0)]
        seed: u64,
        #[arg(long, env = "GMBOUND_OUT_DIR", default_value = "griddensity")]
        out: PathBuf,
    },
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    if let Err(e) = real_main() {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

fn real_main() -> Result<()> {
    match Cli::parse().cmd {
        Cmd::Run { config, out, seed } => {
            let mut cfg = ExperimentConfig::load(&config)?;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            let Some(dir) = out.or_else(|| cfg.out_dir.clone()) else {
                bail!("no output directory: pass --out or set out_dir in the config");
            };
            let art = run(&cfg, &dir)?;
            println!("{}", serde_json::to_string_pretty(&art.summary)?);
            println!("metrics: {}", art.metrics_csv.display());
            println!("checkpoint: {}", art.checkpoint.display());
        }
        Cmd::Heatmap {
            checkpoint,
            resolution,
            network,
            output,
        } => {
            let nets = load_checkpoint(&checkpoint)
                .with_context(|| format!("loading {}", checkpoint.display()))?;
            let Some((_, enc)) = nets.iter().find(|(n, _)| *n == network) else {
                bail!("checkpoint has no network named '{network}'");
            };
            write_heatmap_csv(&output, &feature_heatmap(enc, resolution)?)?;
            println!("{}", output.display());
        }
        Cmd::Griddensity {
            dataset,
            grid,
            y_points,
            v,
            iterations,
            seed,
            out,
        } => {
            let kind: ToyKind = dataset.parse()?;
            if kind.dim() != 2 {
                bail!(
                    "grid densities need a 2-D dataset, {} is {}-D",
                    kind.name(),
                    kind.dim()
                );
            }
            let ds = gen_toy(kind, kind.default_n(), seed)?;
            let cfg = GridDensityConfig {
                grid,
                y_points,
                v,
                iterations,
                seed,
                ..GridDensityConfig::default()
            };
            let res = grid_density_solver(&ds.samples, &cfg)?;
            std::fs::create_dir_all(&out)?;
            write_heatmap_csv(&out.join("features.csv"), &res.features)?;
            write_heatmap_csv(
                &out.join("reconstruction_density.csv"),
                &res.reconstruction_density,
            )?;
            println!(
                "final objective {}",
                res.trace.last().copied().unwrap_or(f64::NAN)
            );
            println!("{}", out.display());
        }
    }
    Ok(())
}
