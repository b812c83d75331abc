use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use graspq::commands::{cmd_ablate, cmd_eval, cmd_plot, cmd_train};
use graspq::{RunConfig, Result};

#[derive(Parser)]
#[command(name = "graspq", version, about = "Train and evaluate Grasp-Q-Network agents")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one agent and save its log, checkpoint and config.
    Train {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        episodes: Option<usize>,
        #[arg(long, default_value = "runs/train")]
        out: PathBuf,
        #[arg(long, short)]
        quiet: bool,
    },
    /// Greedy success rate of a checkpoint on every object kind.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value_t = 200)]
        episodes: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Single-view vs multi-view over every object kind and several seeds.
    Ablate {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        episodes: Option<usize>,
        #[arg(long, default_value = "runs/ablate")]
        out: PathBuf,
        #[arg(long, short)]
        quiet: bool,
    },
    /// Moving-average success curves of training logs as SVG.
    Plot {
        #[arg(required = true)]
        logs: Vec<PathBuf>,
        #[arg(long, default_value = "curves.svg")]
        out: PathBuf,
    },
}

fn load(path: Option<&PathBuf>, seed: Option<u64>, episodes: Option<usize>) -> Result<RunConfig> {
    let mut config = match path {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(graspq::error::io_err(p))?;
            RunConfig::parse(&text)?
        }
        None => RunConfig::default(),
    };
    if let Some(s) = seed {
        config.train.seed = s;
    }
    if let Some(e) = episodes {
        config.train.episodes = e;
    }
    config.validate()?;
    Ok(config)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train { config, seed, episodes, out, quiet } => {
            let config = load(config.as_ref(), seed, episodes)?;
            let report = cmd_train(&config, &out, !quiet)?;
            println!("final success {:.3}", report.final_success);
            println!("log        {}", report.log_path.display());
            println!("checkpoint {}", report.checkpoint_path.display());
        }
        Command::Eval { checkpoint, episodes, seed } => {
            println!("object    success  steps  return");
            for (kind, r) in cmd_eval(&checkpoint, episodes, seed)? {
                println!(
                    "{:<9} {:>7.3} {:>6.2} {:>7.3}",
                    kind.to_string(),
                    r.success_rate,
                    r.mean_steps,
                    r.mean_return
                );
            }
        }
        Command::Ablate { config, seed, episodes, out, quiet } => {
            let config = load(config.as_ref(), seed, episodes)?;
            for row in cmd_ablate(&config, &out, !quiet)? {
                let mean = row.success.iter().sum::<f64>() / row.success.len() as f64;
                println!("{:<7} {:<9} mean {:.3}  {:?}", row.view.to_string(), row.object.to_string(), mean, row.success);
            }
        }
        Command::Plot { logs, out } => {
            cmd_plot(&logs, &out)?;
            println!("wrote {}", out.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
