use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};

use bsac::harness::{self, plot};
use bsac::learner::tabular;

#[derive(Parser)]
#[command(name = "bsac", about = "SAC/BSAC training on desk-scale control environments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train every configured seed and write metrics + checkpoints.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Comma-separated seed override, e.g. --seeds 0,1,2
        #[arg(long, value_delimiter = ',')]
        seeds: Option<Vec<u64>>,
        /// Output directory override.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evaluate a checkpoint with deterministic actions.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        env: String,
        #[arg(long, default_value_t = 10)]
        episodes: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Emit learning-curve SVGs (and a comparison report for a directory
    /// of runs).
    Plot {
        #[arg(long = "run-dir")]
        run_dir: PathBuf,
    },
    /// Solve a finite MDP with tabular soft value iteration.
    Oracle {
        #[arg(long)]
        mdp: PathBuf,
    },
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Train { config, seeds, out } => {
            let base = config.parent().unwrap_or(std::path::Path::new(".")).to_path_buf();
            let loaded = harness::load_config(&config)?;
            let resolved = harness::resolve(loaded, &base, seeds, out)?;
            println!(
                "config {} -> {} ({} seeds)",
                resolved.hash,
                resolved.out_dir.display(),
                resolved.config.seeds.len()
            );
            let records = harness::run_experiment(&resolved)?;
            for r in &records {
                let last = r.rows.last();
                let final_return =
                    last.map(|row| format!("{:.3}", row.eval_return_mean)).unwrap_or("-".into());
                println!(
                    "seed {:>3}: final eval return {final_return} ({:.1}s, {} rows) -> {}",
                    r.seed,
                    r.wall_clock_s,
                    r.rows.len(),
                    r.metrics_path.display()
                );
            }
        }
        Command::Eval { checkpoint, env, episodes, seed } => {
            let summary = harness::evaluate_checkpoint(&checkpoint, &env, episodes, seed)?;
            println!(
                "episodes={episodes} mean={:.4} std={:.4} min={:.4} max={:.4}",
                summary.mean, summary.std, summary.min, summary.max
            );
        }
        Command::Plot { run_dir } => {
            let written = plot::emit_curves(&run_dir)?;
            for p in written {
                println!("{}", p.display());
            }
        }
        Command::Oracle { mdp } => {
            let (mdp, alpha, gamma) =
                tabular::load_mdp_file(&mdp).context("loading MDP definition")?;
            let sol = tabular::soft_value_iteration(&mdp, alpha, gamma)?;
            println!(
                "converged in {} iterations (residual {:.3e})",
                sol.iterations, sol.residual
            );
            for (s, v) in sol.values.iter().enumerate() {
                let probs: Vec<String> =
                    sol.policy[s].iter().map(|p| format!("{p:.4}")).collect();
                println!("V({s}) = {v:.8}   pi({s}) = [{}]", probs.join(", "));
            }
        }
    }
    Ok(())
}
