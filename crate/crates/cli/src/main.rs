use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Parser, Subcommand};
use revalued_cli::{run_eval, run_tabular_credit, run_theory, run_train, RunConfig};

#[derive(Debug, Parser)]
#[command(name = "revalued", version, about = "Value-decomposition Q-learning experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Run config (TOML). Built-in defaults are used when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Replaces the configured seed list with this single seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory, overriding `out_dir` from the config.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train an agent for every seed and write CSV logs.
    Train,
    /// Check the target bias/variance theory in closed form and by Monte Carlo.
    Theory,
    /// Run the tabular credit-assignment experiment for DecQN and REValueD.
    TabularCredit,
    /// Evaluate a saved checkpoint with the greedy policy.
    Eval { checkpoint: PathBuf },
}

fn run(cli: Cli) -> Result<bool> {
    let mut config = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        config.seeds = vec![seed];
    }
    if let Some(out) = cli.out {
        config.out_dir = out;
    }
    config.validate()?;
    let seed = config.seeds[0];
    match cli.command {
        Command::Train => {
            let outcomes = run_train(&config)?;
            for o in &outcomes {
                let last = o.log.evals.last().map(|e| e.eval_return.to_string()).unwrap_or_else(|| "none".into());
                println!("seed {}: {} updates, final eval return {last}", o.log.seed, o.log.updates.len());
            }
            Ok(true)
        }
        Command::Theory => {
            let summary = run_theory(&config, &config.out_dir, seed)?;
            println!(
                "{} specs, {} rows -> {}",
                summary.specs_checked,
                summary.rows.len(),
                summary.csv_path.display()
            );
            println!(
                "closed-form failures: {}; monte carlo failures: {}",
                summary.closed_form_failures, summary.monte_carlo_failures
            );
            Ok(summary.closed_form_failures == 0)
        }
        Command::TabularCredit => {
            let summary = run_tabular_credit(&config, &config.out_dir, seed)?;
            let (d, r) = (summary.decqn.points.last().unwrap(), summary.revalued.points.last().unwrap());
            println!(
                "update {}: decqn {:.4} ± {:.4}, revalued {:.4} ± {:.4}",
                d.update_idx, d.frequency, d.ci_half_width, r.frequency, r.ci_half_width
            );
            for p in &summary.csv_paths {
                println!("wrote {}", p.display());
            }
            Ok(true)
        }
        Command::Eval { checkpoint } => {
            let mean = run_eval(&config, &checkpoint, seed)?;
            println!("mean return over {} episodes: {mean}", config.training.eval_episodes);
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
