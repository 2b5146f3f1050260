use std::path::PathBuf;

use anyhow::Result;
use clap::{Parser, Subcommand};
use stageopt_harness::commands;
use stageopt_harness::config::Settings;

#[derive(Parser)]
#[command(name = "stageopt", version, about = "Stagewise safe Bayesian optimization benchmarks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate instance files
    Gen(Settings),
    /// Run one algorithm on one instance file
    Run {
        #[arg(long)]
        instance: PathBuf,
        /// Seed slot of the instance to start from
        #[arg(long, default_value_t = 0)]
        seed_index: usize,
        /// Instance number recorded in the output rows
        #[arg(long, default_value_t = 0)]
        instance_id: usize,
        #[command(flatten)]
        settings: Settings,
    },
    /// Run a full benchmark plan
    Bench(Settings),
    /// Reachable sets of an instance under its true safety functions
    Oracle {
        #[arg(long)]
        instance: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed_index: usize,
        /// Also report the set reachable in this many steps
        #[arg(long)]
        steps: Option<usize>,
        #[command(flatten)]
        settings: Settings,
    },
    /// Information-gain tables
    Gamma {
        /// Instance file; defaults to the first instance of the scenario
        #[arg(long)]
        instance: Option<PathBuf>,
        #[command(flatten)]
        settings: Settings,
    },
    /// Expansion and optimization horizons implied by the confidence bounds
    Bounds {
        #[arg(long)]
        instance: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed_index: usize,
        /// Length of the tabulated information gain
        #[arg(long, default_value_t = 1000)]
        gamma_horizon: usize,
        #[command(flatten)]
        settings: Settings,
    },
    /// Recompute aggregate.csv from per-step files
    Aggregate {
        #[arg(long, required = true, num_args = 1..)]
        runs: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Render aggregate curves as SVG
    Plot {
        #[arg(long)]
        aggregate: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn emit(text: String, out: Option<&PathBuf>) -> Result<()> {
    match out {
        Some(path) => std::fs::write(path, text)?,
        None => print!("{text}"),
    }
    Ok(())
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Gen(s) => {
            for p in commands::gen(&s.resolve()?)? {
                println!("{}", p.display());
            }
        }
        Command::Run {
            instance,
            seed_index,
            instance_id,
            settings,
        } => {
            let dir = commands::run(&settings.resolve()?, &instance, seed_index, instance_id)?;
            println!("{}", dir.display());
        }
        Command::Bench(s) => {
            let dir = commands::bench(&s.resolve()?)?;
            println!("{}", dir.display());
        }
        Command::Oracle {
            instance,
            seed_index,
            steps,
            settings,
        } => {
            let s = settings.resolve()?;
            emit(commands::oracle(&s, &instance, seed_index, steps)?, s.out.as_ref())?;
        }
        Command::Gamma { instance, settings } => {
            let s = settings.resolve()?;
            emit(commands::gamma(&s, instance.as_deref())?, s.out.as_ref())?;
        }
        Command::Bounds {
            instance,
            seed_index,
            gamma_horizon,
            settings,
        } => {
            let s = settings.resolve()?;
            emit(commands::bounds(&s, &instance, seed_index, gamma_horizon)?, s.out.as_ref())?;
        }
        Command::Aggregate { runs, out } => commands::aggregate_files(&runs, &out)?,
        Command::Plot { aggregate, out } => commands::plot(&aggregate, &out)?,
    }
    Ok(())
}
