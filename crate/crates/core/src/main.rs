use std::path::PathBuf;
use std::process;

use clap::{Parser, ValueEnum};

use mktcube::harness::{self, Command, ExperimentConfig, HarnessError};

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Cmd {
    Synth,
    BuildImages,
    Train,
    Evaluate,
    Embed,
    ComparePca,
    Benchmark,
}

impl From<Cmd> for Command {
    fn from(c: Cmd) -> Self {
        match c {
            Cmd::Synth => Command::Synth,
            Cmd::BuildImages => Command::BuildImages,
            Cmd::Train => Command::Train,
            Cmd::Evaluate => Command::Evaluate,
            Cmd::Embed => Command::Embed,
            Cmd::ComparePca => Command::ComparePca,
            Cmd::Benchmark => Command::Benchmark,
        }
    }
}

/// Market-image return forecasting experiments.
#[derive(Debug, Parser)]
#[command(name = "mktcube", version)]
struct Cli {
    #[arg(value_enum)]
    command: Cmd,
    /// `key = value` configuration file.
    #[arg(long)]
    config: PathBuf,
    /// Override one configuration key, e.g. `--set seed=3`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

fn execute(cli: &Cli) -> Result<(), HarnessError> {
    let threads = harness::thread_cap(std::env::var("MKTCUBE_THREADS").ok().as_deref())?;
    log::debug!("thread cap {threads}");
    let mut cfg = ExperimentConfig::load(&cli.config)?;
    for kv in &cli.overrides {
        cfg.apply_override(kv)?;
    }
    let report = harness::run(cli.command.into(), &cfg)?;
    for (k, v) in &report.results {
        println!("{k} = {v}");
    }
    for p in &report.outputs {
        println!("wrote {}", p.display());
    }
    println!("seed = {}, wall clock {:.2}s", report.seed, report.wall_clock_secs);
    Ok(())
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    if let Err(e) = execute(&cli) {
        eprintln!("error: {e}");
        process::exit(e.exit_code());
    }
}
