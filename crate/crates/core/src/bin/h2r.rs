use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use log::error;

use h2r::harness::{cmd_collect, cmd_eval, cmd_reflect, cmd_report, Ablation, ConfigError, HarnessError, RunConfig};

#[derive(Parser)]
#[command(name = "h2r", version, about = "Hierarchical hindsight reflection experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Common {
    /// Run configuration (flat key = value file)
    #[arg(long)]
    config: PathBuf,
    /// Overrides `run_dir` from the config
    #[arg(long)]
    run_dir: Option<PathBuf>,
    /// Extra `key=value` overrides, applied after the config file
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Run the training split and store experience pairs
    Collect(Common),
    /// Build high- and low-level memory from stored experience
    Reflect(Common),
    /// Evaluate the test split under one memory ablation
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value = "full", value_parser = parse_ablation)]
        ablation: Ablation,
    },
    /// Merge metrics files into summary.txt
    Report {
        /// Config whose run_dir holds the metrics
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        run_dir: Option<PathBuf>,
    },
}

fn parse_ablation(s: &str) -> Result<Ablation, String> {
    Ablation::parse(s).ok_or_else(|| format!("expected one of full, no_high, no_low, no_memory; got {s:?}"))
}

fn load(common: &Common) -> Result<RunConfig, HarnessError> {
    let mut cfg = RunConfig::load(&common.config)?;
    for o in &common.overrides {
        let (k, v) = o
            .split_once('=')
            .ok_or_else(|| ConfigError::Invalid(format!("override {o:?} is not key=value")))?;
        cfg.set(k.trim(), v.trim(), Path::new("."))?;
    }
    if let Some(dir) = &common.run_dir {
        cfg.run_dir = dir.clone();
    }
    cfg.check()?;
    Ok(cfg)
}

fn run(cli: Cli) -> Result<(), HarnessError> {
    match cli.command {
        Command::Collect(c) => {
            let cfg = load(&c)?;
            let out = cmd_collect(&cfg)?;
            println!("pairs={} unsolved={} attempts={}", out.pairs.len(), out.unsolved.len(), out.attempts);
        }
        Command::Reflect(c) => {
            let report = cmd_reflect(&load(&c)?)?;
            print!("{report}");
        }
        Command::Eval { common, ablation } => {
            let m = cmd_eval(&load(&common)?, ablation)?;
            print!("{}", m.to_text());
        }
        Command::Report { config, run_dir } => {
            let dir = match (run_dir, config) {
                (Some(d), _) => d,
                (None, Some(c)) => RunConfig::load(&c)?.run_dir,
                (None, None) => return Err(ConfigError::Invalid("report needs --run-dir or --config".into()).into()),
            };
            print!("{}", cmd_report(&dir)?);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            error!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
