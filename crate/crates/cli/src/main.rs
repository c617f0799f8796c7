use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use fsee_core::domains::{
    build_hard_toggle, build_stock_trading, build_toggle, HardToggleConfig, StockTradingConfig,
    ToggleConfig,
};
use fsee_core::fmdp::{from_domain_file, to_domain_file};
use fsee_core::harness::{load_config, read_traces, run_experiment, summarize};

#[derive(Parser)]
#[command(
    name = "fsee",
    version,
    about = "Feature-selecting factored-MDP learner experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment config and write traces plus a summary.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Run this single seed instead of the configured list.
        #[arg(long)]
        seed_override: Option<u64>,
        /// Output directory, overriding the config.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Summarize the traces in a run directory.
    Summarize {
        #[arg(long = "in")]
        input: PathBuf,
        /// Print the summary as JSON instead of a table.
        #[arg(long)]
        json: bool,
    },
    /// Check a JSON domain file.
    ValidateDomain {
        #[arg(long)]
        file: PathBuf,
    },
    /// Write a built-in domain (default parameters) as a JSON domain file.
    ExportDomain {
        #[arg(long)]
        name: BuiltIn,
        /// Destination file; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum BuiltIn {
    Toggle,
    ToggleNecessary,
    HardToggle,
    StockTrading,
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run {
            config,
            seed_override,
            out,
        } => {
            let mut cfg = load_config(&config)?;
            if let Some(seed) = seed_override {
                cfg.seeds = vec![seed];
            }
            if let Some(out) = out {
                cfg.output = out;
            }
            let summary = run_experiment(&cfg)?;
            print!("{}", summary.table());
            println!(
                "traces and summary.json written to {}",
                cfg.output.display()
            );
        }
        Command::Summarize { input, json } => {
            let traces = read_traces(&input)?;
            let summary = summarize(&traces)?;
            if json {
                print!("{}", summary.to_json());
            } else {
                print!("{}", summary.table());
            }
        }
        Command::ValidateDomain { file } => {
            let text =
                fs::read_to_string(&file).with_context(|| format!("reading {}", file.display()))?;
            let mdp = match from_domain_file(&text) {
                Ok(mdp) => mdp,
                Err(e) => bail!("{}: {e}", file.display()),
            };
            println!(
                "{}: valid, {} features, {} actions, {} reward nodes, in-degree {}",
                file.display(),
                mdp.n_features(),
                mdp.actions.len(),
                mdp.rewards.len(),
                mdp.in_degree()
            );
        }
        Command::ExportDomain { name, out } => {
            let mdp = match name {
                BuiltIn::Toggle => build_toggle(&ToggleConfig::default()),
                BuiltIn::ToggleNecessary => build_toggle(&ToggleConfig {
                    include_unnecessary: false,
                }),
                BuiltIn::HardToggle => build_hard_toggle(&HardToggleConfig::default()),
                BuiltIn::StockTrading => build_stock_trading(&StockTradingConfig::default()),
            };
            let text = to_domain_file(&mdp);
            match out {
                Some(path) => {
                    fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?
                }
                None => print!("{text}"),
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
