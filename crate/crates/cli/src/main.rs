use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use lqgvtr_cli::{init_threads, run, summarize, CliError, Manifest, Overrides};

#[derive(Parser)]
#[command(name = "lqgvtr", version, about = "LQG simulator-class experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment. Flags override the config file.
    Run(Overrides),
    /// Aggregate regret traces: per-horizon statistics and a log-log slope.
    Summarize {
        traces: Vec<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Re-run the config stored in a manifest and compare checksums.
    Replay {
        manifest: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn execute(cli: Cli) -> Result<(), CliError> {
    init_threads()?;
    match cli.command {
        Command::Run(flags) => {
            let cfg = flags.resolve()?;
            let manifest = run(&cfg)?;
            println!("{}", serde_json::to_string_pretty(&manifest.outputs)?);
        }
        Command::Summarize { traces, out } => {
            let summary = summarize(&traces)?;
            let text = serde_json::to_string_pretty(&summary)?;
            match out {
                Some(p) => std::fs::write(p, text)?,
                None => println!("{text}"),
            }
        }
        Command::Replay { manifest, out } => {
            let original = Manifest::from_path(&manifest)?;
            let mut cfg = original.config.clone();
            cfg.out = lqgvtr_cli::runner::replay_dir(&manifest, out);
            let fresh = run(&cfg)?;
            let bad = original.mismatches(&fresh);
            if !bad.is_empty() {
                return Err(CliError::Config(format!("checksum mismatch: {}", bad.join(", "))));
            }
            println!("{} outputs reproduced", fresh.outputs.len());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", serde_json::to_string(&e.record()).unwrap_or_else(|_| e.to_string()));
            ExitCode::FAILURE
        }
    }
}
