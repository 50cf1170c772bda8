use std::path::PathBuf;

use anyhow::Result;
use clap::{Parser, Subcommand};
use misep::network::SeparatorKind;
use misep_cli::{cmd_align, cmd_evaluate, cmd_pipeline, cmd_separate, cmd_simulate, Overrides, PipelineConfig};

#[derive(Parser)]
#[command(name = "misep", version, about = "Show-through separation pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Flat `key = value` config file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Training runs per mode.
    #[arg(long, global = true)]
    runs: Option<usize>,
    /// Restrict `separate` to one mode.
    #[arg(long, global = true)]
    mode: Option<SeparatorKind>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a source pair and its show-through mixture.
    Simulate,
    /// Register the second acquired side onto the first.
    Align,
    /// Train separators and write separated images.
    Separate,
    /// Score separations against the sources.
    Evaluate,
    /// All stages in order, reusing finished ones.
    Pipeline,
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    let overrides = Overrides {
        seed: cli.seed,
        runs: cli.runs,
        mode: cli.mode,
        out: cli.out,
    };
    let config = PipelineConfig::load(cli.config.as_deref(), &overrides)?;
    match cli.command {
        Command::Simulate => {
            cmd_simulate(&config)?;
        }
        Command::Align => {
            cmd_align(&config)?;
        }
        Command::Separate => {
            cmd_separate(&config)?;
        }
        Command::Evaluate => {
            let (_, table) = cmd_evaluate(&config)?;
            print!("{}", table.to_csv());
        }
        Command::Pipeline => {
            let record = cmd_pipeline(&config)?;
            for s in &record.stages {
                eprintln!("{}: {}", s.stage, s.status);
            }
            let report = config.out_dir.join("evaluate").join("report.csv");
            if let Ok(text) = std::fs::read_to_string(report) {
                print!("{text}");
            }
        }
    }
    Ok(())
}
