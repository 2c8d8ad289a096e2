//! Experiment orchestration: run a whole plan and summarize its results.

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use fedpredi_core::harness::{report, run_plan, ExperimentPlan, ReportFormat, ResultTable};

#[derive(Parser)]
#[command(
    name = "fedpredi",
    version,
    about = "Run experiment plans over the two-stage federated pipeline",
    long_about = "Runs every cell of an experiment plan (corpus -> partition -> pre-train -> \
                  fine-tune -> evaluate), appending one JSON row per cell to results.jsonl. \
                  Reruns resume from the completed rows. Set FEDPREDI_WORKERS to run cells in \
                  parallel."
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Text,
    Csv,
}

#[derive(Subcommand)]
enum Command {
    /// Execute a plan file; exits nonzero if any cell failed.
    Run {
        /// Experiment plan (TOML).
        #[arg(long)]
        plan: PathBuf,
        /// Run directory for results, timings, and checkpoint cache.
        #[arg(long, default_value = "run")]
        out_dir: PathBuf,
    },
    /// Summarize a results file.
    Report {
        /// results.jsonl produced by `fedpredi run`.
        #[arg(long)]
        results: PathBuf,
        #[arg(long, value_enum, default_value_t = Format::Text)]
        format: Format,
    },
}

fn main() -> ExitCode {
    match run() {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::FAILURE
        }
    }
}

fn run() -> Result<ExitCode> {
    match Cli::parse().command {
        Command::Run { plan, out_dir } => {
            let text = std::fs::read_to_string(&plan)
                .with_context(|| format!("reading {}", plan.display()))?;
            let plan = ExperimentPlan::from_toml(&text)?;
            let outcome = run_plan(&plan, &out_dir)?;
            println!(
                "completed {} cells ({} resumed, {} failed); results at {}",
                outcome.table.rows.len(),
                outcome.resumed,
                outcome.failed,
                outcome.results_path.display()
            );
            if outcome.failed > 0 {
                for row in outcome.table.rows.iter().filter(|r| !r.is_ok()) {
                    eprintln!("failed {}: {}", row.cell, row.error.as_deref().unwrap_or("?"));
                }
                return Ok(ExitCode::FAILURE);
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Report { results, format } => {
            let table = ResultTable::read(&results)?;
            let format = match format {
                Format::Text => ReportFormat::Text,
                Format::Csv => ReportFormat::Csv,
            };
            print!("{}", report(&table, format)?);
            Ok(ExitCode::SUCCESS)
        }
    }
}
