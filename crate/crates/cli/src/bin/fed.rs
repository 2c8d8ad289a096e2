//! Federated training: masked-reconstruction pre-training and supervised
//! fine-tuning over client manifest directories.

use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};

use fedpredi_cli::{load_manifest_dir, parse_on_off};
use fedpredi_core::federation::{
    evaluate_global, federated_finetune, federated_pretrain, write_round_logs, FederationConfig,
};
use fedpredi_core::learners::{load_checkpoint, save_checkpoint};
use fedpredi_core::partition::AssignmentMatrix;
use fedpredi_core::Real;

#[derive(Parser)]
#[command(name = "fed", version, about = "Run the two federated training stages")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Federated self-supervised pre-training over unlabeled pools.
    Pretrain {
        /// Directory with one unlabeled *.manifest per client.
        #[arg(long)]
        splits: PathBuf,
        /// Federation configuration (TOML).
        #[arg(long)]
        config: PathBuf,
        /// Where to store the resulting encoder checkpoint.
        #[arg(long, default_value = "encoder.ckpt")]
        out: PathBuf,
        /// Optional round-log file.
        #[arg(long)]
        log: Option<PathBuf>,
    },
    /// Federated fine-tuning from a pre-trained encoder.
    Finetune {
        /// Directory with one labeled *.manifest per client.
        #[arg(long)]
        splits: PathBuf,
        /// Assignment matrix file describing the label-space partition.
        #[arg(long)]
        matrix: PathBuf,
        /// Encoder checkpoint from pre-training.
        #[arg(long)]
        init: PathBuf,
        /// Federation configuration (TOML).
        #[arg(long)]
        config: PathBuf,
        /// Prevalence-weighted personalization: on or off (the baseline).
        #[arg(long, value_parser = parse_on_off, action = clap::ArgAction::Set)]
        prep: bool,
        /// Where to store the fine-tuned model checkpoint.
        #[arg(long, default_value = "model.ckpt")]
        out: PathBuf,
        /// Optional round-log file.
        #[arg(long)]
        log: Option<PathBuf>,
        /// Optional labeled test manifest; evaluated after training.
        #[arg(long)]
        eval: Option<PathBuf>,
    },
}

fn read_config(path: &PathBuf, clients: usize) -> Result<FederationConfig> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let cfg = FederationConfig::from_toml(&text)?;
    anyhow::ensure!(
        cfg.client_count == clients,
        "config names {} clients but {} split files were found",
        cfg.client_count,
        clients
    );
    Ok(cfg)
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Pretrain {
            splits,
            config,
            out,
            log,
        } => {
            let pools: Vec<_> = load_manifest_dir(&splits)?
                .into_iter()
                .map(|(_, m)| m)
                .collect();
            let cfg = read_config(&config, pools.len())?;
            let outcome = federated_pretrain(&pools, &cfg)?;
            save_checkpoint(&out, &outcome.encoder)?;
            if let Some(log_path) = log {
                write_round_logs(&log_path, &outcome.logs)?;
            }
            println!(
                "pre-trained for {} rounds; encoder checkpoint at {} (checksum {:016x})",
                cfg.pretrain.rounds,
                out.display(),
                outcome.encoder.checksum()
            );
        }
        Command::Finetune {
            splits,
            matrix,
            init,
            config,
            prep,
            out,
            log,
            eval,
        } => {
            let clients: Vec<_> = load_manifest_dir(&splits)?
                .into_iter()
                .map(|(_, m)| m)
                .collect();
            let cfg = read_config(&config, clients.len())?;
            let matrix_text = std::fs::read_to_string(&matrix)
                .with_context(|| format!("reading {}", matrix.display()))?;
            let matrix = AssignmentMatrix::from_text(&matrix_text)?;
            let encoder = load_checkpoint(&init)?;
            let eval_manifest = eval
                .map(fedpredi_core::corpus::read_manifest::<Real>)
                .transpose()?;

            let outcome = federated_finetune(
                &clients,
                &matrix,
                &encoder,
                &cfg,
                prep,
                eval_manifest.as_ref(),
            )?;
            save_checkpoint(&out, &outcome.model)?;
            if let Some(log_path) = log {
                write_round_logs(&log_path, &outcome.logs)?;
            }
            println!(
                "fine-tuned for {} rounds ({}); model checkpoint at {}",
                cfg.finetune.rounds,
                if prep { "prevalence-weighted" } else { "baseline" },
                out.display()
            );
            if let Some(test) = &eval_manifest {
                let record = evaluate_global(&outcome.model, test)?;
                println!(
                    "test macro accuracy {:.4}, macro F1 {:.4}",
                    record.macro_accuracy, record.macro_f1
                );
            }
        }
    }
    Ok(())
}
