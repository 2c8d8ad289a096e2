//! Partition tooling: volume splits for unlabeled pools and targeted
//! prevalence/disparity splits for labeled subsets.

use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use fedpredi_cli::load_manifest_dir;
use fedpredi_core::corpus::write_manifest;
use fedpredi_core::partition::{
    partition_unlabeled_with, predi_partition, PartitionTarget, VolumeMode,
};

#[derive(Parser)]
#[command(name = "partition", version, about = "Construct client data partitions")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Split a sample total over clients, uniformly or with Dirichlet skew.
    Unlabeled {
        /// Total number of samples to distribute.
        #[arg(long)]
        n: usize,
        /// Number of clients.
        #[arg(long)]
        k: usize,
        /// Dirichlet concentration; smaller means more skew.
        #[arg(long, conflicts_with = "iid")]
        alpha: Option<f64>,
        /// Uniform split (remainder to the last clients).
        #[arg(long)]
        iid: bool,
        #[arg(long)]
        seed: u64,
        /// Minimum samples per client.
        #[arg(long, default_value_t = 1)]
        min_size: usize,
    },
    /// Targeted label-space partition of balanced labeled subsets.
    Predi {
        /// Target mean class prevalence, in [1, K].
        #[arg(long)]
        rho: f64,
        /// Target class-set size disparity (population std).
        #[arg(long)]
        sigma: f64,
        #[arg(long)]
        seed: u64,
        /// Directory with the balanced per-client subsets (*.manifest).
        #[arg(long)]
        subsets: PathBuf,
        /// Examples dealt per class to each holding client.
        #[arg(long, default_value_t = fedpredi_core::corpus::reference::SAMPLES_PER_CLASS)]
        samples_per_class: usize,
        /// Output directory for the matrix and client manifests.
        #[arg(long)]
        out_dir: PathBuf,
    },
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Unlabeled {
            n,
            k,
            alpha,
            iid,
            seed,
            min_size,
        } => {
            let mode = match (alpha, iid) {
                (Some(a), false) => VolumeMode::Dirichlet(a),
                (None, true) => VolumeMode::Iid,
                _ => bail!("pass exactly one of --alpha or --iid"),
            };
            let split = partition_unlabeled_with(n, k, mode, seed, min_size)?;
            let sizes: Vec<String> = split.client_sizes.iter().map(ToString::to_string).collect();
            println!("{}", sizes.join(" "));
        }
        Command::Predi {
            rho,
            sigma,
            seed,
            subsets,
            samples_per_class,
            out_dir,
        } => {
            let loaded = load_manifest_dir(&subsets)?;
            let manifests: Vec<_> = loaded.into_iter().map(|(_, m)| m).collect();
            let class_count = manifests[0].class_count();
            let clients = manifests.len();
            let target = PartitionTarget::new(rho, sigma, seed);
            let out = predi_partition(&manifests, &target, class_count, clients, samples_per_class)?;

            std::fs::create_dir_all(&out_dir)
                .with_context(|| format!("creating {}", out_dir.display()))?;
            let matrix_path = out_dir.join("matrix.txt");
            std::fs::write(&matrix_path, out.matrix.to_text())?;
            for (k, manifest) in out.client_manifests.iter().enumerate() {
                write_manifest(out_dir.join(format!("client_{k}.manifest")), manifest)?;
            }
            let stats = out.matrix.stats();
            println!(
                "wrote {} client manifests and {}; realized prevalence {:.4}, disparity {:.4}",
                clients,
                matrix_path.display(),
                stats.mean_prevalence,
                stats.size_disparity
            );
        }
    }
    Ok(())
}
