//! Corpus tooling: synthesize desk-scale corpora and split manifests.

use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};

use fedpredi_core::corpus::{
    generate_synthetic, read_manifest, train_test_split, write_manifest, SyntheticSpec,
};
use fedpredi_core::Real;

#[derive(Parser)]
#[command(name = "corpus", version, about = "Generate and split corpus manifests")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic Gaussian-cluster corpus from a TOML spec.
    Synth {
        /// TOML file with the synthetic corpus parameters.
        #[arg(long)]
        spec: PathBuf,
        /// Output manifest path.
        #[arg(long)]
        out: PathBuf,
    },
    /// Stratified train/test split of a manifest.
    Split {
        /// Input manifest.
        #[arg(long = "in")]
        input: PathBuf,
        /// Fraction of each class assigned to the test side.
        #[arg(long = "test-frac", default_value_t = fedpredi_core::corpus::reference::TEST_FRACTION)]
        test_fraction: f64,
        #[arg(long)]
        seed: u64,
        /// Output path for the train manifest.
        #[arg(long, default_value = "train.manifest")]
        out_train: PathBuf,
        /// Output path for the test manifest.
        #[arg(long, default_value = "test.manifest")]
        out_test: PathBuf,
    },
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Synth { spec, out } => {
            let text = std::fs::read_to_string(&spec)
                .with_context(|| format!("reading {}", spec.display()))?;
            let spec: SyntheticSpec = toml::from_str(&text).context("parsing synthetic spec")?;
            let corpus = generate_synthetic::<Real>(&spec)?;
            write_manifest(&out, &corpus.manifest)?;
            println!(
                "wrote {} examples over {} classes to {} (separability {:.3})",
                corpus.manifest.len(),
                corpus.manifest.class_count(),
                out.display(),
                corpus.separability
            );
        }
        Command::Split {
            input,
            test_fraction,
            seed,
            out_train,
            out_test,
        } => {
            let manifest = read_manifest::<Real>(&input)?;
            let (train, test) = train_test_split(&manifest, test_fraction, seed)?;
            write_manifest(&out_train, &train)?;
            write_manifest(&out_test, &test)?;
            println!(
                "split {} examples into {} train / {} test",
                manifest.len(),
                train.len(),
                test.len()
            );
        }
    }
    Ok(())
}
