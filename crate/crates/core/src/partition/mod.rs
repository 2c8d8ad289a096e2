//! Client data partitioning: volume skew for unlabeled pools and
//! prevalence/disparity assignment for labeled subsets.

mod predi;

pub use predi::{
    matrix_stats, predi_partition, AssignmentMatrix, MatrixStats, PartitionTarget, PrediOutcome,
};

use rand::seq::SliceRandom;
use rand_distr::{Distribution, Gamma};
use thiserror::Error;

use crate::corpus::{CorpusManifest, CorpusError};
use crate::scalar::Scalar;
use crate::seed;

#[derive(Debug, Error)]
pub enum PartitionError {
    #[error("invalid parameter: {0}")]
    InvalidParam(String),
    #[error("cannot give {clients} clients at least {min_size} of {total} items")]
    TooFewItems {
        total: usize,
        clients: usize,
        min_size: usize,
    },
    #[error("infeasible target: {0}")]
    InfeasibleTarget(String),
    #[error("class {class_id}: pool holds {have} examples, {need} required")]
    InsufficientPool {
        class_id: usize,
        have: usize,
        need: usize,
    },
    #[error("retry budget of {retries} exhausted: best disparity {best:.4} for target {target}")]
    RetryBudgetExhausted {
        retries: usize,
        best: f64,
        target: f64,
    },
    #[error("inconsistent matrix: {0}")]
    InconsistentMatrix(String),
    #[error("matrix parse error at line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error(transparent)]
    Corpus(#[from] CorpusError),
}

/// How unlabeled volume is spread over clients.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum VolumeMode {
    /// Near-equal sizes; the remainder goes to the last clients.
    Iid,
    /// Proportions drawn from a symmetric Dirichlet with this concentration.
    /// Smaller values give more severe quantity skew.
    Dirichlet(f64),
}

/// Per-client unlabeled sample counts. `client_sizes` always sums to the
/// total that was partitioned.
#[derive(Debug, Clone, PartialEq)]
pub struct VolumeSplit {
    pub client_sizes: Vec<usize>,
    pub mode: VolumeMode,
    pub seed: u64,
}

impl VolumeSplit {
    pub fn total(&self) -> usize {
        self.client_sizes.iter().sum()
    }

    /// Population coefficient of variation of the client sizes.
    pub fn coefficient_of_variation(&self) -> f64 {
        let k = self.client_sizes.len() as f64;
        let mean = self.total() as f64 / k;
        if mean == 0.0 {
            return 0.0;
        }
        let var = self
            .client_sizes
            .iter()
            .map(|&n| {
                let d = n as f64 - mean;
                d * d
            })
            .sum::<f64>()
            / k;
        var.sqrt() / mean
    }
}

/// Split `total` items over `clients`, enforcing a minimum of one item per
/// client. See [`partition_unlabeled_with`] for a configurable minimum.
pub fn partition_unlabeled(
    total: usize,
    clients: usize,
    mode: VolumeMode,
    seed: u64,
) -> Result<VolumeSplit, PartitionError> {
    partition_unlabeled_with(total, clients, mode, seed, 1)
}

/// Split `total` items over `clients` with at least `min_size` each.
///
/// Dirichlet mode draws a proportion vector, rounds `total * r_i`, then
/// repairs the rounding one unit at a time on the clients with the largest
/// fractional residue so the sizes sum exactly to `total`.
pub fn partition_unlabeled_with(
    total: usize,
    clients: usize,
    mode: VolumeMode,
    seed: u64,
    min_size: usize,
) -> Result<VolumeSplit, PartitionError> {
    if clients == 0 {
        return Err(PartitionError::InvalidParam("need at least one client".into()));
    }
    if total < clients * min_size {
        return Err(PartitionError::TooFewItems {
            total,
            clients,
            min_size,
        });
    }
    let client_sizes = match mode {
        VolumeMode::Iid => {
            let base = total / clients;
            let rem = total % clients;
            (0..clients)
                .map(|i| base + usize::from(i >= clients - rem))
                .collect()
        }
        VolumeMode::Dirichlet(alpha) => {
            if !alpha.is_finite() || alpha <= 0.0 {
                return Err(PartitionError::InvalidParam(format!(
                    "Dirichlet concentration must be positive, got {alpha}"
                )));
            }
            let mut rng = seed::rng(seed, &[]);
            let gamma = Gamma::new(alpha, 1.0)
                .map_err(|e| PartitionError::InvalidParam(e.to_string()))?;
            // Dir(alpha) via normalized Gamma(alpha, 1) draws.
            let mut draws: Vec<f64> = (0..clients).map(|_| gamma.sample(&mut rng)).collect();
            let mut sum: f64 = draws.iter().sum();
            let mut guard = 0;
            while sum <= 0.0 {
                // Underflow to all-zero draws at extreme concentrations.
                draws = (0..clients).map(|_| gamma.sample(&mut rng)).collect();
                sum = draws.iter().sum();
                guard += 1;
                if guard > 100 {
                    return Err(PartitionError::InvalidParam(
                        "Dirichlet draws underflowed to zero".into(),
                    ));
                }
            }
            let targets: Vec<f64> = draws.iter().map(|g| total as f64 * g / sum).collect();
            let mut sizes: Vec<usize> = targets.iter().map(|t| t.round() as usize).collect();
            repair_rounding(&mut sizes, &targets, total);
            enforce_min_size(&mut sizes, min_size);
            sizes
        }
    };
    debug_assert_eq!(client_sizes.iter().sum::<usize>(), total);
    Ok(VolumeSplit {
        client_sizes,
        mode,
        seed,
    })
}

/// Adjust rounded sizes by +-1 until they sum to `total`, always picking the
/// client whose current size is farthest below (or above) its real target.
fn repair_rounding(sizes: &mut [usize], targets: &[f64], total: usize) {
    let mut residue: Vec<f64> = targets
        .iter()
        .zip(sizes.iter())
        .map(|(t, &n)| t - n as f64)
        .collect();
    let mut current: isize = sizes.iter().map(|&n| n as isize).sum();
    let want = total as isize;
    while current < want {
        let i = argmax_by(&residue, |_| true);
        sizes[i] += 1;
        residue[i] -= 1.0;
        current += 1;
    }
    while current > want {
        let i = argmin_by(&residue, |i| sizes[i] > 0);
        sizes[i] -= 1;
        residue[i] += 1.0;
        current -= 1;
    }
}

/// Raise every client to `min_size` by taking units from the largest clients.
fn enforce_min_size(sizes: &mut [usize], min_size: usize) {
    loop {
        let Some(short) = sizes.iter().position(|&n| n < min_size) else {
            return;
        };
        let donor = argmax_by(
            &sizes.iter().map(|&n| n as f64).collect::<Vec<_>>(),
            |i| sizes[i] > min_size,
        );
        sizes[donor] -= 1;
        sizes[short] += 1;
    }
}

fn argmax_by(values: &[f64], eligible: impl Fn(usize) -> bool) -> usize {
    let mut best = usize::MAX;
    let mut best_v = f64::NEG_INFINITY;
    for (i, &v) in values.iter().enumerate() {
        if eligible(i) && v > best_v {
            best_v = v;
            best = i;
        }
    }
    best
}

fn argmin_by(values: &[f64], eligible: impl Fn(usize) -> bool) -> usize {
    let mut best = usize::MAX;
    let mut best_v = f64::INFINITY;
    for (i, &v) in values.iter().enumerate() {
        if eligible(i) && v < best_v {
            best_v = v;
            best = i;
        }
    }
    best
}

/// Deal a pool's examples to clients according to a volume split: one seeded
/// permutation, then consecutive chunks of the split sizes.
pub fn materialize_volume_split<S: Scalar>(
    pool: &CorpusManifest<S>,
    split: &VolumeSplit,
) -> Result<Vec<CorpusManifest<S>>, PartitionError> {
    if split.total() != pool.len() {
        return Err(PartitionError::InvalidParam(format!(
            "split totals {} but pool holds {}",
            split.total(),
            pool.len()
        )));
    }
    let mut order: Vec<usize> = (0..pool.len()).collect();
    let mut rng = seed::rng(split.seed, &[0x706f6f6c]); // "pool"
    order.shuffle(&mut rng);

    let mut shards = Vec::with_capacity(split.client_sizes.len());
    let mut cursor = 0usize;
    for &size in &split.client_sizes {
        let examples = order[cursor..cursor + size]
            .iter()
            .map(|&i| pool.examples()[i].clone())
            .collect();
        cursor += size;
        shards.push(CorpusManifest::new(
            examples,
            pool.class_names().to_vec(),
            pool.provenance(),
            pool.feature_dim(),
        )?);
    }
    Ok(shards)
}

#[cfg(test)]
pub(crate) mod tests;
