//! Label-space heterogeneity via a binary class-by-client assignment matrix.
//!
//! The partitioner fixes two statistics independently: mean class prevalence
//! (how many clients hold an average class) and class-set size disparity
//! (population std of per-client class counts). It then deals each class's
//! examples to its holding clients in equal non-overlapping shares.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;

use super::PartitionError;
use crate::corpus::{CorpusManifest, Example};
use crate::scalar::Scalar;
use crate::seed;

/// Statistics derived from an assignment matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct MatrixStats {
    /// Per-class prevalence: row sums (number of clients holding the class).
    pub prevalence: Vec<usize>,
    /// Per-client class counts: column sums.
    pub class_counts: Vec<usize>,
    /// Mean prevalence over classes.
    pub mean_prevalence: f64,
    /// Mean class count over clients.
    pub mean_class_count: f64,
    /// Population standard deviation of the per-client class counts.
    pub size_disparity: f64,
}

/// Row/column sums and moments of a binary matrix, counted directly.
pub fn matrix_stats(entries: &[bool], class_count: usize, client_count: usize) -> MatrixStats {
    assert_eq!(entries.len(), class_count * client_count);
    let mut prevalence = vec![0usize; class_count];
    let mut class_counts = vec![0usize; client_count];
    for c in 0..class_count {
        for k in 0..client_count {
            if entries[c * client_count + k] {
                prevalence[c] += 1;
                class_counts[k] += 1;
            }
        }
    }
    let mean_prevalence = prevalence.iter().sum::<usize>() as f64 / class_count as f64;
    let mean_class_count = class_counts.iter().sum::<usize>() as f64 / client_count as f64;
    let var = class_counts
        .iter()
        .map(|&n| {
            let d = n as f64 - mean_class_count;
            d * d
        })
        .sum::<f64>()
        / client_count as f64;
    MatrixStats {
        prevalence,
        class_counts,
        mean_prevalence,
        mean_class_count,
        size_disparity: var.sqrt(),
    }
}

/// Binary class-by-client presence matrix with its derived statistics.
///
/// Invariants: every class is on at least one client and at most all of them;
/// every client holds at least one class; stored stats always match a fresh
/// recount of the entries.
#[derive(Debug, Clone, PartialEq)]
pub struct AssignmentMatrix {
    entries: Vec<bool>,
    class_count: usize,
    client_count: usize,
    stats: MatrixStats,
}

impl AssignmentMatrix {
    pub fn from_entries(
        class_count: usize,
        client_count: usize,
        entries: Vec<bool>,
    ) -> Result<Self, PartitionError> {
        if class_count == 0 || client_count == 0 {
            return Err(PartitionError::InvalidParam(
                "matrix needs at least one class and one client".into(),
            ));
        }
        if entries.len() != class_count * client_count {
            return Err(PartitionError::InvalidParam(format!(
                "expected {} entries, got {}",
                class_count * client_count,
                entries.len()
            )));
        }
        let stats = matrix_stats(&entries, class_count, client_count);
        if let Some(c) = stats.prevalence.iter().position(|&p| p == 0) {
            return Err(PartitionError::InconsistentMatrix(format!(
                "class {c} is on no client"
            )));
        }
        if let Some(k) = stats.class_counts.iter().position(|&n| n == 0) {
            return Err(PartitionError::InconsistentMatrix(format!(
                "client {k} holds no class"
            )));
        }
        Ok(AssignmentMatrix {
            entries,
            class_count,
            client_count,
            stats,
        })
    }

    pub fn all_ones(class_count: usize, client_count: usize) -> Self {
        AssignmentMatrix::from_entries(
            class_count,
            client_count,
            vec![true; class_count * client_count],
        )
        .expect("all-ones matrix is always valid")
    }

    pub fn get(&self, class: usize, client: usize) -> bool {
        self.entries[class * self.client_count + client]
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }

    pub fn client_count(&self) -> usize {
        self.client_count
    }

    pub fn entries(&self) -> &[bool] {
        &self.entries
    }

    pub fn stats(&self) -> &MatrixStats {
        &self.stats
    }

    /// Classes held by one client, ascending.
    pub fn client_classes(&self, client: usize) -> Vec<usize> {
        (0..self.class_count)
            .filter(|&c| self.get(c, client))
            .collect()
    }

    /// Clients holding one class, ascending.
    pub fn class_clients(&self, class: usize) -> Vec<usize> {
        (0..self.client_count)
            .filter(|&k| self.get(class, k))
            .collect()
    }

    /// Serialize: header `C K mean_prevalence size_disparity`, then one line
    /// of space-separated 0/1 digits per class.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{} {} {} {}",
            self.class_count, self.client_count, self.stats.mean_prevalence, self.stats.size_disparity
        );
        for c in 0..self.class_count {
            for k in 0..self.client_count {
                if k > 0 {
                    out.push(' ');
                }
                out.push(if self.get(c, k) { '1' } else { '0' });
            }
            out.push('\n');
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self, PartitionError> {
        let mut lines = text.lines().enumerate();
        let (_, header) = lines.next().ok_or(PartitionError::Parse {
            line: 1,
            reason: "empty matrix file".into(),
        })?;
        let fields: Vec<&str> = header.split(' ').collect();
        if fields.len() != 4 {
            return Err(PartitionError::Parse {
                line: 1,
                reason: "header must be `C K mean_prevalence size_disparity`".into(),
            });
        }
        let class_count: usize = fields[0].parse().map_err(|_| PartitionError::Parse {
            line: 1,
            reason: "bad class count".into(),
        })?;
        let client_count: usize = fields[1].parse().map_err(|_| PartitionError::Parse {
            line: 1,
            reason: "bad client count".into(),
        })?;
        let header_prevalence: f64 = fields[2].parse().map_err(|_| PartitionError::Parse {
            line: 1,
            reason: "bad mean prevalence".into(),
        })?;
        let header_disparity: f64 = fields[3].parse().map_err(|_| PartitionError::Parse {
            line: 1,
            reason: "bad size disparity".into(),
        })?;

        let mut entries = Vec::with_capacity(class_count * client_count);
        for (idx, line) in lines {
            if line.is_empty() {
                continue;
            }
            for tok in line.split(' ') {
                match tok {
                    "0" => entries.push(false),
                    "1" => entries.push(true),
                    _ => {
                        return Err(PartitionError::Parse {
                            line: idx + 1,
                            reason: format!("expected 0/1, got {tok:?}"),
                        })
                    }
                }
            }
        }
        let matrix = AssignmentMatrix::from_entries(class_count, client_count, entries)?;
        let close = |a: f64, b: f64| (a - b).abs() <= 1e-9;
        if !close(matrix.stats.mean_prevalence, header_prevalence)
            || !close(matrix.stats.size_disparity, header_disparity)
        {
            return Err(PartitionError::InconsistentMatrix(format!(
                "header stats ({header_prevalence}, {header_disparity}) do not match recount ({}, {})",
                matrix.stats.mean_prevalence, matrix.stats.size_disparity
            )));
        }
        Ok(matrix)
    }
}

/// Target statistics for the prevalence/disparity partitioner.
#[derive(Debug, Clone, PartialEq)]
pub struct PartitionTarget {
    /// Desired mean prevalence, in `[1, K]`.
    pub mean_prevalence: f64,
    /// Desired class-count disparity (population std), `>= 0`.
    pub size_disparity: f64,
    /// Acceptance band around `mean_prevalence`; `None` means one increment's
    /// granularity, `1/(2C)`.
    pub prevalence_tolerance: Option<f64>,
    /// Acceptance band around `size_disparity` for the sampled class counts.
    pub disparity_tolerance: f64,
    /// Resampling budget for the disparity step.
    pub max_retries: usize,
    pub seed: u64,
}

impl PartitionTarget {
    pub fn new(mean_prevalence: f64, size_disparity: f64, seed: u64) -> Self {
        PartitionTarget {
            mean_prevalence,
            size_disparity,
            prevalence_tolerance: None,
            // Integer class counts cannot always reach the target exactly: with
            // a half-integer mean the best achievable std already sits 0.5 away
            // from zero, so the band must admit it.
            disparity_tolerance: 0.5,
            max_retries: 200,
            seed,
        }
    }
}

/// Result of [`predi_partition`]: the realized assignment and the per-client
/// labeled manifests, each holding `s` examples of every class it was
/// assigned.
#[derive(Debug, Clone)]
pub struct PrediOutcome<S> {
    pub matrix: AssignmentMatrix,
    pub client_manifests: Vec<CorpusManifest<S>>,
}

/// Partition pooled labeled subsets to match target prevalence/disparity
/// statistics.
///
/// The three stages consume one seeded stream in a fixed order, so identical
/// inputs and seed reproduce the assignment and the example deal exactly:
/// 1. start every class at prevalence 1 and randomly increment until the mean
///    lands within tolerance of the target;
/// 2. sample per-client class-count targets from a rounded Gaussian around
///    the forced mean, repair them to the exact total, and resample until
///    their std lands within tolerance of the target;
/// 3. visit classes in random order, assigning each to the clients with the
///    largest remaining count gap (ties and overflow resolved uniformly),
///    then deal each class's pooled examples in disjoint chunks of `s`.
pub fn predi_partition<S: Scalar>(
    labeled_subsets: &[CorpusManifest<S>],
    target: &PartitionTarget,
    class_count: usize,
    client_count: usize,
    samples_per_class: usize,
) -> Result<PrediOutcome<S>, PartitionError> {
    validate_inputs(labeled_subsets, target, class_count, client_count, samples_per_class)?;
    let mut rng = seed::rng(target.seed, &[]);

    let prevalence = assign_prevalence(target, class_count, client_count, &mut rng)?;
    let total: usize = prevalence.iter().sum();
    if total < client_count {
        return Err(PartitionError::InfeasibleTarget(format!(
            "{total} class slots cannot cover {client_count} clients"
        )));
    }
    let count_targets =
        assign_disparity(target, total, class_count, client_count, &mut rng)?;
    let entries = allocate_classes(&prevalence, &count_targets, class_count, client_count, &mut rng);
    let matrix = AssignmentMatrix::from_entries(class_count, client_count, entries)?;
    let client_manifests =
        deal_examples(labeled_subsets, &matrix, samples_per_class, &mut rng)?;
    Ok(PrediOutcome {
        matrix,
        client_manifests,
    })
}

fn validate_inputs<S: Scalar>(
    subsets: &[CorpusManifest<S>],
    target: &PartitionTarget,
    class_count: usize,
    client_count: usize,
    samples_per_class: usize,
) -> Result<(), PartitionError> {
    if class_count == 0 || client_count == 0 || samples_per_class == 0 {
        return Err(PartitionError::InvalidParam(
            "class_count, client_count, samples_per_class must be >= 1".into(),
        ));
    }
    if !(target.mean_prevalence >= 1.0 && target.mean_prevalence <= client_count as f64) {
        return Err(PartitionError::InfeasibleTarget(format!(
            "mean prevalence {} outside [1, {client_count}]",
            target.mean_prevalence
        )));
    }
    if !target.size_disparity.is_finite() || target.size_disparity < 0.0 {
        return Err(PartitionError::InvalidParam(
            "size disparity target must be >= 0".into(),
        ));
    }
    if target.disparity_tolerance <= 0.0 {
        return Err(PartitionError::InvalidParam(
            "disparity tolerance must be > 0".into(),
        ));
    }
    if let Some(t) = target.prevalence_tolerance {
        if t <= 0.0 {
            return Err(PartitionError::InvalidParam(
                "prevalence tolerance must be > 0".into(),
            ));
        }
    }
    if subsets.is_empty() {
        return Err(PartitionError::InvalidParam("no labeled subsets".into()));
    }
    for m in subsets {
        if m.class_count() != class_count {
            return Err(PartitionError::InvalidParam(format!(
                "subset declares {} classes, expected {class_count}",
                m.class_count()
            )));
        }
    }
    // Pooled per-class supply must support any realized prevalence.
    let mut pooled = vec![0usize; class_count];
    for m in subsets {
        for (c, n) in m.per_class_counts().iter().enumerate() {
            pooled[c] += n;
        }
    }
    let need = samples_per_class * client_count;
    for (c, &have) in pooled.iter().enumerate() {
        if have < need {
            return Err(PartitionError::InsufficientPool {
                class_id: c,
                have,
                need,
            });
        }
    }
    Ok(())
}

/// Stage 1: per-class prevalence, all ones plus random unit increments until
/// the mean is within tolerance of the target.
fn assign_prevalence(
    target: &PartitionTarget,
    class_count: usize,
    client_count: usize,
    rng: &mut impl Rng,
) -> Result<Vec<usize>, PartitionError> {
    let tolerance = target
        .prevalence_tolerance
        .unwrap_or(1.0 / (2.0 * class_count as f64));
    let mut prevalence = vec![1usize; class_count];
    let mut sum = class_count;
    loop {
        let mean = sum as f64 / class_count as f64;
        if (mean - target.mean_prevalence).abs() <= tolerance {
            return Ok(prevalence);
        }
        if mean > target.mean_prevalence {
            return Err(PartitionError::InfeasibleTarget(format!(
                "prevalence increments overshot {} (reached {mean}); tolerance {tolerance} too tight",
                target.mean_prevalence
            )));
        }
        let open: Vec<usize> = (0..class_count)
            .filter(|&c| prevalence[c] < client_count)
            .collect();
        let Some(&pick) = open.as_slice().choose(rng) else {
            return Err(PartitionError::InfeasibleTarget(format!(
                "all classes saturated at prevalence {client_count} below target {}",
                target.mean_prevalence
            )));
        };
        prevalence[pick] += 1;
        sum += 1;
    }
}

fn population_std(counts: &[usize]) -> f64 {
    let k = counts.len() as f64;
    let mean = counts.iter().sum::<usize>() as f64 / k;
    let var = counts
        .iter()
        .map(|&n| {
            let d = n as f64 - mean;
            d * d
        })
        .sum::<f64>()
        / k;
    var.sqrt()
}

/// Stage 2: per-client class-count targets summing to `total`, with std close
/// to the disparity target.
fn assign_disparity(
    target: &PartitionTarget,
    total: usize,
    class_count: usize,
    client_count: usize,
    rng: &mut impl Rng,
) -> Result<Vec<usize>, PartitionError> {
    let mean = total as f64 / client_count as f64;
    let mut best = f64::INFINITY;
    for _ in 0..target.max_retries.max(1) {
        let draws: Vec<f64> = (0..client_count)
            .map(|_| mean + target.size_disparity * rng.sample::<f64, _>(rand_distr::StandardNormal))
            .collect();
        let mut counts: Vec<usize> = draws
            .iter()
            .map(|&g| (g.round().max(1.0) as usize).min(class_count))
            .collect();
        repair_counts(&mut counts, &draws, total, class_count);
        let std = population_std(&counts);
        let gap = (std - target.size_disparity).abs();
        if gap <= target.disparity_tolerance {
            return Ok(counts);
        }
        best = best.min(std);
    }
    Err(PartitionError::RetryBudgetExhausted {
        retries: target.max_retries,
        best,
        target: target.size_disparity,
    })
}

/// Adjust counts by +-1 within `[1, class_count]` until they sum to `total`,
/// each step moving the client farthest from its unclamped draw.
fn repair_counts(counts: &mut [usize], draws: &[f64], total: usize, class_count: usize) {
    let mut current: usize = counts.iter().sum();
    while current < total {
        let mut pick = usize::MAX;
        let mut best = f64::NEG_INFINITY;
        for (i, &q) in counts.iter().enumerate() {
            if q < class_count {
                let shortfall = draws[i] - q as f64;
                if shortfall > best {
                    best = shortfall;
                    pick = i;
                }
            }
        }
        counts[pick] += 1;
        current += 1;
    }
    while current > total {
        let mut pick = usize::MAX;
        let mut best = f64::NEG_INFINITY;
        for (i, &q) in counts.iter().enumerate() {
            if q > 1 {
                let excess = q as f64 - draws[i];
                if excess > best {
                    best = excess;
                    pick = i;
                }
            }
        }
        counts[pick] -= 1;
        current -= 1;
    }
}

/// Stage 3: greedy allocation. Classes are visited in random order; each goes
/// to the clients with the largest remaining gap to their count target, ties
/// and gap-exhausted slots resolved uniformly at random.
fn allocate_classes(
    prevalence: &[usize],
    count_targets: &[usize],
    class_count: usize,
    client_count: usize,
    rng: &mut impl Rng,
) -> Vec<bool> {
    let mut order: Vec<usize> = (0..class_count).collect();
    order.shuffle(rng);

    let mut entries = vec![false; class_count * client_count];
    let mut held = vec![0usize; client_count];
    for &c in &order {
        // One random key per client; sorting by (gap desc, key) implements
        // both uniform tie-breaking and the uniform overflow rule.
        let keys: Vec<f64> = (0..client_count).map(|_| rng.random::<f64>()).collect();
        let mut ranked: Vec<usize> = (0..client_count).collect();
        ranked.sort_by(|&a, &b| {
            let gap_a = count_targets[a].saturating_sub(held[a]);
            let gap_b = count_targets[b].saturating_sub(held[b]);
            gap_b
                .cmp(&gap_a)
                .then_with(|| keys[a].partial_cmp(&keys[b]).unwrap())
        });
        for &k in ranked.iter().take(prevalence[c]) {
            entries[c * client_count + k] = true;
            held[k] += 1;
        }
    }
    entries
}

/// Stage 4: deal each class's pooled examples to its holders in disjoint
/// chunks of `samples_per_class`.
fn deal_examples<S: Scalar>(
    subsets: &[CorpusManifest<S>],
    matrix: &AssignmentMatrix,
    samples_per_class: usize,
    rng: &mut impl Rng,
) -> Result<Vec<CorpusManifest<S>>, PartitionError> {
    let class_count = matrix.class_count();
    let client_count = matrix.client_count();

    // Pool in subset order; ids must stay globally unique.
    let mut by_class: BTreeMap<usize, Vec<&Example<S>>> = BTreeMap::new();
    let mut seen = std::collections::BTreeSet::new();
    for m in subsets {
        for ex in m.examples() {
            if !seen.insert(ex.id) {
                return Err(PartitionError::InvalidParam(format!(
                    "duplicate example id {} across subsets",
                    ex.id
                )));
            }
            if ex.is_labeled() {
                by_class.entry(ex.label()).or_default().push(ex);
            }
        }
    }

    let mut per_client: Vec<Vec<Example<S>>> = vec![Vec::new(); client_count];
    for c in 0..class_count {
        let pool = by_class.get(&c).map(Vec::as_slice).unwrap_or(&[]);
        let holders = matrix.class_clients(c);
        let need = holders.len() * samples_per_class;
        if pool.len() < need {
            return Err(PartitionError::InsufficientPool {
                class_id: c,
                have: pool.len(),
                need,
            });
        }
        let mut order: Vec<usize> = (0..pool.len()).collect();
        order.shuffle(rng);
        for (slot, &k) in holders.iter().enumerate() {
            let start = slot * samples_per_class;
            per_client[k].extend(
                order[start..start + samples_per_class]
                    .iter()
                    .map(|&i| pool[i].clone()),
            );
        }
    }

    let template = &subsets[0];
    per_client
        .into_iter()
        .map(|examples| {
            CorpusManifest::new(
                examples,
                template.class_names().to_vec(),
                template.provenance(),
                template.feature_dim(),
            )
            .map_err(PartitionError::from)
        })
        .collect()
}
