//! Class-labeled corpora and the dataset reconstruction pipeline.
//!
//! A [`CorpusManifest`] is an inventory of feature-vector examples. The
//! operations here reproduce the reconstruction chain used by the
//! experiments: filter rare classes, stratified train/test split, balanced
//! labeled subsets, and an unlabeled pool built from the train split plus the
//! filtered remainder. Everything is a pure function of (inputs, seed).

mod io;
pub mod reference;
mod synth;

pub use io::{manifest_from_str, manifest_to_string, read_manifest, write_manifest};
pub use synth::{generate_synthetic, nearest_mean_accuracy, ClassCounts, SyntheticCorpus, SyntheticSpec};

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use thiserror::Error;

use crate::scalar::Scalar;
use crate::seed;

/// Sentinel `class_id` for unlabeled examples, so labeled manifests and
/// unlabeled pools share one type.
pub const UNLABELED: i32 = -1;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("invalid corpus: {0}")]
    Invalid(String),
    #[error("duplicate example id {0}")]
    DuplicateId(u64),
    #[error("example {id}: class_id {class_id} out of range for {class_count} classes")]
    ClassOutOfRange {
        id: u64,
        class_id: i32,
        class_count: usize,
    },
    #[error("example {id}: feature dimension {got}, corpus expects {expected}")]
    DimMismatch { id: u64, got: usize, expected: usize },
    #[error("example {id}: non-finite feature value")]
    NonFinite { id: u64 },
    #[error("no class has at least {min_count} examples")]
    NoClassMeetsThreshold { min_count: usize },
    #[error("class {class_id} has {count} examples; {needed} required")]
    ClassTooSmall {
        class_id: usize,
        count: usize,
        needed: usize,
    },
    #[error("invalid parameter: {0}")]
    InvalidParam(String),
    #[error("manifest I/O: {0}")]
    Io(#[from] std::io::Error),
    #[error("manifest parse error at line {line}: {reason}")]
    Parse { line: usize, reason: String },
}

/// One example: a feature vector standing in for an image.
#[derive(Debug, Clone, PartialEq)]
pub struct Example<S> {
    pub id: u64,
    /// Class index in `[0, C)`, or [`UNLABELED`].
    pub class_id: i32,
    pub features: Vec<S>,
}

impl<S: Scalar> Example<S> {
    pub fn new(id: u64, class_id: i32, features: Vec<S>) -> Self {
        Example {
            id,
            class_id,
            features,
        }
    }

    pub fn is_labeled(&self) -> bool {
        self.class_id != UNLABELED
    }

    /// Label as a dense class index. Panics on unlabeled examples.
    pub fn label(&self) -> usize {
        debug_assert!(self.class_id >= 0, "label() on unlabeled example");
        self.class_id as usize
    }
}

/// A validated inventory of examples with a shared class list.
#[derive(Debug, Clone, PartialEq)]
pub struct CorpusManifest<S> {
    examples: Vec<Example<S>>,
    class_names: Vec<String>,
    provenance: String,
    feature_dim: usize,
}

impl<S: Scalar> CorpusManifest<S> {
    /// Build a manifest, checking the type invariants: unique ids, uniform
    /// feature dimension, finite features, and every referenced class named.
    pub fn new(
        examples: Vec<Example<S>>,
        class_names: Vec<String>,
        provenance: impl Into<String>,
        feature_dim: usize,
    ) -> Result<Self, CorpusError> {
        let provenance = provenance.into();
        if feature_dim == 0 {
            return Err(CorpusError::Invalid("feature dimension must be >= 1".into()));
        }
        if provenance.contains('\n') || provenance.contains('\r') {
            return Err(CorpusError::Invalid("provenance must be a single line".into()));
        }
        let mut seen = BTreeSet::new();
        for ex in &examples {
            if !seen.insert(ex.id) {
                return Err(CorpusError::DuplicateId(ex.id));
            }
            if ex.features.len() != feature_dim {
                return Err(CorpusError::DimMismatch {
                    id: ex.id,
                    got: ex.features.len(),
                    expected: feature_dim,
                });
            }
            if ex.features.iter().any(|v| !v.is_finite()) {
                return Err(CorpusError::NonFinite { id: ex.id });
            }
            if ex.class_id != UNLABELED
                && (ex.class_id < 0 || ex.class_id as usize >= class_names.len())
            {
                return Err(CorpusError::ClassOutOfRange {
                    id: ex.id,
                    class_id: ex.class_id,
                    class_count: class_names.len(),
                });
            }
        }
        Ok(CorpusManifest {
            examples,
            class_names,
            provenance,
            feature_dim,
        })
    }

    pub fn examples(&self) -> &[Example<S>] {
        &self.examples
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    pub fn class_count(&self) -> usize {
        self.class_names.len()
    }

    pub fn provenance(&self) -> &str {
        &self.provenance
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    /// Number of labeled examples per class, indexed by class id.
    pub fn per_class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0usize; self.class_count()];
        for ex in &self.examples {
            if ex.is_labeled() {
                counts[ex.label()] += 1;
            }
        }
        counts
    }

    /// Set of class ids carried by at least one labeled example.
    pub fn label_set(&self) -> BTreeSet<usize> {
        self.examples
            .iter()
            .filter(|e| e.is_labeled())
            .map(|e| e.label())
            .collect()
    }

    pub fn ids(&self) -> BTreeSet<u64> {
        self.examples.iter().map(|e| e.id).collect()
    }

    /// Labeled example indices grouped by class, in manifest order.
    fn indices_by_class(&self) -> BTreeMap<usize, Vec<usize>> {
        let mut by_class: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for (i, ex) in self.examples.iter().enumerate() {
            if ex.is_labeled() {
                by_class.entry(ex.label()).or_default().push(i);
            }
        }
        by_class
    }
}

/// Result of [`filter_min_count`]: the retained classes re-indexed densely,
/// plus everything else with labels erased (it feeds the unlabeled pool).
#[derive(Debug, Clone)]
pub struct FilteredCorpus<S> {
    pub kept: CorpusManifest<S>,
    /// Examples of dropped classes (and any already-unlabeled input), labels erased.
    pub remainder: CorpusManifest<S>,
    /// Old class id to new dense class id.
    pub class_map: BTreeMap<usize, usize>,
}

/// Retain only classes with at least `min_count` labeled examples and
/// re-index the survivors densely to `[0, C')`.
pub fn filter_min_count<S: Scalar>(
    manifest: &CorpusManifest<S>,
    min_count: usize,
) -> Result<FilteredCorpus<S>, CorpusError> {
    if min_count < 1 {
        return Err(CorpusError::InvalidParam("min_count must be >= 1".into()));
    }
    let counts = manifest.per_class_counts();
    let kept_old: Vec<usize> = (0..manifest.class_count())
        .filter(|&c| counts[c] >= min_count)
        .collect();
    if kept_old.is_empty() {
        return Err(CorpusError::NoClassMeetsThreshold { min_count });
    }
    let class_map: BTreeMap<usize, usize> = kept_old
        .iter()
        .enumerate()
        .map(|(new, &old)| (old, new))
        .collect();

    let mut kept_examples = Vec::new();
    let mut rest = Vec::new();
    for ex in manifest.examples() {
        let new_id = if ex.is_labeled() {
            class_map.get(&ex.label()).copied()
        } else {
            None
        };
        let mut e = ex.clone();
        match new_id {
            Some(n) => {
                e.class_id = n as i32;
                kept_examples.push(e);
            }
            None => {
                e.class_id = UNLABELED;
                rest.push(e);
            }
        }
    }
    let class_names: Vec<String> = kept_old
        .iter()
        .map(|&old| manifest.class_names()[old].clone())
        .collect();
    let kept = CorpusManifest::new(
        kept_examples,
        class_names,
        manifest.provenance(),
        manifest.feature_dim(),
    )?;
    let remainder = CorpusManifest::new(
        rest,
        Vec::new(),
        manifest.provenance(),
        manifest.feature_dim(),
    )?;
    Ok(FilteredCorpus {
        kept,
        remainder,
        class_map,
    })
}

fn round_half_up(x: f64) -> usize {
    (x + 0.5).floor() as usize
}

/// Per-class stratified split. `|test_c| = round(test_fraction * |class_c|)`
/// (half rounds up), repaired so each class keeps at least one example on
/// each side. Deterministic under `seed`.
pub fn train_test_split<S: Scalar>(
    manifest: &CorpusManifest<S>,
    test_fraction: f64,
    seed: u64,
) -> Result<(CorpusManifest<S>, CorpusManifest<S>), CorpusError> {
    if !test_fraction.is_finite() || test_fraction <= 0.0 || test_fraction >= 1.0 {
        return Err(CorpusError::InvalidParam(format!(
            "test_fraction must be in (0,1), got {test_fraction}"
        )));
    }
    if manifest.examples().iter().any(|e| !e.is_labeled()) {
        return Err(CorpusError::InvalidParam(
            "train_test_split requires a fully labeled corpus".into(),
        ));
    }
    let by_class = manifest.indices_by_class();
    for c in 0..manifest.class_count() {
        let count = by_class.get(&c).map_or(0, Vec::len);
        if count < 2 {
            return Err(CorpusError::ClassTooSmall {
                class_id: c,
                count,
                needed: 2,
            });
        }
    }

    let mut rng = seed::rng(seed, &[]);
    let mut test_idx = BTreeSet::new();
    for (_, indices) in by_class {
        let count = indices.len();
        let n_test = round_half_up(test_fraction * count as f64).clamp(1, count - 1);
        let mut shuffled = indices;
        shuffled.shuffle(&mut rng);
        test_idx.extend(shuffled.into_iter().take(n_test));
    }

    let mut train = Vec::new();
    let mut test = Vec::new();
    for (i, ex) in manifest.examples().iter().enumerate() {
        if test_idx.contains(&i) {
            test.push(ex.clone());
        } else {
            train.push(ex.clone());
        }
    }
    let mk = |examples| {
        CorpusManifest::new(
            examples,
            manifest.class_names().to_vec(),
            manifest.provenance(),
            manifest.feature_dim(),
        )
    };
    Ok((mk(train)?, mk(test)?))
}

/// Union of `train` and `remainder` with all class labels erased.
pub fn build_unlabeled_pool<S: Scalar>(
    train: &CorpusManifest<S>,
    remainder: &CorpusManifest<S>,
) -> Result<CorpusManifest<S>, CorpusError> {
    if train.feature_dim() != remainder.feature_dim() && !remainder.is_empty() {
        return Err(CorpusError::InvalidParam(format!(
            "feature dimensions differ: {} vs {}",
            train.feature_dim(),
            remainder.feature_dim()
        )));
    }
    let train_ids = train.ids();
    if let Some(dup) = remainder.examples().iter().find(|e| train_ids.contains(&e.id)) {
        return Err(CorpusError::DuplicateId(dup.id));
    }
    let mut pool = Vec::with_capacity(train.len() + remainder.len());
    for ex in train.examples().iter().chain(remainder.examples()) {
        let mut e = ex.clone();
        e.class_id = UNLABELED;
        pool.push(e);
    }
    CorpusManifest::new(pool, Vec::new(), train.provenance(), train.feature_dim())
}

/// Sample `client_count` pairwise id-disjoint subsets from `train`, each with
/// exactly `samples_per_class` examples of every class.
pub fn sample_labeled_subsets<S: Scalar>(
    train: &CorpusManifest<S>,
    client_count: usize,
    samples_per_class: usize,
    seed: u64,
) -> Result<Vec<CorpusManifest<S>>, CorpusError> {
    if client_count == 0 || samples_per_class == 0 {
        return Err(CorpusError::InvalidParam(
            "client_count and samples_per_class must be >= 1".into(),
        ));
    }
    let by_class = train.indices_by_class();
    let needed = client_count * samples_per_class;
    for c in 0..train.class_count() {
        let count = by_class.get(&c).map_or(0, Vec::len);
        if count < needed {
            return Err(CorpusError::ClassTooSmall {
                class_id: c,
                count,
                needed,
            });
        }
    }

    let mut rng = seed::rng(seed, &[]);
    let mut per_client: Vec<Vec<Example<S>>> = vec![Vec::new(); client_count];
    for (_, indices) in by_class {
        let mut shuffled = indices;
        shuffled.shuffle(&mut rng);
        for (k, chunk) in shuffled.chunks(samples_per_class).take(client_count).enumerate() {
            per_client[k].extend(chunk.iter().map(|&i| train.examples()[i].clone()));
        }
    }
    per_client
        .into_iter()
        .map(|examples| {
            CorpusManifest::new(
                examples,
                train.class_names().to_vec(),
                train.provenance(),
                train.feature_dim(),
            )
        })
        .collect()
}
