//! Synthetic Gaussian-cluster corpora with controllable difficulty.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{CorpusError, CorpusManifest, Example};
use crate::scalar::{cast, Scalar};
use crate::seed;

/// Held-out probes per class used for the separability estimate.
const PROBES_PER_CLASS: usize = 32;

/// Per-class example counts: one shared count or an explicit list.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(untagged)]
pub enum ClassCounts {
    Uniform(usize),
    Explicit(Vec<usize>),
}

impl ClassCounts {
    /// Resolve to one count per class.
    pub fn resolve(&self, class_count: usize) -> Vec<usize> {
        match self {
            ClassCounts::Uniform(n) => vec![*n; class_count],
            ClassCounts::Explicit(counts) => counts.clone(),
        }
    }
}

/// Recipe for a synthetic corpus: one Gaussian cluster per class.
///
/// Class means are drawn from `N(0, mean_separation^2 I)`; examples add
/// `N(0, noise_scale^2 I)` around their class mean, so the
/// `mean_separation / noise_scale` ratio controls task difficulty.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct SyntheticSpec {
    pub class_count: usize,
    /// Labeled examples per class: a single shared count or one per class.
    pub per_class: ClassCounts,
    pub feature_dim: usize,
    pub mean_separation: f64,
    pub noise_scale: f64,
    pub seed: u64,
}

impl SyntheticSpec {
    /// Uniform per-class counts.
    pub fn uniform(
        class_count: usize,
        examples_per_class: usize,
        feature_dim: usize,
        mean_separation: f64,
        noise_scale: f64,
        seed: u64,
    ) -> Self {
        SyntheticSpec {
            class_count,
            per_class: ClassCounts::Uniform(examples_per_class),
            feature_dim,
            mean_separation,
            noise_scale,
            seed,
        }
    }

    pub fn validate(&self) -> Result<(), CorpusError> {
        if self.class_count == 0 {
            return Err(CorpusError::InvalidParam("class_count must be >= 1".into()));
        }
        let counts = self.per_class.resolve(self.class_count);
        if counts.len() != self.class_count {
            return Err(CorpusError::InvalidParam(format!(
                "per_class has {} entries for {} classes",
                counts.len(),
                self.class_count
            )));
        }
        if counts.iter().any(|&n| n == 0) {
            return Err(CorpusError::InvalidParam(
                "per-class counts must be positive".into(),
            ));
        }
        if self.feature_dim == 0 {
            return Err(CorpusError::InvalidParam("feature_dim must be >= 1".into()));
        }
        if !self.noise_scale.is_finite() || self.noise_scale < 0.0 {
            return Err(CorpusError::InvalidParam("noise_scale must be >= 0".into()));
        }
        if !self.mean_separation.is_finite() {
            return Err(CorpusError::InvalidParam(
                "mean_separation must be finite".into(),
            ));
        }
        Ok(())
    }
}

/// Generated corpus plus the ground truth used to tune difficulty.
#[derive(Debug, Clone)]
pub struct SyntheticCorpus<S> {
    pub manifest: CorpusManifest<S>,
    /// The generating class means.
    pub class_means: Vec<Vec<S>>,
    /// Nearest-mean accuracy on held-out probe draws; 1.0 means trivially
    /// separable, 1/C means hopeless.
    pub separability: f64,
}

/// Generate a corpus from `spec`. Byte-identical output for equal specs.
pub fn generate_synthetic<S: Scalar>(
    spec: &SyntheticSpec,
) -> Result<SyntheticCorpus<S>, CorpusError> {
    spec.validate()?;
    let mut rng = seed::rng(spec.seed, &[]);
    let d = spec.feature_dim;

    let mut means: Vec<Vec<f64>> = Vec::with_capacity(spec.class_count);
    for _ in 0..spec.class_count {
        means.push(
            (0..d)
                .map(|_| spec.mean_separation * rng.sample::<f64, _>(StandardNormal))
                .collect(),
        );
    }

    let mut examples = Vec::new();
    let mut next_id = 0u64;
    for (c, count) in spec.per_class.resolve(spec.class_count).into_iter().enumerate() {
        for _ in 0..count {
            let features: Vec<S> = (0..d)
                .map(|j| {
                    cast(means[c][j] + spec.noise_scale * rng.sample::<f64, _>(StandardNormal))
                })
                .collect();
            examples.push(Example::new(next_id, c as i32, features));
            next_id += 1;
        }
    }

    // Held-out probes, classified against the true means.
    let mut hits = 0usize;
    let mut total = 0usize;
    for c in 0..spec.class_count {
        for _ in 0..PROBES_PER_CLASS {
            let probe: Vec<f64> = (0..d)
                .map(|j| means[c][j] + spec.noise_scale * rng.sample::<f64, _>(StandardNormal))
                .collect();
            let pred = nearest_mean(&probe, &means);
            hits += usize::from(pred == c);
            total += 1;
        }
    }
    let separability = hits as f64 / total as f64;

    let class_names = (0..spec.class_count).map(|c| format!("class_{c}")).collect();
    let provenance = format!(
        "synthetic c={} d={} sep={} noise={} seed={}",
        spec.class_count, d, spec.mean_separation, spec.noise_scale, spec.seed
    );
    let manifest = CorpusManifest::new(examples, class_names, provenance, d)?;
    let class_means = means
        .iter()
        .map(|m| m.iter().map(|&v| cast(v)).collect())
        .collect();
    Ok(SyntheticCorpus {
        manifest,
        class_means,
        separability,
    })
}

fn nearest_mean(x: &[f64], means: &[Vec<f64>]) -> usize {
    let mut best = 0usize;
    let mut best_d = f64::INFINITY;
    for (c, m) in means.iter().enumerate() {
        let dist: f64 = x
            .iter()
            .zip(m)
            .map(|(a, b)| {
                let r = a - b;
                r * r
            })
            .sum();
        if dist < best_d {
            best_d = dist;
            best = c;
        }
    }
    best
}

/// Fraction of labeled examples whose nearest class mean matches their label.
pub fn nearest_mean_accuracy<S: Scalar>(
    manifest: &CorpusManifest<S>,
    class_means: &[Vec<S>],
) -> f64 {
    let mut hits = 0usize;
    let mut total = 0usize;
    let means_f64: Vec<Vec<f64>> = class_means
        .iter()
        .map(|m| m.iter().map(|v| v.to_f64().unwrap()).collect())
        .collect();
    for ex in manifest.examples() {
        if !ex.is_labeled() {
            continue;
        }
        let x: Vec<f64> = ex.features.iter().map(|v| v.to_f64().unwrap()).collect();
        hits += usize::from(nearest_mean(&x, &means_f64) == ex.label());
        total += 1;
    }
    if total == 0 {
        0.0
    } else {
        hits as f64 / total as f64
    }
}
