//! The server/client protocol: size-weighted parameter averaging, the
//! one-shot prevalence exchange, and the two-stage federated pipeline.

mod protocol;

pub use protocol::{
    evaluate_global, federated_finetune, federated_pretrain, EvalRecord, FinetuneOutcome,
    PretrainOutcome,
};

use std::collections::BTreeSet;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::CorpusError;
use crate::learners::{LearnerError, OptimizerConfig, ParamVector};
use crate::metrics::MetricsError;
use crate::scalar::{cast, Scalar};

#[derive(Debug, Error)]
pub enum FederationError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("client parameter layouts differ (client {0})")]
    LayoutMismatch(usize),
    #[error("aggregation weights are all zero")]
    AllZeroSizes,
    #[error("client {0} has an empty dataset")]
    EmptyClient(usize),
    #[error("class {0} is absent from every client")]
    MissingClass(usize),
    #[error("class id {class} outside [0, {classes})")]
    ClassOutOfRange { class: usize, classes: usize },
    #[error("client {client}: label set does not match the assignment matrix")]
    LabelSetMismatch { client: usize },
    #[error(transparent)]
    Learner(#[from] LearnerError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error("log I/O: {0}")]
    Io(#[from] std::io::Error),
}

/// Schedule for one federated stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageConfig {
    pub rounds: usize,
    pub optimizer: OptimizerConfig,
}

/// Everything a two-stage federated run needs besides the data.
///
/// `Default` is the desk-scale preset; [`FederationConfig::paper_scale`]
/// records the published schedule (800 pre-training and 100 fine-tuning
/// rounds, batch 128/64, base rates 1.5e-4 and 1e-3, 75% masking) as a
/// non-default preset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FederationConfig {
    pub client_count: usize,
    /// Hidden width of the toy affine encoder.
    pub encoder_dim: usize,
    /// Feature patches for the masking operator; must divide the corpus
    /// feature dimension.
    pub mask_patches: usize,
    pub mask_ratio: f64,
    pub pretrain: StageConfig,
    pub finetune: StageConfig,
    /// Root of the seed ladder; client/round/stage streams derive from it.
    pub seed: u64,
    /// Evaluate every `eval_stride` fine-tuning rounds (and always the last).
    pub eval_stride: usize,
    /// Scale of the Gaussian parameter initialization.
    pub init_scale: f64,
    /// Permit clients with empty unlabeled pools; they receive weight zero.
    pub allow_empty_pools: bool,
    /// Rescale prevalence weights to mean one before use (off by default;
    /// the reciprocal weights are used verbatim otherwise).
    pub renormalize_weights: bool,
}

impl Default for FederationConfig {
    fn default() -> Self {
        FederationConfig {
            client_count: 4,
            encoder_dim: 16,
            mask_patches: 4,
            mask_ratio: 0.75,
            pretrain: StageConfig {
                rounds: 30,
                optimizer: OptimizerConfig::adam(0.01, 64, 1),
            },
            finetune: StageConfig {
                rounds: 20,
                optimizer: OptimizerConfig::adam(0.02, 32, 1),
            },
            seed: 0,
            eval_stride: 1,
            init_scale: 0.1,
            allow_empty_pools: false,
            renormalize_weights: false,
        }
    }
}

impl FederationConfig {
    /// The published training schedule, kept as configuration metadata. The
    /// learners stay the toy affine models regardless.
    pub fn paper_scale() -> Self {
        FederationConfig {
            client_count: 4,
            encoder_dim: 16,
            mask_patches: 16,
            mask_ratio: 0.75,
            pretrain: StageConfig {
                rounds: 800,
                optimizer: OptimizerConfig::adam(1.5e-4, 128, 1),
            },
            finetune: StageConfig {
                rounds: 100,
                optimizer: OptimizerConfig::adam(1.0e-3, 64, 1),
            },
            seed: 0,
            eval_stride: 10,
            init_scale: 0.1,
            allow_empty_pools: false,
            renormalize_weights: false,
        }
    }

    pub fn validate(&self) -> Result<(), FederationError> {
        if self.client_count == 0 {
            return Err(FederationError::InvalidConfig("client_count must be >= 1".into()));
        }
        if self.encoder_dim == 0 {
            return Err(FederationError::InvalidConfig("encoder_dim must be >= 1".into()));
        }
        if self.pretrain.rounds == 0 || self.finetune.rounds == 0 {
            return Err(FederationError::InvalidConfig("rounds must be >= 1".into()));
        }
        if self.eval_stride == 0 {
            return Err(FederationError::InvalidConfig("eval_stride must be >= 1".into()));
        }
        if !self.init_scale.is_finite() || self.init_scale <= 0.0 {
            return Err(FederationError::InvalidConfig("init_scale must be > 0".into()));
        }
        self.pretrain.optimizer.validate()?;
        self.finetune.optimizer.validate()?;
        Ok(())
    }

    pub fn from_toml(text: &str) -> Result<Self, FederationError> {
        let cfg: FederationConfig = toml::from_str(text)
            .map_err(|e| FederationError::InvalidConfig(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Size-weighted coordinatewise mean of client parameters. Summation runs in
/// client-index order so results are bit-reproducible.
pub fn fedavg<S: Scalar>(
    client_params: &[ParamVector<S>],
    sizes: &[usize],
) -> Result<ParamVector<S>, FederationError> {
    if client_params.is_empty() || client_params.len() != sizes.len() {
        return Err(FederationError::InvalidConfig(format!(
            "{} parameter vectors against {} sizes",
            client_params.len(),
            sizes.len()
        )));
    }
    let layout = client_params[0].layout().clone();
    for (k, p) in client_params.iter().enumerate() {
        if p.layout() != &layout {
            return Err(FederationError::LayoutMismatch(k));
        }
    }
    let total: usize = sizes.iter().sum();
    if total == 0 {
        return Err(FederationError::AllZeroSizes);
    }
    let total_s = cast::<S>(total as f64);
    let mut acc = vec![S::zero(); layout.total_len()];
    for (p, &n) in client_params.iter().zip(sizes) {
        let w = cast::<S>(n as f64) / total_s;
        for (a, v) in acc.iter_mut().zip(p.values()) {
            *a += w * *v;
        }
    }
    Ok(ParamVector::from_values(layout, acc)?)
}

/// Reciprocal prevalence weights from the one-shot label-id exchange.
///
/// Invariants: every prevalence is in `[1, K]` and every weight is exactly
/// the reciprocal of its prevalence.
#[derive(Debug, Clone, PartialEq)]
pub struct PrevalenceWeights<S> {
    prevalence: Vec<usize>,
    weights: Vec<S>,
}

impl<S: Scalar> PrevalenceWeights<S> {
    fn from_prevalence(prevalence: Vec<usize>) -> Self {
        let weights = prevalence
            .iter()
            .map(|&r| S::one() / cast::<S>(r as f64))
            .collect();
        PrevalenceWeights {
            prevalence,
            weights,
        }
    }

    pub fn prevalence(&self) -> &[usize] {
        &self.prevalence
    }

    pub fn weights(&self) -> &[S] {
        &self.weights
    }

    pub fn class_count(&self) -> usize {
        self.prevalence.len()
    }

    /// Weights rescaled to mean one. Exposed as an option; the exchange
    /// itself always produces the plain reciprocals.
    pub fn renormalized(&self) -> Vec<S> {
        let mean = self
            .weights
            .iter()
            .fold(S::zero(), |a, &b| a + b)
            / cast::<S>(self.weights.len() as f64);
        self.weights.iter().map(|&w| w / mean).collect()
    }
}

/// Count, for every class, how many clients report it, and weight by the
/// reciprocal. Consumes nothing but class-id sets.
pub fn collect_prevalence<S: Scalar>(
    label_sets: &[BTreeSet<usize>],
    class_count: usize,
) -> Result<PrevalenceWeights<S>, FederationError> {
    if label_sets.is_empty() || class_count == 0 {
        return Err(FederationError::InvalidConfig(
            "need at least one client and one class".into(),
        ));
    }
    let mut prevalence = vec![0usize; class_count];
    for set in label_sets {
        for &c in set {
            if c >= class_count {
                return Err(FederationError::ClassOutOfRange {
                    class: c,
                    classes: class_count,
                });
            }
            prevalence[c] += 1;
        }
    }
    if let Some(c) = prevalence.iter().position(|&r| r == 0) {
        return Err(FederationError::MissingClass(c));
    }
    Ok(PrevalenceWeights::from_prevalence(prevalence))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Pretrain,
    Finetune,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stage::Pretrain => "pretrain",
            Stage::Finetune => "finetune",
        })
    }
}

/// One client's contribution to a round.
#[derive(Debug, Clone, PartialEq)]
pub struct ClientRound {
    pub client: usize,
    pub samples: usize,
    pub mean_loss: f64,
    pub step_losses: Vec<f64>,
}

/// Evaluation numbers attached to eval rounds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalSummary {
    pub macro_accuracy: f64,
    pub macro_f1: f64,
}

/// Per-round record: client updates, the aggregated-parameter checksum, and
/// metrics when the round was evaluated.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundLog {
    pub stage: Stage,
    pub round: usize,
    pub clients: Vec<ClientRound>,
    pub checksum: u64,
    pub metrics: Option<EvalSummary>,
}

/// One line per client: `stage round client n_k mean_loss checksum`.
pub fn format_round_log(log: &RoundLog) -> String {
    let mut out = String::new();
    for c in &log.clients {
        out.push_str(&format!(
            "{} {} {} {} {} {:016x}\n",
            log.stage, log.round, c.client, c.samples, c.mean_loss, log.checksum
        ));
    }
    out
}

pub fn write_round_logs(
    path: impl AsRef<Path>,
    logs: &[RoundLog],
) -> Result<(), FederationError> {
    let mut text = String::new();
    for log in logs {
        text.push_str(&format_round_log(log));
    }
    std::fs::write(path, text)?;
    Ok(())
}
