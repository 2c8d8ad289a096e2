//! The two-stage pipeline: federated masked-reconstruction pre-training,
//! then federated fine-tuning with optional prevalence weighting.
//!
//! One round is broadcast -> K independent client updates -> aggregation in
//! client-index order. Client update streams hang off the seed ladder as
//! `(stage, round, client)`, so trajectories decouple deterministically; the
//! per-round mask schedule is keyed by `(stage, round)` only, making the
//! objective a function of the data rather than of the client index.

use std::collections::BTreeSet;

use super::{
    collect_prevalence, fedavg, ClientRound, EvalSummary, FederationConfig, FederationError,
    PrevalenceWeights, RoundLog, Stage,
};
use crate::corpus::CorpusManifest;
use crate::learners::{local_update, Layout, LossSpec, ParamVector, ENCODER, HEAD};
use crate::metrics::{macro_metrics, ConfusionMatrix};
use crate::partition::AssignmentMatrix;
use crate::scalar::Scalar;
use crate::seed::{derive, tag};

/// Final global encoder from pre-training; the decoder is dropped once
/// training ends.
#[derive(Debug, Clone)]
pub struct PretrainOutcome<S> {
    pub encoder: ParamVector<S>,
    pub logs: Vec<RoundLog>,
}

/// Fine-tuned global model (encoder + head), the exchanged weights when
/// prevalence weighting was on, and the round logs.
#[derive(Debug, Clone)]
pub struct FinetuneOutcome<S> {
    pub model: ParamVector<S>,
    pub weights: Option<PrevalenceWeights<S>>,
    pub logs: Vec<RoundLog>,
}

fn common_feature_dim<S: Scalar>(
    manifests: &[CorpusManifest<S>],
) -> Result<usize, FederationError> {
    let d = manifests
        .first()
        .map(CorpusManifest::feature_dim)
        .ok_or_else(|| FederationError::InvalidConfig("no client datasets".into()))?;
    if manifests.iter().any(|m| m.feature_dim() != d) {
        return Err(FederationError::InvalidConfig(
            "client feature dimensions differ".into(),
        ));
    }
    Ok(d)
}

/// Federated self-supervised pre-training over unlabeled pools.
///
/// Every round broadcasts the autoencoder, runs a local reconstruction
/// update per client, and averages encoder and decoder weighted by pool
/// sizes. Returns the final encoder only.
pub fn federated_pretrain<S: Scalar>(
    pools: &[CorpusManifest<S>],
    cfg: &FederationConfig,
) -> Result<PretrainOutcome<S>, FederationError> {
    cfg.validate()?;
    if pools.len() != cfg.client_count {
        return Err(FederationError::InvalidConfig(format!(
            "{} pools for {} clients",
            pools.len(),
            cfg.client_count
        )));
    }
    let d = common_feature_dim(pools)?;
    if d % cfg.mask_patches != 0 {
        return Err(FederationError::InvalidConfig(format!(
            "feature dim {d} not divisible by {} mask patches",
            cfg.mask_patches
        )));
    }
    let sizes: Vec<usize> = pools.iter().map(CorpusManifest::len).collect();
    if let Some(k) = sizes.iter().position(|&n| n == 0) {
        if !cfg.allow_empty_pools {
            return Err(FederationError::EmptyClient(k));
        }
    }
    if sizes.iter().all(|&n| n == 0) {
        return Err(FederationError::AllZeroSizes);
    }

    let layout = Layout::autoencoder(d, cfg.encoder_dim)?;
    let mut global = ParamVector::gaussian_init(
        layout,
        derive(cfg.seed, &[tag::PRETRAIN, tag::INIT]),
        cfg.init_scale,
    );

    let mut logs = Vec::with_capacity(cfg.pretrain.rounds);
    for round in 1..=cfg.pretrain.rounds {
        let loss = LossSpec::Reconstruction {
            patch_count: cfg.mask_patches,
            mask_ratio: cfg.mask_ratio,
            mask_seed: derive(cfg.seed, &[tag::PRETRAIN, tag::MASK, round as u64]),
        };
        let mut client_params = Vec::with_capacity(pools.len());
        let mut clients = Vec::with_capacity(pools.len());
        for (k, pool) in pools.iter().enumerate() {
            if pool.is_empty() {
                // weight zero in the average; broadcast params carried through
                client_params.push(global.clone());
                clients.push(ClientRound {
                    client: k,
                    samples: 0,
                    mean_loss: f64::NAN,
                    step_losses: Vec::new(),
                });
                continue;
            }
            let update_seed =
                derive(cfg.seed, &[tag::PRETRAIN, tag::CLIENT, round as u64, k as u64]);
            let outcome = local_update(
                &global,
                pool.examples(),
                &loss,
                &cfg.pretrain.optimizer,
                update_seed,
            )?;
            clients.push(ClientRound {
                client: k,
                samples: pool.len(),
                mean_loss: outcome.mean_loss(),
                step_losses: outcome.step_losses,
            });
            client_params.push(outcome.params);
        }
        global = fedavg(&client_params, &sizes)?;
        logs.push(RoundLog {
            stage: Stage::Pretrain,
            round,
            clients,
            checksum: global.checksum(),
            metrics: None,
        });
    }
    Ok(PretrainOutcome {
        encoder: global.extract(&[ENCODER])?,
        logs,
    })
}

/// Federated supervised fine-tuning from a pre-trained encoder.
///
/// With `use_prep` the server first collects the clients' label-id sets,
/// broadcasts reciprocal prevalence weights, and every client minimizes the
/// weighted cross-entropy; otherwise plain cross-entropy (the baseline). The
/// head is freshly initialized from the seed ladder; aggregation covers both
/// encoder and head, weighted by labeled counts.
pub fn federated_finetune<S: Scalar>(
    splits: &[CorpusManifest<S>],
    matrix: &AssignmentMatrix,
    init_encoder: &ParamVector<S>,
    cfg: &FederationConfig,
    use_prep: bool,
    eval_on: Option<&CorpusManifest<S>>,
) -> Result<FinetuneOutcome<S>, FederationError> {
    cfg.validate()?;
    if splits.len() != cfg.client_count || matrix.client_count() != cfg.client_count {
        return Err(FederationError::InvalidConfig(format!(
            "{} splits and a {}-client matrix for {} clients",
            splits.len(),
            matrix.client_count(),
            cfg.client_count
        )));
    }
    let class_count = matrix.class_count();
    for (k, split) in splits.iter().enumerate() {
        if split.class_count() != class_count {
            return Err(FederationError::InvalidConfig(format!(
                "client {k} declares {} classes, matrix has {class_count}",
                split.class_count()
            )));
        }
        let declared: BTreeSet<usize> = matrix.client_classes(k).into_iter().collect();
        if split.label_set() != declared {
            return Err(FederationError::LabelSetMismatch { client: k });
        }
    }
    let d = common_feature_dim(splits)?;
    let encoder_spec = init_encoder
        .layout()
        .spec(ENCODER)
        .ok_or_else(|| FederationError::InvalidConfig("init params carry no encoder".into()))?;
    if encoder_spec.in_dim != d {
        return Err(FederationError::InvalidConfig(format!(
            "encoder expects dimension {}, data has {d}",
            encoder_spec.in_dim
        )));
    }

    // One-shot exchange: label-id sets only.
    let weights = if use_prep {
        let sets: Vec<BTreeSet<usize>> = splits.iter().map(CorpusManifest::label_set).collect();
        Some(collect_prevalence::<S>(&sets, class_count)?)
    } else {
        None
    };
    let loss = match &weights {
        Some(w) => LossSpec::WeightedCrossEntropy {
            class_weights: if cfg.renormalize_weights {
                w.renormalized()
            } else {
                w.weights().to_vec()
            },
        },
        None => LossSpec::CrossEntropy,
    };

    let layout = Layout::classifier(d, encoder_spec.out_dim, class_count)?;
    let head_init = ParamVector::gaussian_init(
        layout.clone(),
        derive(cfg.seed, &[tag::FINETUNE, tag::HEAD]),
        cfg.init_scale,
    );
    let mut global = ParamVector::compose(layout, init_encoder, &head_init)?;

    let sizes: Vec<usize> = splits.iter().map(CorpusManifest::len).collect();
    let mut logs = Vec::with_capacity(cfg.finetune.rounds);
    for round in 1..=cfg.finetune.rounds {
        let mut client_params = Vec::with_capacity(splits.len());
        let mut clients = Vec::with_capacity(splits.len());
        for (k, split) in splits.iter().enumerate() {
            let update_seed =
                derive(cfg.seed, &[tag::FINETUNE, tag::CLIENT, round as u64, k as u64]);
            let outcome = local_update(
                &global,
                split.examples(),
                &loss,
                &cfg.finetune.optimizer,
                update_seed,
            )?;
            clients.push(ClientRound {
                client: k,
                samples: split.len(),
                mean_loss: outcome.mean_loss(),
                step_losses: outcome.step_losses,
            });
            client_params.push(outcome.params);
        }
        global = fedavg(&client_params, &sizes)?;
        let metrics = match eval_on {
            Some(test) if round % cfg.eval_stride == 0 || round == cfg.finetune.rounds => {
                let record = evaluate_global(&global, test)?;
                Some(EvalSummary {
                    macro_accuracy: record.macro_accuracy,
                    macro_f1: record.macro_f1,
                })
            }
            _ => None,
        };
        logs.push(RoundLog {
            stage: Stage::Finetune,
            round,
            clients,
            checksum: global.checksum(),
            metrics,
        });
    }
    Ok(FinetuneOutcome {
        model: global,
        weights,
        logs,
    })
}

/// Confusion matrix plus macro metrics of argmax predictions over a labeled
/// test manifest.
#[derive(Debug, Clone)]
pub struct EvalRecord {
    pub confusion: ConfusionMatrix,
    pub macro_accuracy: f64,
    pub macro_f1: f64,
}

/// Argmax prediction for one feature vector; ties break to the lowest class.
pub fn predict_class<S: Scalar>(
    params: &ParamVector<S>,
    features: &[S],
) -> Result<usize, FederationError> {
    let encoder = params.affine(ENCODER)?;
    let head = params.affine(HEAD)?;
    let mut hidden = vec![S::zero(); encoder.out_dim];
    let mut logits = vec![S::zero(); head.out_dim];
    encoder.apply(features, &mut hidden);
    head.apply(&hidden, &mut logits);
    let mut best = 0usize;
    let mut best_v = logits[0];
    for (j, &v) in logits.iter().enumerate().skip(1) {
        if v > best_v {
            best_v = v;
            best = j;
        }
    }
    Ok(best)
}

/// Evaluate a fine-tuned model on the shared labeled test set over the full
/// global label space.
pub fn evaluate_global<S: Scalar>(
    params: &ParamVector<S>,
    test: &CorpusManifest<S>,
) -> Result<EvalRecord, FederationError> {
    let head = params.affine(HEAD)?;
    if test.class_count() != head.out_dim {
        return Err(FederationError::InvalidConfig(format!(
            "model predicts {} classes, test set has {}",
            head.out_dim,
            test.class_count()
        )));
    }
    let mut cm = ConfusionMatrix::new(head.out_dim);
    for ex in test.examples() {
        if !ex.is_labeled() {
            return Err(FederationError::InvalidConfig(format!(
                "test example {} is unlabeled",
                ex.id
            )));
        }
        let pred = predict_class(params, &ex.features)?;
        cm.record(ex.label(), pred)?;
    }
    let m = macro_metrics(&cm)?;
    Ok(EvalRecord {
        confusion: cm,
        macro_accuracy: m.macro_accuracy,
        macro_f1: m.macro_f1,
    })
}
