//! Local optimization: seeded mini-batch SGD/Adam epochs over one client's
//! data.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{ce_loss, mae_loss, wce_loss, LearnerError, MaskSpec, ParamVector};
use crate::corpus::Example;
use crate::scalar::{cast, Scalar};
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum OptimizerKind {
    Sgd,
    Adam { beta1: f64, beta2: f64, epsilon: f64 },
}

/// Local optimizer settings, including the epoch/batch schedule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    #[serde(flatten)]
    pub kind: OptimizerKind,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub local_epochs: usize,
}

impl OptimizerConfig {
    pub fn sgd(learning_rate: f64, batch_size: usize, local_epochs: usize) -> Self {
        OptimizerConfig {
            kind: OptimizerKind::Sgd,
            learning_rate,
            batch_size,
            local_epochs,
        }
    }

    /// Adam with the recorded defaults: betas (0.9, 0.95), epsilon 1e-8.
    pub fn adam(learning_rate: f64, batch_size: usize, local_epochs: usize) -> Self {
        OptimizerConfig {
            kind: OptimizerKind::Adam {
                beta1: 0.9,
                beta2: 0.95,
                epsilon: 1e-8,
            },
            learning_rate,
            batch_size,
            local_epochs,
        }
    }

    pub fn validate(&self) -> Result<(), LearnerError> {
        // learning_rate 0 is allowed: the update degenerates to the identity.
        if !self.learning_rate.is_finite() || self.learning_rate < 0.0 {
            return Err(LearnerError::InvalidParam(
                "learning rate must be finite and >= 0".into(),
            ));
        }
        if self.batch_size == 0 {
            return Err(LearnerError::InvalidParam("batch_size must be >= 1".into()));
        }
        if self.local_epochs == 0 {
            return Err(LearnerError::InvalidParam("local_epochs must be >= 1".into()));
        }
        if let OptimizerKind::Adam {
            beta1,
            beta2,
            epsilon,
        } = self.kind
        {
            for (name, b) in [("beta1", beta1), ("beta2", beta2)] {
                if !(0.0..1.0).contains(&b) {
                    return Err(LearnerError::InvalidParam(format!(
                        "{name} must be in [0, 1), got {b}"
                    )));
                }
            }
            if epsilon.is_nan() || epsilon <= 0.0 {
                return Err(LearnerError::InvalidParam("epsilon must be > 0".into()));
            }
        }
        Ok(())
    }
}

/// Which objective a local update minimizes.
#[derive(Debug, Clone, PartialEq)]
pub enum LossSpec<S> {
    /// Masked reconstruction. `mask_seed` keys the per-step mask schedule;
    /// it is shared by every client in a round so that identical data yields
    /// identical objectives.
    Reconstruction {
        patch_count: usize,
        mask_ratio: f64,
        mask_seed: u64,
    },
    CrossEntropy,
    WeightedCrossEntropy { class_weights: Vec<S> },
}

/// Updated parameters plus the per-step loss trajectory.
#[derive(Debug, Clone)]
pub struct LocalOutcome<S> {
    pub params: ParamVector<S>,
    pub step_losses: Vec<f64>,
}

impl<S> LocalOutcome<S> {
    pub fn mean_loss(&self) -> f64 {
        if self.step_losses.is_empty() {
            f64::NAN
        } else {
            self.step_losses.iter().sum::<f64>() / self.step_losses.len() as f64
        }
    }
}

/// Run `local_epochs` of seeded mini-batch steps and return the new
/// parameters; the inputs are never mutated. The trailing short batch of an
/// epoch is used as-is.
pub fn local_update<S: Scalar>(
    params: &ParamVector<S>,
    data: &[Example<S>],
    loss: &LossSpec<S>,
    opt: &OptimizerConfig,
    update_seed: u64,
) -> Result<LocalOutcome<S>, LearnerError> {
    opt.validate()?;
    if data.is_empty() {
        return Err(LearnerError::EmptyData);
    }
    if let LossSpec::Reconstruction {
        patch_count,
        mask_ratio,
        ..
    } = loss
    {
        MaskSpec::new(*patch_count, *mask_ratio, 0).validate()?;
    }

    let mut rng = seed::rng(update_seed, &[]);
    let mut current = params.clone();
    let mut state = OptimizerState::new(params.values().len());
    let mut step_losses = Vec::new();
    let mut step = 0usize;

    for epoch in 0..opt.local_epochs {
        let mut order: Vec<usize> = (0..data.len()).collect();
        order.shuffle(&mut rng);
        for batch_ids in order.chunks(opt.batch_size) {
            let (loss_val, grad) = batch_loss(&current, data, batch_ids, loss, epoch, step)?;
            state.step(&mut current, &grad, opt);
            step += 1;
            let loss_f64 = loss_val.to_f64().unwrap_or(f64::NAN);
            step_losses.push(loss_f64);
            if !loss_f64.is_finite() || !current.is_finite() {
                return Err(LearnerError::Diverged {
                    step,
                    loss: loss_f64,
                });
            }
        }
    }
    Ok(LocalOutcome {
        params: current,
        step_losses,
    })
}

fn batch_loss<S: Scalar>(
    params: &ParamVector<S>,
    data: &[Example<S>],
    batch_ids: &[usize],
    loss: &LossSpec<S>,
    epoch: usize,
    step: usize,
) -> Result<(S, Vec<S>), LearnerError> {
    let features: Vec<&[S]> = batch_ids
        .iter()
        .map(|&i| data[i].features.as_slice())
        .collect();
    match loss {
        LossSpec::Reconstruction {
            patch_count,
            mask_ratio,
            mask_seed,
        } => {
            let mask = MaskSpec::new(
                *patch_count,
                *mask_ratio,
                seed::derive(*mask_seed, &[epoch as u64, step as u64]),
            );
            mae_loss(params, &features, &mask)
        }
        LossSpec::CrossEntropy => {
            let labels = batch_labels(data, batch_ids)?;
            ce_loss(params, &features, &labels)
        }
        LossSpec::WeightedCrossEntropy { class_weights } => {
            let labels = batch_labels(data, batch_ids)?;
            wce_loss(params, &features, &labels, class_weights)
        }
    }
}

fn batch_labels<S: Scalar>(
    data: &[Example<S>],
    batch_ids: &[usize],
) -> Result<Vec<usize>, LearnerError> {
    batch_ids
        .iter()
        .map(|&i| {
            let ex = &data[i];
            if ex.is_labeled() {
                Ok(ex.label())
            } else {
                Err(LearnerError::InvalidParam(format!(
                    "example {} is unlabeled; cross-entropy needs labels",
                    ex.id
                )))
            }
        })
        .collect()
}

/// Moment buffers for Adam; SGD ignores them.
struct OptimizerState {
    first_moment: Vec<f64>,
    second_moment: Vec<f64>,
    step_count: u32,
}

impl OptimizerState {
    fn new(len: usize) -> Self {
        OptimizerState {
            first_moment: vec![0.0; len],
            second_moment: vec![0.0; len],
            step_count: 0,
        }
    }

    fn step<S: Scalar>(&mut self, params: &mut ParamVector<S>, grad: &[S], opt: &OptimizerConfig) {
        let lr = opt.learning_rate;
        let mut values: Vec<S> = params.values().to_vec();
        match opt.kind {
            OptimizerKind::Sgd => {
                let lr_s = cast::<S>(lr);
                for (v, g) in values.iter_mut().zip(grad) {
                    *v -= lr_s * *g;
                }
            }
            OptimizerKind::Adam {
                beta1,
                beta2,
                epsilon,
            } => {
                // Moments tracked in f64 regardless of the scalar type, with
                // the textbook bias correction.
                self.step_count += 1;
                let correction1 = 1.0 - beta1.powi(self.step_count as i32);
                let correction2 = 1.0 - beta2.powi(self.step_count as i32);
                for (i, v) in values.iter_mut().enumerate() {
                    let g = grad[i].to_f64().unwrap_or(f64::NAN);
                    self.first_moment[i] = beta1 * self.first_moment[i] + (1.0 - beta1) * g;
                    self.second_moment[i] =
                        beta2 * self.second_moment[i] + (1.0 - beta2) * g * g;
                    let m_hat = self.first_moment[i] / correction1;
                    let v_hat = self.second_moment[i] / correction2;
                    let delta = lr * m_hat / (v_hat.sqrt() + epsilon);
                    *v -= cast::<S>(delta);
                }
            }
        }
        // Divergence may transiently produce non-finite values here; the
        // caller's finite check fires before the vector can escape.
        *params = ParamVector::from_values_unchecked(params.layout().clone(), values);
    }
}
