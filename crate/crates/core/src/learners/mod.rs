//! Desk-scale learners: flat parameter vectors over named affine segments,
//! the masked-reconstruction objective, (weighted) cross-entropy with exact
//! gradients, and SGD/Adam local updates.

mod checkpoint;
mod loss;
mod mask;
mod optim;
mod params;

pub use checkpoint::{load_checkpoint, save_checkpoint};
pub use loss::{ce_loss, log_softmax, mae_loss, wce_loss};
pub use mask::{apply_mask, MaskSpec};
pub use optim::{local_update, LocalOutcome, LossSpec, OptimizerConfig, OptimizerKind};
pub use params::{AffineView, Layout, ParamVector, SegmentSpec};

use thiserror::Error;

/// Canonical segment names.
pub const ENCODER: &str = "encoder";
pub const DECODER: &str = "decoder";
pub const HEAD: &str = "head";

#[derive(Debug, Error)]
pub enum LearnerError {
    #[error("invalid parameter: {0}")]
    InvalidParam(String),
    #[error("layout mismatch: {0}")]
    LayoutMismatch(String),
    #[error("no segment named {0:?}")]
    MissingSegment(String),
    #[error("degenerate mask: {masked} of {patches} patches masked")]
    DegenerateMask { masked: usize, patches: usize },
    #[error("label {label} outside [0, {classes})")]
    LabelOutOfRange { label: usize, classes: usize },
    #[error("class {class} has a non-finite weight")]
    NonFiniteWeight { class: usize },
    #[error("non-finite values after step {step} (loss {loss}); try a smaller learning rate")]
    Diverged { step: usize, loss: f64 },
    #[error("empty batch or dataset")]
    EmptyData,
    #[error("checkpoint I/O: {0}")]
    Io(#[from] std::io::Error),
    #[error("checkpoint parse error: {0}")]
    Parse(String),
}
