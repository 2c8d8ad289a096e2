//! Deterministic simulator of two-stage self-supervised federated learning.
//!
//! The pipeline: build a class-labeled corpus ([`corpus`]), carve it into
//! heterogeneous client shards ([`partition`]), run federated
//! masked-reconstruction pre-training followed by federated fine-tuning
//! ([`federation`] over the toy models in [`learners`]), and score the global
//! model with macro-averaged metrics ([`metrics`]). The [`harness`] module
//! orchestrates whole experiment grids from a plan file.
//!
//! All numeric kernels are generic over [`scalar::Scalar`] (`f32` or `f64`);
//! the aliases below pin the default `f64` instantiation used by the CLI.

pub mod corpus;
pub mod federation;
pub mod harness;
pub mod learners;
pub mod metrics;
pub mod partition;
pub mod scalar;
pub mod seed;

pub use scalar::Scalar;

/// Default scalar type for the CLI and harness.
pub type Real = f64;

/// Corpus manifest at default precision.
pub type Manifest = corpus::CorpusManifest<Real>;
/// Flat model parameters at default precision.
pub type Params = learners::ParamVector<Real>;
/// One-shot prevalence weights at default precision.
pub type Weights = federation::PrevalenceWeights<Real>;

/// Single-precision variants.
pub type Manifest32 = corpus::CorpusManifest<f32>;
pub type Params32 = learners::ParamVector<f32>;
