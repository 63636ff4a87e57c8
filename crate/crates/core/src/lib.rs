//! Source-free domain adaptation by self-training a student against an EMA
//! teacher and a zero-shot template oracle.
//!
//! Math modules are generic over [`Scalar`] (`f32` or `f64`). The aliases at
//! the crate root fix the scalar to `f64`, which is what the CLI and the
//! experiment pipeline use.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod acr;
pub mod config;
pub mod curriculum;
pub mod datagen;
pub mod error;
pub mod eval;
pub mod experiment;
pub mod models;
pub mod numerics;
pub mod pseudo;
pub mod rng;
pub mod scalar;
pub mod trainer;

pub use error::{Error, Result};
pub use scalar::Scalar;

/// Probability vector over classes, `f64`.
pub type Dist = numerics::ProbDist<f64>;
/// Logit vector, `f64`.
pub type Scores = numerics::Logits<f64>;
/// Labelled feature table, `f64`.
pub type Dataset = datagen::LabeledDataset<f64>;
/// Linear-softmax classifier, `f64`.
pub type Model = models::LinearSoftmaxModel<f64>;
/// Template-similarity zero-shot classifier, `f64`.
pub type Oracle = models::TemplateOracle<f64>;
/// Pseudo-label fusion outcome, `f64`.
pub type Decision = pseudo::FusionDecision<f64>;
/// Result of an adaptation run, `f64`.
pub type Outcome = trainer::AdaptationOutcome<f64>;
