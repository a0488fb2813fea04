//! Numerical laboratory for the feature-learning dynamics of single-modal and
//! multi-modal contrastive learning on a signal-plus-noise data model.
//!
//! The pipeline is: [`data`] generates paired training samples and an OOD test
//! distribution, [`encoder`] holds the one-layer ReLU encoders, [`loss`]
//! evaluates the stop-gradient InfoNCE objectives and their closed-form
//! gradients, [`ledger`] tracks the signal/noise coefficient decomposition of
//! the weights, [`trainer`] runs full-batch gradient descent, [`probe`] fits a
//! logistic head on frozen embeddings, and [`expctl`] drives experiments from
//! the command line.

pub mod config;
pub mod data;
pub mod encoder;
pub mod error;
pub mod expctl;
pub mod gradcheck;
pub mod ledger;
pub mod lemmas;
pub mod loss;
pub mod probe;
pub mod trainer;

pub use error::{Error, Result};
