//! Multi-source domain adaptation on feature vectors.
//!
//! Per-domain classifiers are trained federated-style, relevant source
//! samples and domains are picked by a density rule around classifier
//! prototypes, the kept models are averaged, and the averaged model is
//! adapted to the target under a frozen prompt-tuned teacher.

pub mod adapt;
pub mod config;
pub mod data;
pub mod error;
pub mod federate;
pub mod gradcheck;
pub mod matrix;
pub mod nn;
pub mod pipeline;
pub mod report;
pub mod rng;
pub mod selection;

pub use error::{Error, Result};
