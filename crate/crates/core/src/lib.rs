//! Interaction-aware diffusion modeling.
//!
//! The pipeline infers user roles from the follow graph ([`graph`],
//! [`roles`]), topic and sentiment representations of contagions
//! ([`topics`]), extracts interacting scenarios from the cascade log
//! ([`scenarios`]) and fits role/topic interaction matrices that explain
//! forwarding decisions ([`model`]). [`categories`] projects the fitted
//! latent-topic interactions onto explicit categories, [`eval`] runs
//! cross-validated comparisons and [`synth`] generates data with known
//! ground truth.

pub mod categories;
pub mod data;
pub mod error;
pub mod eval;
pub mod graph;
pub mod model;
pub mod roles;
pub mod scenarios;
pub mod synth;
pub mod topics;

pub use error::{Error, Result};
