//! Bayesian conversational recommendation.
//!
//! A catalogue of items is described by the answers (and optionally latent
//! properties) each item is compatible with. The engine keeps a posterior
//! over items, asks the question with the lowest expected posterior entropy,
//! and stops once the posterior is concentrated enough.

pub mod adaptive;
pub mod catalog;
pub mod elicitation;
pub mod error;
pub mod evaluation;
pub mod inference;
pub mod learning;
pub mod model;
pub mod property_net;
pub mod scalar;
pub mod service;
pub mod sessions;
pub mod synth;
mod states;
pub mod toy;

pub use catalog::{Catalog, ItemIdx, LoadOptions, PropertyIdx, QuestionIdx};
pub use error::{Error, Result};
pub use scalar::{Prob, Rational, Scalar};
