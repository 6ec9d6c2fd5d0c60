//! Desk-scale simulation of secure federated learning: local SGD on small
//! models, federation policies over a virtual clock, encrypted aggregation,
//! gradient privacy defenses and membership-inference scoring.

pub mod data;
mod error;
pub mod federation;
pub mod harness;
pub mod param;
pub mod privacy;
pub mod rng;
pub mod secure;

pub use error::{Error, Result};
