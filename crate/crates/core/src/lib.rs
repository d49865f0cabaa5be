//! Gaussian data-aided sensing.
//!
//! A base station estimates a correlated Gaussian field held by `K` sensor
//! nodes. Each round it asks the nodes whose measurements would most reduce
//! the conditional MSE, collects what arrives over fading channels (dedicated
//! polling channels or multichannel slotted ALOHA), and conditions on it.
//! When the signal model is unknown, a softmax bandit picks among candidates.

pub mod access;
pub mod bandit;
pub mod engine;
pub mod error;
pub mod experiments;
pub mod gaussian;
pub mod output;
pub mod scenario;
pub mod validation;

pub use error::{Error, Result};
pub use gaussian::{condition, ConditionalState, GaussianModel};
