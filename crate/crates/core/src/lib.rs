//! Test-time tuning of a frozen generator's conditioning (an audio latent and
//! a residual over the frozen text context) against a differentiable binary
//! motion critic, with preservation regularizers, a policy-gradient baseline
//! and the evaluation metrics used to compare edits.

pub mod critic;
pub mod error;
pub mod genmodel;
pub mod gradcheck;
pub mod media;
pub mod metrics;
pub mod numcore;
pub mod ppo;
pub mod rng;
pub mod suite;
pub mod tuner;

pub use error::{Error, Result};
