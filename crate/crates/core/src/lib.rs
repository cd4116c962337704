//! Causal emergence of latent-activation time series from reinforcement-learning agents.

pub mod cli;
pub mod error;
pub mod alignment;
pub mod analysis;
pub mod gaussinfo;
pub mod metrics;
pub mod phiid;
pub mod predict;
pub mod preprocess;
pub mod special;
pub mod synth;
pub mod trajdata;
pub mod util;

pub use error::{Error, Result};
