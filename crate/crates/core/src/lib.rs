//! Probabilistic time-series forecasting with a neural hidden Markov model.
//!
//! The layers, bottom up:
//!
//! * [`diffmath`]: dense tensors and reverse-mode differentiation on a tape;
//! * [`data`]: ingestion, per-window scaling, and window splitting;
//! * [`networks`]: the feed-forward nets behind emissions, prior, posterior;
//! * [`model`]: the hidden-chain mixture, its training objective, exact
//!   likelihoods, and trajectory forecasting;
//! * [`training`]: two-stage fitting, the optimizer, and grid search;
//! * [`metrics`]: scaled-error metrics, baselines, and corpus scoring.

pub mod data;
pub mod diffmath;
pub mod error;
pub mod metrics;
pub mod model;
pub mod networks;
pub mod runtime;
pub mod training;

pub use error::{Error, Result};
