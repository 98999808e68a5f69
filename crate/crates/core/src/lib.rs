//! Embedding-space domain adaptation for speaker verification.
//!
//! The crate is organised around the stages of a verification experiment:
//!
//! - [`embedding`]: embedding, trial and score containers plus their text formats.
//! - [`svr`]: the weight-shared reconstruction network, its joint
//!   reconstruction/cosine loss, analytic gradients and the pair trainer.
//! - [`scoring`]: cosine and two-covariance PLDA backends, PLDA adaptation and
//!   adaptive symmetric score normalization.
//! - [`metrics`]: operating-point sweep, EER and minimum detection cost.
//! - [`sim`]: a seeded Gaussian speaker world with synthetic degradation channels.

pub mod embedding;
pub mod error;
pub mod metrics;
pub mod scoring;
pub mod sim;
pub mod svr;

mod util;

pub use error::{Error, Result};
pub use util::fmt17;
