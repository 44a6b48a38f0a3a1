//! Probabilistic multi-agent aircraft landing-time prediction.
//!
//! The crate is layered bottom-up:
//!
//! * [`numerics`]: tensors, reverse-mode autodiff, AdamW, LR schedule.
//! * [`geo`]: trajectory ingest, 70 nm truncation, PCHIP resampling, scenes.
//! * [`synth`]: seeded terminal-area arrival generator.
//! * [`model`]: inverted variate-token embedding, multi-agent encoder and
//!   Gaussian parameter decoder.
//! * [`metrics`]: point, rank and calibration metrics plus the MLR baseline.
//! * [`pipeline`]: training loop, checkpoints and the command implementations.

pub mod error;
pub mod geo;
pub mod metrics;
pub mod model;
pub mod numerics;
pub mod pipeline;
pub mod synth;

pub use error::{Error, Result};
