//! The landing-time network: inverted embedding, multi-agent encoder and
//! Gaussian decoder, all on the autodiff tape.

pub mod attention;
mod config;
pub mod embed;
pub mod encoder;
pub mod head;
mod network;

pub use config::{ModelConfig, SigmaLink, EXP_LINK_CLAMP, SIGMA_FLOOR};
pub use encoder::{AttentionRecord, MultivariateMask, PaddingMask};
pub use head::{point_prediction, GaussianPrediction};
pub use network::{LossValue, Model, ModelOutput, SceneBatch};
