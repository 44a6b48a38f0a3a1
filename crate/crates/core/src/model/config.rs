use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How the raw scale output is made positive.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum SigmaLink {
    #[default]
    Softplus,
    /// `exp(s)` with `s` clamped to [`EXP_LINK_CLAMP`].
    Exp,
}

pub const EXP_LINK_CLAMP: (f64, f64) = (-15.0, 15.0);
pub const SIGMA_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    /// Observation window length.
    pub steps: usize,
    pub d_model: usize,
    pub layers: usize,
    pub heads_mma: usize,
    pub heads_aa: usize,
    pub ffn_dim: usize,
    pub dropout: f64,
    /// Hidden widths of the Gaussian decoder after the `3 * d_model` input.
    pub gpd_hidden: Vec<usize>,
    /// Output projection after concatenating attention heads.
    pub out_proj: bool,
    pub sigma_link: SigmaLink,
    pub ln_eps: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            steps: 20,
            d_model: 256,
            layers: 3,
            heads_mma: 8,
            heads_aa: 8,
            ffn_dim: 1024,
            dropout: 0.1,
            gpd_hidden: vec![512, 256, 128],
            out_proj: true,
            sigma_link: SigmaLink::Softplus,
            ln_eps: 1e-5,
        }
    }
}

impl ModelConfig {
    /// A smaller model whose widths follow the default proportions.
    pub fn scaled(d_model: usize, heads: usize) -> Self {
        ModelConfig {
            d_model,
            heads_mma: heads,
            heads_aa: heads,
            ffn_dim: 4 * d_model,
            gpd_hidden: vec![2 * d_model, d_model, (d_model / 2).max(1)],
            ..Default::default()
        }
    }

    pub fn agent_dim(&self) -> usize {
        3 * self.d_model
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::validation(m));
        if self.steps == 0 || self.d_model == 0 || self.layers == 0 || self.ffn_dim == 0 {
            return fail("model dimensions must be positive".into());
        }
        if self.heads_mma == 0 || self.d_model % self.heads_mma != 0 {
            return fail(format!(
                "d_model {} not divisible by heads_mma {}",
                self.d_model, self.heads_mma
            ));
        }
        if self.heads_aa == 0 || self.agent_dim() % self.heads_aa != 0 {
            return fail(format!(
                "3 * d_model {} not divisible by heads_aa {}",
                self.agent_dim(),
                self.heads_aa
            ));
        }
        if self.gpd_hidden.iter().any(|&h| h == 0) {
            return fail("decoder widths must be positive".into());
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return fail(format!("dropout {} outside [0, 1)", self.dropout));
        }
        if !(self.ln_eps > 0.0) {
            return fail("layer-norm epsilon must be positive".into());
        }
        Ok(())
    }
}
