use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geo::Scene;

/// Per-channel z-score statistics fitted on the training split.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    /// lat, lon, alt
    pub mean: [f64; 3],
    pub std: [f64; 3],
    pub target_mean: f64,
    pub target_std: f64,
}

/// A scene in standardized units, ready for the model.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedScene {
    pub n_agents: usize,
    pub steps: usize,
    /// `N × T × 3`, row-major.
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub wtc: Vec<usize>,
}

const CHANNELS: [&str; 3] = ["lat", "lon", "alt"];

impl NormStats {
    pub fn fit(scenes: &[Scene]) -> Result<Self> {
        let mut n = 0usize;
        let mut sum = [0.0f64; 3];
        let mut m = 0usize;
        let mut ysum = 0.0;
        for s in scenes {
            for a in &s.agents {
                for row in &a.window {
                    for c in 0..3 {
                        sum[c] += row[c];
                    }
                    n += 1;
                }
                ysum += a.remaining_s;
                m += 1;
            }
        }
        if n == 0 || m == 0 {
            return Err(Error::validation("cannot fit normalization on an empty split"));
        }
        let mean = sum.map(|s| s / n as f64);
        let target_mean = ysum / m as f64;
        let mut var = [0.0f64; 3];
        let mut yvar = 0.0;
        for s in scenes {
            for a in &s.agents {
                for row in &a.window {
                    for c in 0..3 {
                        var[c] += (row[c] - mean[c]).powi(2);
                    }
                }
                yvar += (a.remaining_s - target_mean).powi(2);
            }
        }
        let std = var.map(|v| (v / n as f64).sqrt());
        let target_std = (yvar / m as f64).sqrt();
        for c in 0..3 {
            if !(std[c] > 0.0) {
                return Err(Error::validation(format!(
                    "channel {} has zero variance on the training split",
                    CHANNELS[c]
                )));
            }
        }
        if !(target_std > 0.0) {
            return Err(Error::validation("target has zero variance on the training split"));
        }
        Ok(NormStats {
            mean,
            std,
            target_mean,
            target_std,
        })
    }

    pub fn normalize_target(&self, y_s: f64) -> f64 {
        (y_s - self.target_mean) / self.target_std
    }

    pub fn denormalize_target(&self, y: f64) -> f64 {
        y * self.target_std + self.target_mean
    }

    pub fn normalize_channel(&self, c: usize, v: f64) -> f64 {
        (v - self.mean[c]) / self.std[c]
    }

    pub fn denormalize_channel(&self, c: usize, v: f64) -> f64 {
        v * self.std[c] + self.mean[c]
    }
}

pub fn normalize_scene(scene: &Scene, stats: &NormStats) -> NormalizedScene {
    let steps = scene.agents.first().map(|a| a.window.len()).unwrap_or(0);
    let mut x = Vec::with_capacity(scene.agents.len() * steps * 3);
    for a in &scene.agents {
        for row in &a.window {
            for c in 0..3 {
                x.push(stats.normalize_channel(c, row[c]));
            }
        }
    }
    NormalizedScene {
        n_agents: scene.agents.len(),
        steps,
        x,
        y: scene
            .agents
            .iter()
            .map(|a| stats.normalize_target(a.remaining_s))
            .collect(),
        wtc: scene.agents.iter().map(|a| a.wtc.index()).collect(),
    }
}

/// Inverse of [`normalize_scene`] for the window samples: `N × T × 3`.
pub fn denormalize_window(x: &[f64], stats: &NormStats) -> Vec<f64> {
    x.iter()
        .enumerate()
        .map(|(i, &v)| stats.denormalize_channel(i % 3, v))
        .collect()
}
