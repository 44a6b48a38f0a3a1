use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geo::{NormStats, NormalizedScene};

pub const MLR_RIDGE: f64 = 1e-8;

/// Single-aircraft linear baseline on the flattened standardized window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlrModel {
    pub weights: Vec<f64>,
    pub bias: f64,
}

impl MlrModel {
    /// Least squares on `(features, target)` rows with a small ridge term.
    pub fn fit_rows(features: &[Vec<f64>], targets: &[f64]) -> Result<Self> {
        let p = features.first().map(|f| f.len()).unwrap_or(0);
        if features.len() < p + 1 || features.len() != targets.len() {
            return Err(Error::validation(format!(
                "MLR needs at least {} samples, got {}",
                p + 1,
                features.len()
            )));
        }
        if features.iter().any(|f| f.len() != p) {
            return Err(Error::validation("MLR feature rows differ in length"));
        }
        let k = p + 1;
        let mut xtx = DMatrix::<f64>::zeros(k, k);
        let mut xty = DVector::<f64>::zeros(k);
        let mut row = vec![0.0; k];
        for (f, &y) in features.iter().zip(targets) {
            row[..p].copy_from_slice(f);
            row[p] = 1.0;
            for i in 0..k {
                xty[i] += row[i] * y;
                for j in 0..=i {
                    xtx[(i, j)] += row[i] * row[j];
                }
            }
        }
        for i in 0..k {
            for j in 0..i {
                xtx[(j, i)] = xtx[(i, j)];
            }
            xtx[(i, i)] += MLR_RIDGE;
        }
        let chol = xtx
            .cholesky()
            .ok_or_else(|| Error::validation("MLR normal equations are not positive definite"))?;
        let beta = chol.solve(&xty);
        Ok(MlrModel {
            weights: beta.as_slice()[..p].to_vec(),
            bias: beta[p],
        })
    }

    /// Fits on every aircraft of the (normalized) training scenes.
    pub fn fit(scenes: &[NormalizedScene]) -> Result<Self> {
        let mut feats = Vec::new();
        let mut ys = Vec::new();
        for s in scenes {
            for i in 0..s.n_agents {
                feats.push(agent_features(s, i).to_vec());
                ys.push(s.y[i]);
            }
        }
        Self::fit_rows(&feats, &ys)
    }

    pub fn predict_row(&self, features: &[f64]) -> f64 {
        self.bias + self.weights.iter().zip(features).map(|(w, x)| w * x).sum::<f64>()
    }

    /// Remaining time in seconds for each aircraft of a scene.
    pub fn predict_scene(&self, scene: &NormalizedScene, stats: &NormStats) -> Vec<f64> {
        (0..scene.n_agents)
            .map(|i| stats.denormalize_target(self.predict_row(agent_features(scene, i))))
            .collect()
    }
}

/// Flattened `T × 3` window of aircraft `i`.
pub fn agent_features(scene: &NormalizedScene, i: usize) -> &[f64] {
    let w = scene.steps * 3;
    &scene.x[i * w..(i + 1) * w]
}
