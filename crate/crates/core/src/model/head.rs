//! Gaussian parameter decoder and the negative log-likelihood objective.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geo::NormStats;
use crate::model::config::{SigmaLink, EXP_LINK_CLAMP, SIGMA_FLOOR};
use crate::numerics::{CustomOp, Scalar, Tape, Tensor, Var};

/// `ln(1 + e^x)` without overflow.
pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Standardized `σ` from the raw scale output, and `dσ/ds`.
pub fn sigma_from_raw(s: f64, link: SigmaLink) -> (f64, f64) {
    match link {
        SigmaLink::Softplus => (softplus(s) + SIGMA_FLOOR, sigmoid(s)),
        SigmaLink::Exp => {
            let (lo, hi) = EXP_LINK_CLAMP;
            let c = s.clamp(lo, hi);
            let e = c.exp();
            (e + SIGMA_FLOOR, if s > lo && s < hi { e } else { 0.0 })
        }
    }
}

/// Predicted landing-time distribution for one aircraft.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianPrediction {
    pub mu_std: f64,
    pub sigma_std: f64,
    pub mu_s: f64,
    pub sigma_s: f64,
}

impl GaussianPrediction {
    pub fn from_raw(m: f64, s: f64, link: SigmaLink, stats: &NormStats) -> Self {
        let (sigma_std, _) = sigma_from_raw(s, link);
        GaussianPrediction {
            mu_std: m,
            sigma_std,
            mu_s: stats.denormalize_target(m),
            sigma_s: sigma_std * stats.target_std,
        }
    }
}

/// Point estimate in seconds: the predicted mean.
pub fn point_prediction(pred: &GaussianPrediction) -> f64 {
    pred.mu_s
}

/// Decoder MLP: affine layers with GELU between them, none after the last.
pub fn decode<T: Scalar>(tape: &mut Tape<T>, tokens: Var, layers: &[(Var, Var)]) -> Result<Var> {
    let mut h = tokens;
    for (i, &(w, b)) in layers.iter().enumerate() {
        let z = tape.matmul(h, w)?;
        h = tape.add_bias(z, b)?;
        if i + 1 < layers.len() {
            h = tape.gelu(h)?;
        }
    }
    Ok(h)
}

const HALF_LN_2PI: f64 = 0.918_938_533_204_672_7;

/// Weighted Gaussian NLL of `raw = [m, s]` rows; keeps both terms for reporting.
pub struct GaussianNll {
    link: SigmaLink,
    targets: Vec<f64>,
    weights: Vec<f64>,
    /// `Σ w (½ ln 2π + ln σ)`
    pub penalty: f64,
    /// `Σ w (y − μ)² / 2σ²`
    pub error: f64,
    /// Per-row NLL, zero where the weight is zero.
    pub per_row: Vec<f64>,
}

/// Scalar loss `Σ_i w_i [½ ln(2π σ_i²) + (y_i − μ_i)² / (2σ_i²)]`.
///
/// Rows with zero weight (padding) contribute nothing.
pub fn nll_loss<T: Scalar>(
    tape: &mut Tape<T>,
    raw: Var,
    targets: &[f64],
    weights: &[f64],
    link: SigmaLink,
) -> Result<Var> {
    let shape = tape.value(raw).shape().to_vec();
    if shape.len() != 2 || shape[1] != 2 || shape[0] != targets.len() || targets.len() != weights.len()
    {
        return Err(Error::Dimension {
            op: "nll_loss",
            lhs: shape,
            rhs: vec![targets.len(), weights.len()],
        });
    }
    let data = tape.value(raw).data();
    let (mut penalty, mut error) = (0.0, 0.0);
    let mut per_row = vec![0.0; targets.len()];
    for (i, (&y, &w)) in targets.iter().zip(weights).enumerate() {
        if w == 0.0 {
            continue;
        }
        let (m, s) = (data[2 * i].as_f64(), data[2 * i + 1].as_f64());
        let (sigma, _) = sigma_from_raw(s, link);
        if !(sigma > 0.0) {
            return Err(Error::Contract(format!("non-positive sigma {sigma} at row {i}")));
        }
        let p = HALF_LN_2PI + sigma.ln();
        let e = (y - m).powi(2) / (2.0 * sigma * sigma);
        per_row[i] = p + e;
        penalty += w * p;
        error += w * e;
    }
    let loss = Tensor::scalar(T::from_f64_lossy(penalty + error));
    tape.custom(
        vec![raw],
        loss,
        Box::new(GaussianNll {
            link,
            targets: targets.to_vec(),
            weights: weights.to_vec(),
            penalty,
            error,
            per_row,
        }),
    )
}

impl<T: Scalar> CustomOp<T> for GaussianNll {
    fn name(&self) -> &'static str {
        "gaussian_nll"
    }

    fn backward(
        &self,
        inputs: &[&Tensor<T>],
        _output: &Tensor<T>,
        grad_out: &[T],
        needs: &[bool],
    ) -> Vec<Option<Vec<T>>> {
        if !needs[0] {
            return vec![None];
        }
        let g = grad_out[0].as_f64();
        let data = inputs[0].data();
        let mut d = vec![T::zero(); data.len()];
        for (i, (&y, &w)) in self.targets.iter().zip(&self.weights).enumerate() {
            if w == 0.0 {
                continue;
            }
            let (m, s) = (data[2 * i].as_f64(), data[2 * i + 1].as_f64());
            let (sigma, dsig) = sigma_from_raw(s, self.link);
            let r = m - y;
            let s2 = sigma * sigma;
            d[2 * i] = T::from_f64_lossy(g * w * r / s2);
            d[2 * i + 1] = T::from_f64_lossy(g * w * (1.0 / sigma - r * r / (s2 * sigma)) * dsig);
        }
        vec![Some(d)]
    }

    fn as_any(&self) -> &dyn std::any::Any {
        self
    }
}
