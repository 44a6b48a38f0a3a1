use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Targets below this many seconds are left out of MAPE.
pub const MAPE_FLOOR_S: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PointMetrics {
    pub mae: f64,
    pub rmse: f64,
    /// Percent.
    pub mape: f64,
    /// Samples left out of MAPE by [`MAPE_FLOOR_S`].
    pub mape_excluded: usize,
}

/// Pooled MAE, RMSE and MAPE over aligned samples.
pub fn point_metrics(y: &[f64], yhat: &[f64]) -> Result<PointMetrics> {
    if y.is_empty() || y.len() != yhat.len() {
        return Err(Error::validation(format!(
            "point metrics need equal non-empty inputs, got {} and {}",
            y.len(),
            yhat.len()
        )));
    }
    let n = y.len() as f64;
    let (mut abs, mut sq, mut pct, mut used) = (0.0, 0.0, 0.0, 0usize);
    for (&a, &p) in y.iter().zip(yhat) {
        let e = p - a;
        abs += e.abs();
        sq += e * e;
        if a >= MAPE_FLOOR_S {
            pct += (e / a).abs();
            used += 1;
        }
    }
    Ok(PointMetrics {
        mae: abs / n,
        rmse: (sq / n).sqrt(),
        mape: if used > 0 { 100.0 * pct / used as f64 } else { f64::NAN },
        mape_excluded: y.len() - used,
    })
}

/// Whether a metric improves downward (errors) or upward (rank agreement).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MetricKind {
    Error,
    Rank,
}

/// Relative gain of `ours` over `second_best`, percent.
pub fn performance_improvement(ours: f64, second_best: f64, kind: MetricKind) -> Result<f64> {
    if second_best == 0.0 || !second_best.is_finite() || !ours.is_finite() {
        return Err(Error::validation(format!(
            "improvement undefined against baseline {second_best}"
        )));
    }
    let gain = match kind {
        MetricKind::Error => (second_best - ours).abs(),
        MetricKind::Rank => (ours - second_best).abs(),
    };
    Ok(gain / second_best * 100.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub coverage_68: f64,
    pub coverage_95: f64,
    /// Mean per-sample Gaussian NLL in the units of `y`.
    pub nll: f64,
}

/// Interval coverage at `1σ` and `1.96σ` (boundaries inclusive) and mean NLL.
pub fn calibration(mu: &[f64], sigma: &[f64], y: &[f64]) -> Result<Calibration> {
    if y.is_empty() || mu.len() != y.len() || sigma.len() != y.len() {
        return Err(Error::validation("calibration inputs must be aligned and non-empty"));
    }
    if let Some(s) = sigma.iter().find(|s| !(**s > 0.0)) {
        return Err(Error::Contract(format!("non-positive sigma {s}")));
    }
    let n = y.len() as f64;
    let (mut c68, mut c95, mut nll) = (0usize, 0usize, 0.0);
    for ((&m, &s), &t) in mu.iter().zip(sigma).zip(y) {
        let z = (t - m).abs();
        c68 += (z <= s) as usize;
        c95 += (z <= 1.96 * s) as usize;
        nll += 0.5 * (2.0 * std::f64::consts::PI * s * s).ln() + (t - m).powi(2) / (2.0 * s * s);
    }
    Ok(Calibration {
        coverage_68: c68 as f64 / n,
        coverage_95: c95 as f64 / n,
        nll: nll / n,
    })
}
