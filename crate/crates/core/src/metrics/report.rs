use std::fmt::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{
    calibration, kendall_tau, performance_improvement, point_metrics, ranks_from_times,
    spearman_rho, MetricKind,
};

/// Predictions of one scene, in seconds.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenePredictions {
    pub scene_id: String,
    pub callsigns: Vec<String>,
    pub y: Vec<f64>,
    pub mu: Vec<f64>,
    /// Absent for point predictors.
    pub sigma: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub model: String,
    pub mae_s: f64,
    pub rmse_s: f64,
    pub mape_pct: f64,
    pub mape_excluded: usize,
    pub spearman_rho: f64,
    pub kendall_tau: f64,
    pub nll_test: Option<f64>,
    pub coverage_68: Option<f64>,
    pub coverage_95: Option<f64>,
    pub n_samples: usize,
    pub n_scenes: usize,
    /// Scenes with a single aircraft, left out of the rank metrics.
    pub rank_skipped: usize,
    /// Scenes where equal landing times needed a tie-break.
    pub rank_ties: usize,
}

/// Pools point metrics, macro-averages rank metrics over scenes with N >= 2.
pub fn evaluate(model: &str, scenes: &[ScenePredictions]) -> Result<EvalReport> {
    let mut y = Vec::new();
    let mut mu = Vec::new();
    let mut sigma = Vec::new();
    let probabilistic = scenes.iter().all(|s| s.sigma.is_some());
    let (mut rho, mut tau, mut ranked, mut skipped, mut ties) = (0.0, 0.0, 0usize, 0usize, 0usize);
    for s in scenes {
        let n = s.y.len();
        if s.mu.len() != n || s.callsigns.len() != n {
            return Err(Error::validation(format!("scene {} is misaligned", s.scene_id)));
        }
        y.extend(&s.y);
        mu.extend(&s.mu);
        if let Some(sg) = &s.sigma {
            sigma.extend(sg);
        }
        if n < 2 {
            skipped += 1;
            continue;
        }
        let keys: Vec<&str> = s.callsigns.iter().map(String::as_str).collect();
        let (rt, t1) = ranks_from_times(&s.y, &keys);
        let (rp, t2) = ranks_from_times(&s.mu, &keys);
        ties += (t1 || t2) as usize;
        rho += spearman_rho(&rt, &rp)?;
        tau += kendall_tau(&rt, &rp)?;
        ranked += 1;
    }
    let pm = point_metrics(&y, &mu)?;
    let cal = if probabilistic { Some(calibration(&mu, &sigma, &y)?) } else { None };
    let avg = |v: f64| if ranked > 0 { v / ranked as f64 } else { f64::NAN };
    Ok(EvalReport {
        model: model.to_string(),
        mae_s: pm.mae,
        rmse_s: pm.rmse,
        mape_pct: pm.mape,
        mape_excluded: pm.mape_excluded,
        spearman_rho: avg(rho),
        kendall_tau: avg(tau),
        nll_test: cal.map(|c| c.nll),
        coverage_68: cal.map(|c| c.coverage_68),
        coverage_95: cal.map(|c| c.coverage_95),
        n_samples: y.len(),
        n_scenes: scenes.len(),
        rank_skipped: skipped,
        rank_ties: ties,
    })
}

/// Improvement of `ours` over `baseline` for MAE, RMSE, MAPE, ρ and τ.
pub fn improvement_row(ours: &EvalReport, baseline: &EvalReport) -> Result<[f64; 5]> {
    Ok([
        performance_improvement(ours.mae_s, baseline.mae_s, MetricKind::Error)?,
        performance_improvement(ours.rmse_s, baseline.rmse_s, MetricKind::Error)?,
        performance_improvement(ours.mape_pct, baseline.mape_pct, MetricKind::Error)?,
        performance_improvement(ours.spearman_rho, baseline.spearman_rho, MetricKind::Rank)?,
        performance_improvement(ours.kendall_tau, baseline.kendall_tau, MetricKind::Rank)?,
    ])
}

/// Aligned plain-text table: one row per report, then an improvement row
/// of the first report over the second when two are given.
pub fn format_table(reports: &[&EvalReport]) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<12} {:>10} {:>10} {:>9} {:>8} {:>8} {:>9} {:>7} {:>7}",
        "model", "MAE (s)", "RMSE (s)", "MAPE (%)", "rho", "tau", "NLL", "cov68", "cov95"
    );
    let opt = |v: Option<f64>, p: usize| v.map_or("-".to_string(), |x| format!("{x:.p$}"));
    for r in reports {
        let _ = writeln!(
            out,
            "{:<12} {:>10.4} {:>10.4} {:>9.2} {:>8.3} {:>8.3} {:>9} {:>7} {:>7}",
            r.model,
            r.mae_s,
            r.rmse_s,
            r.mape_pct,
            r.spearman_rho,
            r.kendall_tau,
            opt(r.nll_test, 4),
            opt(r.coverage_68, 3),
            opt(r.coverage_95, 3)
        );
    }
    if let [ours, base, ..] = reports {
        if let Ok(pi) = improvement_row(ours, base) {
            let _ = writeln!(
                out,
                "{:<12} {:>10.2} {:>10.2} {:>9.2} {:>8.2} {:>8.2}",
                "PI (%)", pi[0], pi[1], pi[2], pi[3], pi[4]
            );
        }
    }
    out
}
