//! Accuracy, ranking and calibration metrics, plus the linear baseline.

mod mlr;
mod point;
mod rank;
mod report;

pub use mlr::{agent_features, MlrModel, MLR_RIDGE};
pub use point::{
    calibration, performance_improvement, point_metrics, Calibration, MetricKind, PointMetrics,
    MAPE_FLOOR_S,
};
pub use rank::{kendall_tau, ranks_from_times, spearman_rho};
pub use report::{evaluate, format_table, improvement_row, EvalReport, ScenePredictions};
