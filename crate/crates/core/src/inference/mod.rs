//! Everything computed from frozen posterior draws: predictions, treatment
//! contrasts, fit metrics, the heterogeneity test, and the linear baseline.

mod linear;
mod metrics;
mod permtest;
mod pite;
mod predict;

pub use linear::{fit_linear_hobz, LinearConfig, LinearHobzFit};
pub use metrics::{compute_metrics, MetricsReport};
pub use permtest::{fit_arm, permutation_test, PermTestResult};
pub use pite::{compute_pite, compute_pite_rows, PiteResult, PiteRow, DEFAULT_LEVEL};
pub use predict::{
    expected_outcome, expected_partial_outcome, interior_mean, posterior_expectations,
    posterior_interior_mean, predict_draws, predict_one, MetricKind, PredictionDraw, RowSet,
};
