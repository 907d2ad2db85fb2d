//! Latency, loss and radio KPIs computed over packet and radio series.

mod latency;
mod radio;
mod report;

pub use latency::{
    classify_loss, effective_latency, fraction_within, latency_percentiles,
    percentile_nearest_rank, LatencyStats, LossClass, LossReport, PERCENTILES_PERMILLE,
};
pub use radio::{
    delta_sinr_bound, fit_power_regression, handover_rate, regression_gap, spearman_rho,
    RegressionFit, SATURATION_THRESHOLD_DBM,
};
pub use report::{binned_latency_by_rsrp, kpi_rows, write_kpi_csv, KpiRow, RsrpBin};

use crate::trace::TraceError;

/// Latency assigned to packets not delivered within the timeout window.
pub const LOSS_SENTINEL_MS: f64 = 10_000.0;

/// Delivery bound beyond which a packet counts as a late loss.
pub const LATE_LOSS_MS: f64 = 800.0;

/// One-way latency target used for the reliability figure.
pub const LATENCY_TARGET_MS: f64 = 150.0;

#[derive(Debug, thiserror::Error)]
pub enum KpiError {
    #[error("empty input")]
    Empty,
    #[error("invalid latency {0} ms")]
    InvalidLatency(f64),
    #[error("latency {0} ms exceeds the {LOSS_SENTINEL_MS} ms loss sentinel")]
    AboveSentinel(f64),
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("need at least {needed} samples, got {got}")]
    TooFewSamples { needed: usize, got: usize },
    #[error("constant sequence has no defined rank correlation")]
    ConstantSequence,
    #[error("all RSRP values are equal; regression is undefined")]
    DegenerateRegression,
    #[error("{name} must be positive, got {value}")]
    NonPositive { name: &'static str, value: f64 },
    #[error(transparent)]
    Trace(#[from] TraceError),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}
