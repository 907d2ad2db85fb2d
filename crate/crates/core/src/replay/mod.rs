//! Trace-driven replay of multi-connectivity strategies.
//!
//! UL packets of the two operators are paired into slots (see [`Timeline`]).
//! Every strategy assigns each slot an effective latency: one operator's
//! latency when a single link carries it, the minimum of both while the
//! packet is duplicated. Controllers only see what they could have known at
//! decision time: radio reports after a fixed delay, UL latencies once an
//! RTT-sized feedback delay has elapsed.

mod cost;
mod outcome;
mod strategies;
mod sweep;
mod timeline;

pub use cost::{normalized_cost, pareto_front, pareto_points, CostModel, COST_WEIGHTS};
pub use outcome::{
    outcome_row, read_outcome_csv, write_decision_log, write_outcome_csv, DecisionEvent, EventKind,
    OutcomeRow, ReplayOutcome,
};
pub use strategies::{
    replay_aggregation, replay_baseline, replay_fd, replay_pd, replay_switching, OperatorSlice,
};
pub use sweep::{sensitivity_sweep, SweepParam, SweepRow};
pub use timeline::{Observer, RadioPoint, RttSample, Slot, Timeline, TimingConfig, UlStream};

use crate::kpi::KpiError;
use crate::policy::PolicyError;
use crate::trace::TraceError;

#[derive(Debug, thiserror::Error)]
pub enum ReplayError {
    #[error("trace has no UL packets")]
    NoPackets,
    #[error("trace spans {span_ms:.0} ms, shorter than the {warmup_ms:.0} ms warm-up")]
    TooShort { span_ms: f64, warmup_ms: f64 },
    #[error("invalid timing {field}: {message}")]
    InvalidTiming { field: &'static str, message: String },
    #[error("link aggregation needs both half-rate runs; {0}")]
    AggregationUnavailable(String),
    #[error("policy mode does not match the requested replay: {0}")]
    WrongMode(String),
    #[error("sweep grid is empty")]
    EmptyGrid,
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error(transparent)]
    Kpi(#[from] KpiError),
    #[error(transparent)]
    Trace(#[from] TraceError),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("{0}")]
    Io(#[from] std::io::Error),
}
