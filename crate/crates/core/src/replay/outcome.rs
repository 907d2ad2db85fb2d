use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::cost::{normalized_cost, CostModel};
use super::ReplayError;
use crate::kpi::{fraction_within, latency_percentiles, LatencyStats, LossReport, LATENCY_TARGET_MS};
use crate::trace::{Operator, PerOperator};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    Switch,
    DupOn,
    DupOff,
}

/// A controller state change, or the first of a run of changes blocked by
/// the dwell time (`suppressed`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionEvent {
    pub t_us: u64,
    pub event: EventKind,
    pub trigger: String,
    pub scores: PerOperator<f64>,
    pub active: Operator,
    pub duplicating: bool,
    pub suppressed: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplayOutcome {
    pub strategy: String,
    /// Operator whose traffic is not counted as extra in the cost model.
    pub primary: Operator,
    /// One value per composite UL packet, in transmit order.
    pub effective_latencies: Vec<f64>,
    pub stats: LatencyStats,
    pub losses: LossReport,
    pub use_pct: PerOperator<f64>,
    pub overhead_pct: f64,
    /// Packets sent over each operator.
    pub carried: PerOperator<u64>,
    /// Packet count of the single-link reference.
    pub baseline_packets: u64,
    pub decision_log: Vec<DecisionEvent>,
}

impl ReplayOutcome {
    pub(crate) fn build(
        strategy: impl Into<String>,
        primary: Operator,
        effective_latencies: Vec<f64>,
        carried: PerOperator<u64>,
        duplicated: u64,
        decision_log: Vec<DecisionEvent>,
    ) -> Result<Self, ReplayError> {
        let n = effective_latencies.len() as u64;
        let stats = latency_percentiles(&effective_latencies)?;
        let losses = LossReport::from_latencies(&effective_latencies)?;
        let pct = |c: u64| 100.0 * c as f64 / n as f64;
        Ok(Self {
            strategy: strategy.into(),
            primary,
            stats,
            losses,
            use_pct: carried.map(|_, &c| pct(c)),
            overhead_pct: pct(duplicated),
            carried,
            baseline_packets: n,
            decision_log,
            effective_latencies,
        })
    }

    /// Fraction of packets within the latency target.
    pub fn reliability(&self) -> f64 {
        fraction_within(&self.effective_latencies, LATENCY_TARGET_MS)
    }
}

/// One line of an outcome table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutcomeRow {
    pub strategy: String,
    pub p50: f64,
    pub p90: f64,
    pub p95: f64,
    pub p99: f64,
    pub p999: f64,
    pub late_loss_pct: f64,
    pub true_loss_pct: f64,
    #[serde(rename = "use_A_pct")]
    pub use_a_pct: f64,
    #[serde(rename = "use_B_pct")]
    pub use_b_pct: f64,
    pub overhead_pct: f64,
    pub cost_w12: f64,
    pub cost_w15: f64,
    pub cost_w20: f64,
    pub cost_w30: f64,
    pub primary: Operator,
    pub within_150ms_pct: f64,
}

impl OutcomeRow {
    /// Cost recomputed from the use percentages for an arbitrary weight.
    pub fn cost(&self, weight: f64) -> f64 {
        let (p, q) = match self.primary {
            Operator::A => (self.use_a_pct, self.use_b_pct),
            Operator::B => (self.use_b_pct, self.use_a_pct),
        };
        p / 100.0 + weight * (q / 100.0)
    }
}

pub fn outcome_row(o: &ReplayOutcome) -> OutcomeRow {
    let cost = |w| normalized_cost(o, &CostModel { secondary_weight: w });
    OutcomeRow {
        strategy: o.strategy.clone(),
        p50: o.stats.p50,
        p90: o.stats.p90,
        p95: o.stats.p95,
        p99: o.stats.p99,
        p999: o.stats.p999,
        late_loss_pct: 100.0 * o.losses.late_loss_ratio,
        true_loss_pct: 100.0 * o.losses.true_loss_ratio,
        use_a_pct: o.use_pct.a,
        use_b_pct: o.use_pct.b,
        overhead_pct: o.overhead_pct,
        cost_w12: cost(1.2),
        cost_w15: cost(1.5),
        cost_w20: cost(2.0),
        cost_w30: cost(3.0),
        primary: o.primary,
        within_150ms_pct: 100.0 * o.reliability(),
    }
}

pub fn write_outcome_csv<W: Write>(w: W, rows: &[OutcomeRow]) -> Result<(), ReplayError> {
    let mut w = csv::Writer::from_writer(w);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_outcome_csv<R: Read>(r: R) -> Result<Vec<OutcomeRow>, ReplayError> {
    csv::Reader::from_reader(r)
        .deserialize()
        .collect::<Result<_, _>>()
        .map_err(ReplayError::from)
}

/// Decision log as JSON lines.
pub fn write_decision_log<W: Write>(mut w: W, log: &[DecisionEvent]) -> Result<(), ReplayError> {
    for e in log {
        serde_json::to_writer(&mut w, e).map_err(std::io::Error::from)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}
