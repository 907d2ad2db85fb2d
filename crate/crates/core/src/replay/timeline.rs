//! Packet slots and the controller's causal view of a trace.

use serde::{Deserialize, Serialize};

use super::ReplayError;
use crate::kpi::{effective_latency, LOSS_SENTINEL_MS};
use crate::policy::{KpiView, LinkKpis, Observed};
use crate::trace::{DualTrace, Operator, PerOperator};

const TIMEOUT_US: u64 = 10_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TimingConfig {
    /// Switching decision period.
    pub heartbeat_ms: f64,
    /// Delay between a radio report's timestamp and the controller seeing it.
    pub radio_obs_delay_ms: f64,
    /// Time after the first packet before any decision is taken.
    pub warmup_ms: f64,
}

impl Default for TimingConfig {
    fn default() -> Self {
        Self {
            heartbeat_ms: 100.0,
            radio_obs_delay_ms: 1000.0,
            warmup_ms: 2000.0,
        }
    }
}

fn ms_to_us(ms: f64) -> u64 {
    (ms * 1000.0).round() as u64
}

impl TimingConfig {
    pub fn validate(&self) -> Result<(), ReplayError> {
        let check = |field: &'static str, v: f64, allow_zero: bool| {
            let ok = v.is_finite() && if allow_zero { v >= 0.0 } else { v > 0.0 };
            if ok {
                Ok(())
            } else {
                Err(ReplayError::InvalidTiming {
                    field,
                    message: format!("got {v}"),
                })
            }
        };
        check("heartbeat_ms", self.heartbeat_ms, false)?;
        check("radio_obs_delay_ms", self.radio_obs_delay_ms, false)?;
        check("warmup_ms", self.warmup_ms, true)
    }

    pub fn heartbeat_us(&self) -> u64 {
        ms_to_us(self.heartbeat_ms)
    }

    pub fn radio_obs_delay_us(&self) -> u64 {
        ms_to_us(self.radio_obs_delay_ms)
    }

    pub fn warmup_us(&self) -> u64 {
        ms_to_us(self.warmup_ms)
    }
}

/// One transmission opportunity: the same-index UL packet of each operator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Slot {
    /// Earliest transmit time among the present packets.
    pub tx_us: u64,
    /// Effective latency per operator; the loss sentinel where absent.
    pub latency_ms: PerOperator<f64>,
    pub present: PerOperator<bool>,
}

/// Round-trip sample completing when the echo of one UL packet returns.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RttSample {
    pub operator: Operator,
    pub completion_us: u64,
    pub rtt_us: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct UlStream {
    pub tx_us: Vec<u64>,
    pub latency_ms: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RadioPoint {
    pub t_us: u64,
    pub rsrp_dbm: f64,
    pub ul_tx_pwr_dbm: f64,
}

/// Everything the replays need from a trace, precomputed once.
#[derive(Debug, Clone, PartialEq)]
pub struct Timeline {
    pub slots: Vec<Slot>,
    pub ul: PerOperator<UlStream>,
    /// Sorted by completion time.
    pub rtt: Vec<RttSample>,
    pub radio: PerOperator<Vec<RadioPoint>>,
}

impl Timeline {
    pub fn new(trace: &DualTrace) -> Result<Self, ReplayError> {
        let ul = PerOperator::from_fn(|op| {
            let (tx_us, latency_ms) = trace.uplink(op).map(|p| (p.tx_us, effective_latency(p))).unzip();
            UlStream { tx_us, latency_ms }
        });
        if ul.a.tx_us.is_empty() && ul.b.tx_us.is_empty() {
            return Err(ReplayError::NoPackets);
        }
        let interval = trace.nominal_interval_us().or_else(|| median_gap(&ul.a.tx_us));
        let slots = build_slots(&ul, interval.unwrap_or(0.0));
        let rtt = rtt_samples(trace);
        let radio = trace.radio.map(|_, samples| {
            samples
                .iter()
                .map(|s| RadioPoint {
                    t_us: s.time_us(),
                    rsrp_dbm: s.rsrp_dbm,
                    ul_tx_pwr_dbm: s.ul_tx_pwr_dbm,
                })
                .collect()
        });
        Ok(Self { slots, ul, rtt, radio })
    }

    pub fn first_tx_us(&self) -> u64 {
        self.slots[0].tx_us
    }

    pub fn last_tx_us(&self) -> u64 {
        self.slots[self.slots.len() - 1].tx_us
    }
}

fn median_gap(tx: &[u64]) -> Option<f64> {
    let mut gaps: Vec<u64> = tx.windows(2).map(|w| w[1] - w[0]).collect();
    if gaps.is_empty() {
        return None;
    }
    gaps.sort_unstable();
    Some(gaps[gaps.len() / 2] as f64)
}

/// Pairs the two UL streams by transmission index once their start times are
/// aligned. Packets of the earlier-starting stream that precede the other
/// stream's first packet by more than half an interval, and any trailing
/// packets without a partner, get a lost partner.
fn build_slots(ul: &PerOperator<UlStream>, interval_us: f64) -> Vec<Slot> {
    let first = ul.map(|_, s| s.tx_us.first().copied());
    let lead = |op: Operator| -> usize {
        match (first[op], first[op.other()]) {
            (Some(_), Some(other_start)) => {
                let cutoff = other_start as f64 - interval_us / 2.0;
                ul[op].tx_us.partition_point(|&t| (t as f64) < cutoff)
            }
            _ => 0,
        }
    };
    let skip = PerOperator::from_fn(lead);
    let mut slots = Vec::with_capacity(ul.a.tx_us.len().max(ul.b.tx_us.len()));
    let single = |op: Operator, i: usize| {
        let mut present = PerOperator::new(false, false);
        present[op] = true;
        let mut latency_ms = PerOperator::new(LOSS_SENTINEL_MS, LOSS_SENTINEL_MS);
        latency_ms[op] = ul[op].latency_ms[i];
        Slot {
            tx_us: ul[op].tx_us[i],
            latency_ms,
            present,
        }
    };
    for op in Operator::ALL {
        slots.extend((0..skip[op]).map(|i| single(op, i)));
    }
    let paired = (ul.a.tx_us.len() - skip.a).min(ul.b.tx_us.len() - skip.b);
    for j in 0..paired {
        let (ia, ib) = (skip.a + j, skip.b + j);
        slots.push(Slot {
            tx_us: ul.a.tx_us[ia].min(ul.b.tx_us[ib]),
            latency_ms: PerOperator::new(ul.a.latency_ms[ia], ul.b.latency_ms[ib]),
            present: PerOperator::new(true, true),
        });
    }
    for op in Operator::ALL {
        slots.extend((skip[op] + paired..ul[op].tx_us.len()).map(|i| single(op, i)));
    }
    slots.sort_by_key(|s| s.tx_us);
    slots
}

/// UL latency plus the DL latency of its echo, capped at the timeout. Lost
/// packets or echoes count as a full timeout. Operators without any DL
/// records fall back to the UL latency alone.
fn rtt_samples(trace: &DualTrace) -> Vec<RttSample> {
    let mut out = Vec::new();
    for op in Operator::ALL {
        let mut dl: Vec<(u64, u64)> = trace
            .downlink(op)
            .map(|p| (p.seq, p.rx_us.map_or(TIMEOUT_US, |rx| rx.saturating_sub(p.tx_us).min(TIMEOUT_US))))
            .collect();
        let has_dl = !dl.is_empty();
        dl.sort_unstable();
        for p in trace.uplink(op) {
            let ul_us = p.rx_us.map_or(TIMEOUT_US, |rx| (rx - p.tx_us).min(TIMEOUT_US));
            let rtt_us = if ul_us >= TIMEOUT_US {
                TIMEOUT_US
            } else if has_dl {
                let dl_us = match dl.binary_search_by_key(&p.seq, |&(s, _)| s) {
                    Ok(i) => dl[i].1,
                    Err(_) => TIMEOUT_US,
                };
                (ul_us + dl_us).min(TIMEOUT_US)
            } else {
                ul_us
            };
            out.push(RttSample {
                operator: op,
                completion_us: p.tx_us + rtt_us,
                rtt_us,
            });
        }
    }
    out.sort_by_key(|s| (s.completion_us, s.operator));
    out
}

/// Incremental builder of the controller's KPI view. Queries must come in
/// non-decreasing time order.
pub struct Observer<'a> {
    tl: &'a Timeline,
    radio_delay_us: u64,
    next_rtt: usize,
    rtt: PerOperator<Option<u64>>,
    /// Highest `t - RTT_min(t)` reached before the last processed completion.
    best_horizon: Option<i64>,
    last_query: u64,
}

impl<'a> Observer<'a> {
    pub fn new(tl: &'a Timeline, timing: &TimingConfig) -> Self {
        Self {
            tl,
            radio_delay_us: timing.radio_obs_delay_us(),
            next_rtt: 0,
            rtt: PerOperator::new(None, None),
            best_horizon: None,
            last_query: 0,
        }
    }

    fn rtt_min(&self) -> Option<u64> {
        match (self.rtt.a, self.rtt.b) {
            (Some(a), Some(b)) => Some(a.min(b)),
            (a, b) => a.or(b),
        }
    }

    /// Latest transmit time whose UL latency is known at `t_us`. The horizon
    /// never moves backwards: when the RTT estimate grows, knowledge already
    /// gained is kept.
    pub fn horizon(&mut self, t_us: u64) -> Option<i64> {
        debug_assert!(t_us >= self.last_query, "observer queried out of order");
        self.last_query = t_us;
        let samples = &self.tl.rtt;
        while self.next_rtt < samples.len() && samples[self.next_rtt].completion_us <= t_us {
            let e = samples[self.next_rtt].completion_us;
            if let Some(m) = self.rtt_min() {
                let reach = e as i64 - m as i64;
                self.best_horizon = Some(self.best_horizon.map_or(reach, |b| b.max(reach)));
            }
            while self.next_rtt < samples.len() && samples[self.next_rtt].completion_us == e {
                let s = samples[self.next_rtt];
                self.rtt[s.operator] = Some(s.rtt_us);
                self.next_rtt += 1;
            }
        }
        let now = self.rtt_min().map(|m| t_us as i64 - m as i64);
        match (self.best_horizon, now) {
            (Some(b), Some(n)) => Some(b.max(n)),
            (b, n) => b.or(n),
        }
    }

    pub fn view(&mut self, t_us: u64) -> KpiView {
        let horizon = self.horizon(t_us);
        PerOperator::from_fn(|op| {
            let mut link = LinkKpis::default();
            let radio = &self.tl.radio[op];
            let visible = radio.partition_point(|r| r.t_us + self.radio_delay_us <= t_us);
            if visible > 0 {
                let r = radio[visible - 1];
                let at = r.t_us + self.radio_delay_us;
                link.rsrp_dbm = Some(Observed {
                    value: r.rsrp_dbm,
                    observed_at_us: at,
                });
                link.ul_tx_pwr_dbm = Some(Observed {
                    value: r.ul_tx_pwr_dbm,
                    observed_at_us: at,
                });
            }
            if let Some(h) = horizon.filter(|&h| h >= 0) {
                let ul = &self.tl.ul[op];
                let known = ul.tx_us.partition_point(|&tx| tx as i64 <= h);
                if known > 0 {
                    link.latency_ms = Some(Observed {
                        value: ul.latency_ms[known - 1],
                        observed_at_us: t_us,
                    });
                }
            }
            link
        })
    }

    /// Instants at which a radio report of `op` becomes visible.
    pub fn radio_visibility(tl: &Timeline, timing: &TimingConfig, op: Operator) -> Vec<u64> {
        let d = timing.radio_obs_delay_us();
        tl.radio[op].iter().map(|r| r.t_us + d).collect()
    }
}
