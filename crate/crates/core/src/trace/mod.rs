//! Canonical data model for dual-operator measurement runs.
//!
//! A [`DualTrace`] holds the probe packets of both operators (interleaved by
//! transmit time), the 1 Hz radio reports of each operator and a small block
//! of scenario metadata. Timestamps are integer microseconds since the Unix
//! epoch; radio reports carry whole seconds.
//!
//! Lost packets keep `rx_us = None` here. The 10 s sentinel latency is a KPI
//! concern and lives in [`crate::kpi`].

mod jsonl;

pub use jsonl::{
    load_packets, load_radio, load_trace, load_trace_dir, read_packets, read_radio,
    write_packets, write_radio, write_trace_dir, LoadOptions, LoadReport, LoadedTrace,
    SkippedLine, TraceMeta, META_FILE, PACKETS_FILE, RADIO_FILE,
};

use std::collections::HashSet;
use std::fmt;
use std::ops::{Index, IndexMut};
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// Probe payload size in bytes. Chosen upstream to avoid IP fragmentation.
pub const PROBE_PAYLOAD_LEN: u32 = 1436;

/// Reporting range for RSRP, dBm.
pub const RSRP_RANGE_DBM: (f64, f64) = (-156.0, -31.0);

/// Range accepted for reported UL transmit power, dBm.
pub const UL_TX_PWR_RANGE_DBM: (f64, f64) = (-50.0, 26.0);

/// Relative tolerance between the nominal target rate and the UL packet rate.
pub const RATE_TOLERANCE: f64 = 0.10;

/// One of the two operators (interfaces) of a dual-connectivity run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Operator {
    A,
    B,
}

impl Operator {
    pub const ALL: [Operator; 2] = [Operator::A, Operator::B];

    pub fn other(self) -> Operator {
        match self {
            Operator::A => Operator::B,
            Operator::B => Operator::A,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Operator::A => "A",
            Operator::B => "B",
        }
    }

    /// Label used in result tables, where operator A is "MNO1".
    pub fn mno_label(self) -> &'static str {
        match self {
            Operator::A => "MNO1",
            Operator::B => "MNO2",
        }
    }
}

impl fmt::Display for Operator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Operator {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "A" | "a" => Ok(Operator::A),
            "B" | "b" => Ok(Operator::B),
            other => Err(format!("unknown operator '{other}' (expected A or B)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Direction {
    #[serde(rename = "UL")]
    Ul,
    #[serde(rename = "DL")]
    Dl,
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Direction::Ul => "UL",
            Direction::Dl => "DL",
        })
    }
}

/// A value per operator, indexable by [`Operator`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct PerOperator<T> {
    #[serde(rename = "A")]
    pub a: T,
    #[serde(rename = "B")]
    pub b: T,
}

impl<T> PerOperator<T> {
    pub fn new(a: T, b: T) -> Self {
        Self { a, b }
    }

    pub fn from_fn(mut f: impl FnMut(Operator) -> T) -> Self {
        Self {
            a: f(Operator::A),
            b: f(Operator::B),
        }
    }

    pub fn map<U>(&self, mut f: impl FnMut(Operator, &T) -> U) -> PerOperator<U> {
        PerOperator {
            a: f(Operator::A, &self.a),
            b: f(Operator::B, &self.b),
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (Operator, &T)> {
        [(Operator::A, &self.a), (Operator::B, &self.b)].into_iter()
    }
}

impl<T> Index<Operator> for PerOperator<T> {
    type Output = T;

    fn index(&self, op: Operator) -> &T {
        match op {
            Operator::A => &self.a,
            Operator::B => &self.b,
        }
    }
}

impl<T> IndexMut<Operator> for PerOperator<T> {
    fn index_mut(&mut self, op: Operator) -> &mut T {
        match op {
            Operator::A => &mut self.a,
            Operator::B => &mut self.b,
        }
    }
}

/// One probe packet: identity, timestamps and delivery outcome.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PacketRecord {
    pub seq: u64,
    pub operator: Operator,
    pub direction: Direction,
    pub tx_us: u64,
    /// `None` when the packet never arrived within the timeout.
    pub rx_us: Option<u64>,
    pub payload_len: u32,
}

impl PacketRecord {
    pub fn is_conforming(&self) -> bool {
        self.payload_len == PROBE_PAYLOAD_LEN
    }

    fn sort_key(&self) -> (u64, Operator, Direction, u64) {
        (self.tx_us, self.operator, self.direction, self.seq)
    }
}

/// Sorts packets into canonical order: transmit time, operator, direction, seq.
pub fn sort_packets(packets: &mut [PacketRecord]) {
    packets.sort_by_key(PacketRecord::sort_key);
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoPosition {
    pub lat: f64,
    pub lon: f64,
}

/// 1 Hz radio report of one operator.
#[derive(Debug, Clone, PartialEq)]
pub struct RadioSample {
    pub operator: Operator,
    pub t_s: u64,
    pub rsrp_dbm: f64,
    pub ul_tx_pwr_dbm: f64,
    pub cell_id: String,
    pub position: Option<GeoPosition>,
}

impl RadioSample {
    pub fn time_us(&self) -> u64 {
        self.t_s * 1_000_000
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scenario {
    Urban,
    Suburban,
    Rural,
    Synthetic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioMeta {
    pub scenario: Scenario,
    pub duration_s: f64,
    pub distance_km: f64,
    #[serde(default)]
    pub notes: String,
}

impl ScenarioMeta {
    pub fn validate(&self) -> Result<(), TraceError> {
        if !(self.duration_s > 0.0) {
            return Err(TraceError::invariant(format!(
                "scenario duration must be > 0 s, got {}",
                self.duration_s
            )));
        }
        if !(self.distance_km >= 0.0) {
            return Err(TraceError::invariant(format!(
                "scenario distance must be >= 0 km, got {}",
                self.distance_km
            )));
        }
        Ok(())
    }
}

/// Time-aligned packet and radio series of both operators over one run.
#[derive(Debug, Clone, PartialEq)]
pub struct DualTrace {
    pub run_id: String,
    pub target_rate_bps: f64,
    /// Both operators, both directions, in canonical order.
    pub packets: Vec<PacketRecord>,
    pub radio: PerOperator<Vec<RadioSample>>,
    pub meta: ScenarioMeta,
}

#[derive(Debug, thiserror::Error)]
pub enum TraceError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: schema violation: {message}")]
    Schema {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("{}invariant violation: {message}", location(.path, .line))]
    Invariant {
        path: Option<PathBuf>,
        line: Option<usize>,
        message: String,
    },
    #[error("no radio samples for operator {0}")]
    NoRadio(Operator),
}

fn location(path: &Option<PathBuf>, line: &Option<usize>) -> String {
    match (path, line) {
        (Some(p), Some(l)) => format!("{}:{}: ", p.display(), l),
        (Some(p), None) => format!("{}: ", p.display()),
        (None, Some(l)) => format!("line {l}: "),
        (None, None) => String::new(),
    }
}

impl TraceError {
    pub fn invariant(message: impl Into<String>) -> Self {
        TraceError::Invariant {
            path: None,
            line: None,
            message: message.into(),
        }
    }

    pub fn is_io(&self) -> bool {
        matches!(self, TraceError::Io { .. })
    }
}

/// Result of a zero-order-hold radio lookup.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RadioLookup<'a> {
    pub sample: &'a RadioSample,
    /// Set when the query time precedes every sample and the first one was used.
    pub extrapolated: bool,
}

/// Most recent radio sample of `operator` at or before `t_us`.
pub fn radio_at(trace: &DualTrace, operator: Operator, t_us: u64) -> Result<RadioLookup<'_>, TraceError> {
    let samples = &trace.radio[operator];
    if samples.is_empty() {
        return Err(TraceError::NoRadio(operator));
    }
    let idx = samples.partition_point(|s| s.time_us() <= t_us);
    Ok(if idx == 0 {
        RadioLookup {
            sample: &samples[0],
            extrapolated: true,
        }
    } else {
        RadioLookup {
            sample: &samples[idx - 1],
            extrapolated: false,
        }
    })
}

impl DualTrace {
    /// Uplink packets of one operator, in transmit order.
    pub fn uplink(&self, operator: Operator) -> impl Iterator<Item = &PacketRecord> {
        self.packets
            .iter()
            .filter(move |p| p.operator == operator && p.direction == Direction::Ul)
    }

    pub fn downlink(&self, operator: Operator) -> impl Iterator<Item = &PacketRecord> {
        self.packets
            .iter()
            .filter(move |p| p.operator == operator && p.direction == Direction::Dl)
    }

    /// Nominal UL inter-packet interval implied by the target rate, microseconds.
    pub fn nominal_interval_us(&self) -> Option<f64> {
        (self.target_rate_bps > 0.0)
            .then(|| f64::from(PROBE_PAYLOAD_LEN) * 8.0 / self.target_rate_bps * 1e6)
    }

    /// Checks every type-level and trace-level invariant.
    pub fn validate(&self, check_rate: bool) -> Result<(), TraceError> {
        self.meta.validate()?;
        validate_packets(&self.packets)?;
        for op in Operator::ALL {
            validate_radio(op, &self.radio[op])?;
        }

        for op in Operator::ALL {
            let ul: Vec<&PacketRecord> = self.uplink(op).collect();
            let (Some(first), Some(last)) = (ul.first(), ul.last()) else {
                return Err(TraceError::invariant(format!("operator {op} has no UL packets")));
            };
            let radio = &self.radio[op];
            let (Some(r0), Some(r1)) = (radio.first(), radio.last()) else {
                return Err(TraceError::invariant(format!("operator {op} has no radio samples")));
            };
            // A report covers the second that follows its timestamp.
            let radio_end = r1.time_us() + 1_000_000;
            if first.tx_us >= radio_end || last.tx_us < r0.time_us() {
                return Err(TraceError::invariant(format!(
                    "operator {op}: packet time range does not overlap radio time range"
                )));
            }
            if check_rate {
                let achieved =
                    ul.len() as f64 * f64::from(PROBE_PAYLOAD_LEN) * 8.0 / self.meta.duration_s;
                let rel = (achieved - self.target_rate_bps).abs() / self.target_rate_bps;
                if !(rel <= RATE_TOLERANCE) {
                    return Err(TraceError::invariant(format!(
                        "operator {op}: UL packet rate {achieved:.0} bps deviates {:.1}% from target {:.0} bps",
                        rel * 100.0,
                        self.target_rate_bps
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Per-record and per-stream packet invariants.
///
/// UL streams must have strictly increasing seq in transmit order. DL packets
/// are echoes whose order follows UL arrival, so only seq uniqueness is
/// required there.
pub fn validate_packets(packets: &[PacketRecord]) -> Result<(), TraceError> {
    let mut last_ul: PerOperator<Option<u64>> = PerOperator::default();
    let mut dl_seen: PerOperator<HashSet<u64>> = PerOperator::default();
    for (idx, p) in packets.iter().enumerate() {
        if let Some(rx) = p.rx_us {
            if rx < p.tx_us {
                return Err(TraceError::Invariant {
                    path: None,
                    line: Some(idx + 1),
                    message: format!(
                        "packet seq {} ({} {}) has rx_us {} before tx_us {}",
                        p.seq, p.operator, p.direction, rx, p.tx_us
                    ),
                });
            }
        }
        match p.direction {
            Direction::Ul => {
                let last = &mut last_ul[p.operator];
                if let Some(prev) = *last {
                    if p.seq <= prev {
                        return Err(TraceError::Invariant {
                            path: None,
                            line: Some(idx + 1),
                            message: format!(
                                "UL seq {} of operator {} does not increase (previous {prev})",
                                p.seq, p.operator
                            ),
                        });
                    }
                }
                *last = Some(p.seq);
            }
            Direction::Dl => {
                if !dl_seen[p.operator].insert(p.seq) {
                    return Err(TraceError::Invariant {
                        path: None,
                        line: Some(idx + 1),
                        message: format!("duplicate DL seq {} for operator {}", p.seq, p.operator),
                    });
                }
            }
        }
    }
    Ok(())
}

pub fn validate_radio(operator: Operator, samples: &[RadioSample]) -> Result<(), TraceError> {
    let mut prev: Option<u64> = None;
    for (idx, s) in samples.iter().enumerate() {
        let fail = |message: String| TraceError::Invariant {
            path: None,
            line: Some(idx + 1),
            message,
        };
        if s.operator != operator {
            return Err(fail(format!(
                "radio sample for operator {} filed under {operator}",
                s.operator
            )));
        }
        if !(RSRP_RANGE_DBM.0..=RSRP_RANGE_DBM.1).contains(&s.rsrp_dbm) {
            return Err(fail(format!(
                "RSRP {} dBm at t={} outside reporting range",
                s.rsrp_dbm, s.t_s
            )));
        }
        if !(UL_TX_PWR_RANGE_DBM.0..=UL_TX_PWR_RANGE_DBM.1).contains(&s.ul_tx_pwr_dbm) {
            return Err(fail(format!(
                "UL Tx power {} dBm at t={} outside range",
                s.ul_tx_pwr_dbm, s.t_s
            )));
        }
        if let Some(p) = prev {
            if s.t_s <= p {
                return Err(fail(format!(
                    "radio samples of operator {operator} not time-ordered ({} after {p})",
                    s.t_s
                )));
            }
        }
        prev = Some(s.t_s);
    }
    Ok(())
}
