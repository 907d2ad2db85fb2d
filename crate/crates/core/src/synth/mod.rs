//! Seeded synthetic dual-operator traces.
//!
//! RSRP follows a per-operator piecewise-linear track plus AR(1) log-normal
//! shadowing whose innovations are correlated across operators. UL transmit
//! power comes from [`PowerControlModel`]; while it is clamped at the UE
//! maximum, UL packets draw heavy-tailed delay spikes. DL packets are echoes
//! of delivered UL packets with a tight, independent latency distribution.
//!
//! Output is a plain [`DualTrace`]; the generator is fully determined by the
//! config and its seed.

mod power;

pub use power::{PowerControlModel, TxPower};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal, Pareto, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::kpi::LOSS_SENTINEL_MS;
use crate::trace::{
    sort_packets, Direction, DualTrace, Operator, PacketRecord, PerOperator, RadioSample,
    Scenario, ScenarioMeta, PROBE_PAYLOAD_LEN, RSRP_RANGE_DBM, UL_TX_PWR_RANGE_DBM,
};

#[derive(Debug, thiserror::Error)]
pub enum SynthError {
    #[error("invalid {field}: {message}")]
    InvalidField { field: &'static str, message: String },
}

impl SynthError {
    pub(crate) fn field(field: &'static str, message: impl Into<String>) -> Self {
        SynthError::InvalidField {
            field,
            message: message.into(),
        }
    }
}

/// Maps power headroom to UL latency.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LatencyModel {
    /// Median UL latency when not power limited.
    pub base_ms: f64,
    /// Log-normal shape of the base latency.
    pub base_shape: f64,
    /// Per-packet spike probability while the UE is power limited.
    pub spike_prob: f64,
    pub spike_scale_ms: f64,
    /// Pareto tail index of spike magnitudes; smaller is heavier.
    pub spike_tail_index: f64,
    pub dl_base_ms: f64,
    pub dl_shape: f64,
}

impl Default for LatencyModel {
    fn default() -> Self {
        Self {
            base_ms: 35.0,
            base_shape: 0.25,
            spike_prob: 0.3,
            spike_scale_ms: 250.0,
            spike_tail_index: 1.5,
            dl_base_ms: 30.0,
            dl_shape: 0.1,
        }
    }
}

impl LatencyModel {
    fn validate(&self) -> Result<(), SynthError> {
        for (name, v) in [
            ("latency_model.base_ms", self.base_ms),
            ("latency_model.spike_scale_ms", self.spike_scale_ms),
            ("latency_model.spike_tail_index", self.spike_tail_index),
            ("latency_model.dl_base_ms", self.dl_base_ms),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(SynthError::field(name, format!("must be positive, got {v}")));
            }
        }
        for (name, v) in [
            ("latency_model.base_shape", self.base_shape),
            ("latency_model.dl_shape", self.dl_shape),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(SynthError::field(name, format!("must be >= 0, got {v}")));
            }
        }
        if !(0.0..=1.0).contains(&self.spike_prob) {
            return Err(SynthError::field(
                "latency_model.spike_prob",
                format!("must be in [0, 1], got {}", self.spike_prob),
            ));
        }
        Ok(())
    }
}

/// A `(time_s, rsrp_dbm)` knot of an RSRP track, relative to the run start.
pub type TrackKnot = [f64; 2];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthConfig {
    #[serde(default = "default_run_id")]
    pub run_id: String,
    #[serde(default = "default_scenario")]
    pub scenario: Scenario,
    pub duration_s: f64,
    #[serde(default)]
    pub distance_km: f64,
    pub target_rate_bps: f64,
    #[serde(default = "default_start")]
    pub start_unix_s: u64,
    pub rsrp_track: PerOperator<Vec<TrackKnot>>,
    #[serde(default)]
    pub shadowing_sigma_db: f64,
    #[serde(default)]
    pub shadowing_corr: f64,
    /// Lag-one autocorrelation of the per-second shadowing process.
    #[serde(default = "default_memory")]
    pub shadowing_memory: f64,
    /// Path loss is taken as this reference power minus RSRP.
    #[serde(default = "default_reference_tx")]
    pub reference_tx_dbm: f64,
    /// Radio reports are rounded to this step; 0 disables rounding.
    #[serde(default = "default_resolution")]
    pub report_resolution_db: f64,
    /// Serving-cell dwell; operator B's cell grid is offset by half a span.
    #[serde(default = "default_cell_span")]
    pub cell_span_s: f64,
    #[serde(default)]
    pub latency_model: LatencyModel,
    #[serde(default)]
    pub models: Option<PerOperator<PowerControlModel>>,
    pub seed: u64,
}

fn default_run_id() -> String {
    "synthetic".into()
}
fn default_scenario() -> Scenario {
    Scenario::Synthetic
}
fn default_start() -> u64 {
    1_700_000_000
}
fn default_memory() -> f64 {
    0.7
}
fn default_reference_tx() -> f64 {
    18.0
}
fn default_resolution() -> f64 {
    1.0
}
fn default_cell_span() -> f64 {
    90.0
}

impl SynthConfig {
    /// Flat tracks at `rsrp_dbm` with default settings otherwise.
    pub fn flat(duration_s: f64, target_rate_bps: f64, rsrp_dbm: f64, seed: u64) -> Self {
        Self {
            run_id: default_run_id(),
            scenario: Scenario::Synthetic,
            duration_s,
            distance_km: 0.0,
            target_rate_bps,
            start_unix_s: default_start(),
            rsrp_track: PerOperator::new(vec![[0.0, rsrp_dbm]], vec![[0.0, rsrp_dbm]]),
            shadowing_sigma_db: 0.0,
            shadowing_corr: 0.0,
            shadowing_memory: default_memory(),
            reference_tx_dbm: default_reference_tx(),
            report_resolution_db: default_resolution(),
            cell_span_s: default_cell_span(),
            latency_model: LatencyModel::default(),
            models: None,
            seed,
        }
    }

    /// A ten-minute, 4 Mbps drive through a sparse rural deployment in which
    /// both operators pass through power-limited stretches, partly overlapping.
    pub fn rural_like(seed: u64) -> Self {
        Self {
            run_id: format!("rural-{seed}"),
            scenario: Scenario::Rural,
            distance_km: 12.4,
            rsrp_track: PerOperator::new(
                vec![
                    [0.0, -86.0],
                    [120.0, -97.0],
                    [180.0, -110.0],
                    [260.0, -108.0],
                    [330.0, -92.0],
                    [430.0, -99.0],
                    [500.0, -112.0],
                    [560.0, -95.0],
                    [600.0, -90.0],
                ],
                vec![
                    [0.0, -94.0],
                    [90.0, -104.0],
                    [150.0, -96.0],
                    [240.0, -88.0],
                    [320.0, -101.0],
                    [400.0, -111.0],
                    [470.0, -98.0],
                    [530.0, -106.0],
                    [600.0, -93.0],
                ],
            ),
            shadowing_sigma_db: 4.0,
            shadowing_corr: 0.3,
            ..Self::flat(600.0, 4e6, -90.0, seed)
        }
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        if !(self.duration_s > 0.0 && self.duration_s.is_finite()) {
            return Err(SynthError::field("duration_s", format!("must be positive, got {}", self.duration_s)));
        }
        if !(self.target_rate_bps > 0.0 && self.target_rate_bps.is_finite()) {
            return Err(SynthError::field(
                "target_rate_bps",
                format!("must be positive, got {}", self.target_rate_bps),
            ));
        }
        if !(-1.0..=1.0).contains(&self.shadowing_corr) {
            return Err(SynthError::field(
                "shadowing_corr",
                format!("must be in [-1, 1], got {}", self.shadowing_corr),
            ));
        }
        if !(self.shadowing_sigma_db >= 0.0 && self.shadowing_sigma_db.is_finite()) {
            return Err(SynthError::field(
                "shadowing_sigma_db",
                format!("must be >= 0, got {}", self.shadowing_sigma_db),
            ));
        }
        if !(0.0..1.0).contains(&self.shadowing_memory) {
            return Err(SynthError::field(
                "shadowing_memory",
                format!("must be in [0, 1), got {}", self.shadowing_memory),
            ));
        }
        if !(self.report_resolution_db >= 0.0 && self.report_resolution_db.is_finite()) {
            return Err(SynthError::field("report_resolution_db", "must be >= 0"));
        }
        if !(self.cell_span_s > 0.0 && self.cell_span_s.is_finite()) {
            return Err(SynthError::field("cell_span_s", "must be positive"));
        }
        if !(self.distance_km >= 0.0 && self.distance_km.is_finite()) {
            return Err(SynthError::field("distance_km", "must be >= 0"));
        }
        if !self.reference_tx_dbm.is_finite() {
            return Err(SynthError::field("reference_tx_dbm", "must be finite"));
        }
        for (op, track) in self.rsrp_track.iter() {
            if track.is_empty() {
                return Err(SynthError::field("rsrp_track", format!("operator {op} has no knots")));
            }
            if track.iter().any(|k| !k[0].is_finite() || !k[1].is_finite()) {
                return Err(SynthError::field("rsrp_track", format!("operator {op} has a non-finite knot")));
            }
            if track.windows(2).any(|w| w[1][0] <= w[0][0]) {
                return Err(SynthError::field(
                    "rsrp_track",
                    format!("operator {op} knot times must strictly increase"),
                ));
            }
        }
        self.latency_model.validate()?;
        for (_, m) in self.power_models().iter() {
            m.validate()?;
        }
        Ok(())
    }

    pub fn power_models(&self) -> PerOperator<PowerControlModel> {
        self.models.unwrap_or_default()
    }

    /// UL packet spacing implied by the target rate, microseconds.
    pub fn interval_us(&self) -> f64 {
        f64::from(PROBE_PAYLOAD_LEN) * 8.0 / self.target_rate_bps * 1e6
    }
}

/// Piecewise-linear interpolation, held constant beyond the end knots.
pub fn track_value(track: &[TrackKnot], t_s: f64) -> f64 {
    let idx = track.partition_point(|k| k[0] <= t_s);
    if idx == 0 {
        return track[0][1];
    }
    if idx == track.len() {
        return track[idx - 1][1];
    }
    let ([t0, v0], [t1, v1]) = (track[idx - 1], track[idx]);
    v0 + (v1 - v0) * (t_s - t0) / (t1 - t0)
}

/// A synthetic trace together with the per-second power-limited flags that
/// drove it.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthRun {
    pub trace: DualTrace,
    pub limited: PerOperator<Vec<bool>>,
}

const SHADOW_STREAM: u64 = 0;

fn latency_stream(op: Operator) -> u64 {
    match op {
        Operator::A => 1,
        Operator::B => 2,
    }
}

fn round_to(v: f64, step: f64) -> f64 {
    if step > 0.0 {
        (v / step).round() * step
    } else {
        v
    }
}

/// Correlated AR(1) shadowing, one value per second and operator.
fn shadowing(cfg: &SynthConfig, seconds: usize) -> PerOperator<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(SHADOW_STREAM);
    let rho = cfg.shadowing_corr;
    let shared = rho.abs().sqrt();
    let own = (1.0 - rho.abs()).sqrt();
    let m = cfg.shadowing_memory;
    let innov_gain = (1.0 - m * m).sqrt();
    let mut out = PerOperator::new(Vec::with_capacity(seconds), Vec::with_capacity(seconds));
    let (mut xa, mut xb) = (0.0f64, 0.0f64);
    for k in 0..seconds {
        let z0: f64 = rng.sample(StandardNormal);
        let za: f64 = rng.sample(StandardNormal);
        let zb: f64 = rng.sample(StandardNormal);
        let ea = shared * z0 + own * za;
        let eb = rho.signum() * shared * z0 + own * zb;
        if k == 0 {
            xa = ea;
            xb = eb;
        } else {
            xa = m * xa + innov_gain * ea;
            xb = m * xb + innov_gain * eb;
        }
        out.a.push(cfg.shadowing_sigma_db * xa);
        out.b.push(cfg.shadowing_sigma_db * xb);
    }
    out
}

/// Generates a trace and its limited-flag series.
pub fn synth_dual_run(cfg: &SynthConfig) -> Result<SynthRun, SynthError> {
    cfg.validate()?;
    let models = cfg.power_models();
    let seconds = cfg.duration_s.ceil() as usize;
    let shadow = shadowing(cfg, seconds);
    let start_us = cfg.start_unix_s * 1_000_000;
    let duration_us = cfg.duration_s * 1e6;
    let interval = cfg.interval_us();
    let lm = cfg.latency_model;

    let base = LogNormal::new(lm.base_ms.ln(), lm.base_shape)
        .map_err(|e| SynthError::field("latency_model.base_shape", e.to_string()))?;
    let dl = LogNormal::new(lm.dl_base_ms.ln(), lm.dl_shape)
        .map_err(|e| SynthError::field("latency_model.dl_shape", e.to_string()))?;
    let spike = Pareto::new(lm.spike_scale_ms, lm.spike_tail_index)
        .map_err(|e| SynthError::field("latency_model.spike_tail_index", e.to_string()))?;

    let mut packets = Vec::new();
    let mut radio = PerOperator::<Vec<RadioSample>>::default();
    let mut limited = PerOperator::<Vec<bool>>::default();

    for op in Operator::ALL {
        let model = models[op];
        let cell_offset = match op {
            Operator::A => 0.0,
            Operator::B => cfg.cell_span_s / 2.0,
        };
        for k in 0..seconds {
            let true_rsrp = (track_value(&cfg.rsrp_track[op], k as f64) + shadow[op][k])
                .clamp(RSRP_RANGE_DBM.0, RSRP_RANGE_DBM.1);
            let tx = model.required_tx_power(cfg.reference_tx_dbm - true_rsrp);
            limited[op].push(tx.limited);
            let cell = ((k as f64 + cell_offset) / cfg.cell_span_s).floor() as u64;
            radio[op].push(RadioSample {
                operator: op,
                t_s: cfg.start_unix_s + k as u64,
                rsrp_dbm: round_to(true_rsrp, cfg.report_resolution_db)
                    .clamp(RSRP_RANGE_DBM.0, RSRP_RANGE_DBM.1),
                ul_tx_pwr_dbm: round_to(tx.power_dbm, cfg.report_resolution_db)
                    .clamp(UL_TX_PWR_RANGE_DBM.0, UL_TX_PWR_RANGE_DBM.1),
                cell_id: format!("{op}{cell}"),
                position: None,
            });
        }

        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(latency_stream(op));
        let mut seq = 0u64;
        loop {
            let offset = (seq as f64 * interval).round();
            if offset >= duration_us {
                break;
            }
            let tx_us = start_us + offset as u64;
            let second = ((offset as u64) / 1_000_000) as usize;
            let mut lat_ms: f64 = base.sample(&mut rng);
            if limited[op][second.min(seconds - 1)] && rng.random_bool(lm.spike_prob) {
                lat_ms += spike.sample(&mut rng) - lm.spike_scale_ms;
            }
            let ul_rx = (lat_ms < LOSS_SENTINEL_MS).then(|| tx_us + (lat_ms * 1000.0).round() as u64);
            packets.push(PacketRecord {
                seq,
                operator: op,
                direction: Direction::Ul,
                tx_us,
                rx_us: ul_rx,
                payload_len: PROBE_PAYLOAD_LEN,
            });
            if let Some(echo_tx) = ul_rx {
                let dl_ms: f64 = dl.sample(&mut rng);
                packets.push(PacketRecord {
                    seq,
                    operator: op,
                    direction: Direction::Dl,
                    tx_us: echo_tx,
                    rx_us: (dl_ms < LOSS_SENTINEL_MS)
                        .then(|| echo_tx + (dl_ms * 1000.0).round() as u64),
                    payload_len: PROBE_PAYLOAD_LEN,
                });
            }
            seq += 1;
        }
    }
    sort_packets(&mut packets);

    Ok(SynthRun {
        trace: DualTrace {
            run_id: cfg.run_id.clone(),
            target_rate_bps: cfg.target_rate_bps,
            packets,
            radio,
            meta: ScenarioMeta {
                scenario: cfg.scenario,
                duration_s: cfg.duration_s,
                distance_km: cfg.distance_km,
                notes: format!("synthetic, seed {}", cfg.seed),
            },
        },
        limited,
    })
}

pub fn synth_dual_trace(cfg: &SynthConfig) -> Result<DualTrace, SynthError> {
    synth_dual_run(cfg).map(|run| run.trace)
}
