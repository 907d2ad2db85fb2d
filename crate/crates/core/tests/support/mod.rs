//! Straight-line reference implementation of the controller replays. Every
//! decision instant rebuilds the controller's knowledge from the raw trace
//! with no state carried between instants other than the controller's own.

#![allow(dead_code)]

use std::collections::HashMap;

use paaf_core::policy::{Metric, Mode, PolicyConfig, Trigger};
use paaf_core::synth::{synth_dual_trace, LatencyModel, SynthConfig};
use paaf_core::trace::{
    sort_packets, Direction, DualTrace, Operator, PacketRecord, PerOperator, RadioSample, Scenario, ScenarioMeta,
};

const SENTINEL_MS: f64 = 10_000.0;
const TIMEOUT_US: u64 = 10_000_000;

#[derive(Debug, Clone, PartialEq)]
pub struct OracleEvent {
    pub t_us: u64,
    pub kind: &'static str,
    pub trigger: String,
    pub scores: [f64; 2],
    pub active: Operator,
    pub duplicating: bool,
    pub suppressed: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleRun {
    pub events: Vec<OracleEvent>,
    pub latencies: Vec<f64>,
}

struct Link {
    tx: Vec<u64>,
    lat_ms: Vec<f64>,
    /// (visible at, rsrp, ul tx power).
    radio: Vec<(u64, f64, f64)>,
}

pub struct Prepared {
    links: [Link; 2],
    /// (completion, operator index, tx, rtt) of every UL packet.
    rtt: Vec<(u64, usize, u64, u64)>,
}

fn idx(op: Operator) -> usize {
    match op {
        Operator::A => 0,
        Operator::B => 1,
    }
}

/// Requires both operators to send the same number of UL packets at the same
/// instants, which holds for synthetic traces.
pub fn prepare(trace: &DualTrace, radio_delay_us: u64) -> Prepared {
    let link = |op: Operator| {
        let mut ul: Vec<_> = trace
            .packets
            .iter()
            .filter(|p| p.operator == op && p.direction == Direction::Ul)
            .collect();
        ul.sort_by_key(|p| p.tx_us);
        let dl: HashMap<u64, Option<u64>> = trace
            .packets
            .iter()
            .filter(|p| p.operator == op && p.direction == Direction::Dl)
            .map(|p| (p.seq, p.rx_us.map(|rx| rx - p.tx_us)))
            .collect();
        let has_dl = !dl.is_empty();
        let mut tx = Vec::new();
        let mut lat_ms = Vec::new();
        let mut rtt = Vec::new();
        for p in ul {
            let ul_us = p.rx_us.map(|rx| rx - p.tx_us);
            tx.push(p.tx_us);
            lat_ms.push(match ul_us {
                Some(u) if u < TIMEOUT_US => u as f64 / 1000.0,
                _ => SENTINEL_MS,
            });
            let r = match ul_us {
                Some(u) if u < TIMEOUT_US => {
                    if has_dl {
                        match dl.get(&p.seq).copied().flatten() {
                            Some(d) => (u + d).min(TIMEOUT_US),
                            None => TIMEOUT_US,
                        }
                    } else {
                        u
                    }
                }
                _ => TIMEOUT_US,
            };
            rtt.push((p.tx_us + r, idx(op), p.tx_us, r));
        }
        let radio = trace.radio[op]
            .iter()
            .map(|s| (s.t_s * 1_000_000 + radio_delay_us, s.rsrp_dbm, s.ul_tx_pwr_dbm))
            .collect();
        (Link { tx, lat_ms, radio }, rtt)
    };
    let (a, mut rtt) = link(Operator::A);
    let (b, rtt_b) = link(Operator::B);
    rtt.extend(rtt_b);
    rtt.sort_unstable();
    let p = Prepared { links: [a, b], rtt };
    assert_eq!(p.links[0].tx, p.links[1].tx, "oracle needs aligned streams");
    p
}

fn rtt_min(s: [Option<u64>; 2]) -> Option<u64> {
    match s {
        [Some(a), Some(b)] => Some(a.min(b)),
        [a, b] => a.or(b),
    }
}

/// Largest `s - RTT_min(s)` over all `s <= t`. RTT_min only changes at
/// completion instants, so the supremum is reached either at `t` or just
/// before one of them.
fn horizon(p: &Prepared, t: u64) -> Option<i64> {
    let mut latest = [None, None];
    let mut best: Option<i64> = None;
    let mut consider = |v: Option<i64>| {
        if let Some(v) = v {
            best = Some(best.map_or(v, |b| b.max(v)));
        }
    };
    let mut prev = None;
    for &(c, op, _, r) in &p.rtt {
        if c > t {
            break;
        }
        if prev != Some(c) {
            consider(rtt_min(latest).map(|m| c as i64 - m as i64));
            prev = Some(c);
        }
        latest[op] = Some(r);
    }
    consider(rtt_min(latest).map(|m| t as i64 - m as i64));
    best
}

/// Observed value of each metric per operator at `t`.
fn view(p: &Prepared, t: u64) -> [[Option<f64>; 3]; 2] {
    let h = horizon(p, t);
    let mut out = [[None; 3]; 2];
    for (i, l) in p.links.iter().enumerate() {
        if let Some(&(_, r, u)) = l.radio.iter().rev().find(|x| x.0 <= t) {
            out[i][0] = Some(r);
            out[i][1] = Some(u);
        }
        if let Some(h) = h.filter(|&h| h >= 0) {
            let known = l.tx.iter().filter(|&&tx| tx as i64 <= h).count();
            if known > 0 {
                out[i][2] = Some(l.lat_ms[known - 1]);
            }
        }
    }
    out
}

fn excess(v: [Option<f64>; 3], cfg: &PolicyConfig) -> [f64; 3] {
    [
        v[0].map_or(0.0, |x| (cfg.theta_r_dbm - x).max(0.0)),
        v[1].map_or(0.0, |x| (x - cfg.theta_u_dbm).max(0.0)),
        v[2].map_or(0.0, |x| (x - cfg.theta_l_ms).max(0.0)),
    ]
}

const METRICS: [Metric; 3] = [Metric::Rsrp, Metric::UlTx, Metric::Lat];

fn score(e: [f64; 3], cfg: &PolicyConfig) -> f64 {
    let w = [cfg.w_r, cfg.w_u, cfg.w_l];
    let s = [cfg.sigma_r_db, cfg.sigma_u_db, cfg.sigma_l_ms];
    let mut acc = 0.0;
    for k in 0..3 {
        if cfg.metrics.contains(METRICS[k]) {
            acc += w[k] * e[k] / s[k];
        }
    }
    acc
}

fn exceeding(e: [f64; 3], cfg: &PolicyConfig) -> String {
    let names: Vec<&str> = (0..3)
        .filter(|&k| cfg.metrics.contains(METRICS[k]) && e[k] > 0.0)
        .map(|k| ["RSRP", "ULTX", "LAT"][k])
        .collect();
    if names.is_empty() {
        "none".into()
    } else {
        names.join("+")
    }
}

/// Views at every instant, computed in parallel since each is independent.
fn views(p: &Prepared, instants: &[u64]) -> Vec<[[Option<f64>; 3]; 2]> {
    let threads = std::thread::available_parallelism().map_or(4, |n| n.get());
    let chunk = instants.len().div_ceil(threads).max(1);
    std::thread::scope(|s| {
        let handles: Vec<_> = instants
            .chunks(chunk)
            .map(|c| s.spawn(move || c.iter().map(|&t| view(p, t)).collect::<Vec<_>>()))
            .collect();
        handles.into_iter().flat_map(|h| h.join().unwrap()).collect()
    })
}

pub fn switching(p: &Prepared, cfg: &PolicyConfig, heartbeat_us: u64, warmup_us: u64) -> OracleRun {
    assert_eq!(cfg.mode, Mode::Switching);
    let tx = &p.links[0].tx;
    let t0 = tx[0];
    let last = *tx.last().unwrap();
    let pi = idx(cfg.primary);
    let qi = 1 - pi;
    let dwell = (cfg.dwell_ms * 1000.0).round() as u64;
    let hbs: Vec<u64> = (0..)
        .map(|k| t0 + k * heartbeat_us)
        .take_while(|&t| t <= last)
        .filter(|&t| t >= t0 + warmup_us)
        .collect();
    let all_views = views(p, &hbs);

    let mut active = pi;
    let mut last_change: Option<u64> = None;
    let mut blocked = false;
    let mut events = Vec::new();
    let mut selected_at = Vec::new();
    for (&t, v) in hbs.iter().zip(&all_views) {
        let e = [excess(v[0], cfg), excess(v[1], cfg)];
        let sc = [score(e[0], cfg), score(e[1], cfg)];
        let (sp, sq) = (sc[pi], sc[qi]);
        let want = if active == pi {
            (sp > 0.0 && sq < sp).then_some(qi)
        } else {
            (sp == 0.0 || sp <= sq).then_some(pi)
        };
        let mut suppressed = false;
        if let Some(target) = want {
            let allowed = last_change.is_none_or(|l| t - l >= dwell);
            suppressed = !allowed;
            if allowed {
                active = target;
                last_change = Some(t);
            }
            if allowed || !blocked {
                let trigger = if target == qi {
                    exceeding(e[pi], cfg)
                } else if sp == 0.0 {
                    "recovered".into()
                } else {
                    "secondary_not_better".into()
                };
                events.push(OracleEvent {
                    t_us: t,
                    kind: "switch",
                    trigger,
                    scores: sc,
                    active: Operator::ALL[active],
                    duplicating: false,
                    suppressed,
                });
            }
        }
        blocked = suppressed;
        selected_at.push((t, active));
    }

    let mut latencies = Vec::with_capacity(tx.len());
    for (j, &t) in tx.iter().enumerate() {
        let k = selected_at.partition_point(|s| s.0 <= t);
        let op = if k == 0 { pi } else { selected_at[k - 1].1 };
        latencies.push(p.links[op].lat_ms[j]);
    }
    OracleRun { events, latencies }
}

pub fn partial_duplication(p: &Prepared, cfg: &PolicyConfig, warmup_us: u64) -> OracleRun {
    assert_eq!(cfg.mode, Mode::PartialDuplication);
    let tx = &p.links[0].tx;
    let first = tx[0] + warmup_us;
    let last = *tx.last().unwrap();
    let pi = idx(cfg.primary);
    let dwell = (cfg.dwell_ms * 1000.0).round() as u64;
    let mut instants: Vec<u64> = tx.iter().copied().filter(|&t| t >= first).collect();
    instants.extend(p.links[pi].radio.iter().map(|r| r.0).filter(|&t| t >= first && t <= last));
    instants.sort_unstable();
    instants.dedup();
    let all_views = views(p, &instants);

    let mut dup = false;
    let mut last_change: Option<u64> = None;
    let mut blocked = false;
    let mut events = Vec::new();
    let mut state_at = Vec::new();
    for (&t, v) in instants.iter().zip(&all_views) {
        let e = [excess(v[0], cfg), excess(v[1], cfg)];
        let sc = [score(e[0], cfg), score(e[1], cfg)];
        let ep = e[pi];
        let want = match &cfg.trigger {
            Trigger::Score => sc[pi] > 0.0,
            Trigger::Condition(expr) => expr.eval(&|m| ep[METRICS.iter().position(|&x| x == m).unwrap()] > 0.0),
        };
        let mut suppressed = false;
        if want != dup {
            let allowed = last_change.is_none_or(|l| t - l >= dwell);
            suppressed = !allowed;
            if allowed || !blocked {
                events.push(OracleEvent {
                    t_us: t,
                    kind: if want { "dup_on" } else { "dup_off" },
                    trigger: if want { exceeding(ep, cfg) } else { "cleared".into() },
                    scores: sc,
                    active: cfg.primary,
                    duplicating: if allowed { want } else { dup },
                    suppressed,
                });
            }
            if allowed {
                dup = want;
                last_change = Some(t);
            }
        }
        blocked = suppressed;
        state_at.push((t, dup));
    }

    let mut latencies = Vec::with_capacity(tx.len());
    for (j, &t) in tx.iter().enumerate() {
        let k = state_at.partition_point(|s| s.0 <= t);
        let d = k > 0 && state_at[k - 1].1;
        let (a, b) = (p.links[0].lat_ms[j], p.links[1].lat_ms[j]);
        latencies.push(if d { a.min(b) } else { p.links[pi].lat_ms[j] });
    }
    OracleRun { events, latencies }
}

/// Library decision log in the oracle's shape.
pub fn as_oracle_events(log: &[paaf_core::replay::DecisionEvent]) -> Vec<OracleEvent> {
    use paaf_core::replay::EventKind;
    log.iter()
        .map(|e| OracleEvent {
            t_us: e.t_us,
            kind: match e.event {
                EventKind::Switch => "switch",
                EventKind::DupOn => "dup_on",
                EventKind::DupOff => "dup_off",
            },
            trigger: e.trigger.clone(),
            scores: [e.scores.a, e.scores.b],
            active: e.active,
            duplicating: e.duplicating,
            suppressed: e.suppressed,
        })
        .collect()
}

/// Number of positions where the two runs disagree, counting events and
/// per-packet latencies, plus any length difference.
pub fn mismatches(run: &OracleRun, outcome: &paaf_core::replay::ReplayOutcome) -> usize {
    let got = as_oracle_events(&outcome.decision_log);
    let ev = got.iter().zip(&run.events).filter(|(a, b)| a != b).count() + got.len().abs_diff(run.events.len());
    let lat = outcome
        .effective_latencies
        .iter()
        .zip(&run.latencies)
        .filter(|(a, b)| a.to_bits() != b.to_bits())
        .count()
        + outcome.effective_latencies.len().abs_diff(run.latencies.len());
    ev + lat
}

/// Drives the switching and PD controllers with `steps` random, rapidly
/// flapping KPI views each and returns (state changes, dwell violations).
pub fn dwell_stress(seed: u64, steps: usize) -> (u64, u64) {
    use paaf_core::policy::{
        pd_decide, switching_decide, ControllerState, KpiView, LinkKpis, MetricSet, Observed, TriggerExpr,
    };
    use paaf_core::trace::PerOperator;
    use rand::{Rng, SeedableRng};

    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut changes = 0u64;
    let mut violations = 0u64;
    let sets = [
        MetricSet::EMPTY.with(Metric::Rsrp),
        MetricSet::EMPTY.with(Metric::Lat),
        MetricSet::ALL,
    ];
    let exprs = ["RSRP", "LAT", "(RSRP AND ULTX) OR LAT"];
    let rounds = 20;
    let per_round = steps / (rounds * sets.len() * 2);
    for round in 0..rounds {
        for (k, set) in sets.iter().enumerate() {
            let primary = if round % 2 == 0 { Operator::A } else { Operator::B };
            let sw = PolicyConfig::switching(*set, primary);
            let pd = PolicyConfig::partial_duplication(TriggerExpr::parse(exprs[k]).unwrap(), primary);
            for cfg in [sw, pd] {
                let dwell = cfg.dwell_us();
                assert_eq!(dwell, if cfg.metrics.contains(Metric::Lat) { 100_000 } else { 1_000_000 });
                let mut state = ControllerState::new(primary);
                let mut now = 0u64;
                let mut last: Option<u64> = None;
                for _ in 0..per_round {
                    // mostly sub-dwell steps, sometimes simultaneous events
                    now += match rng.random_range(0..10) {
                        0 => 0,
                        1 => rng.random_range(0..2 * dwell),
                        _ => rng.random_range(1..dwell / 10),
                    };
                    let mut link = || {
                        let o = |v: f64| {
                            Some(Observed {
                                value: v,
                                observed_at_us: now,
                            })
                        };
                        LinkKpis {
                            rsrp_dbm: o(rng.random_range(-110.0..-90.0)),
                            ul_tx_pwr_dbm: o(rng.random_range(15.0..25.0)),
                            latency_ms: o(rng.random_range(50.0..250.0)),
                        }
                    };
                    let view: KpiView = PerOperator::new(link(), link());
                    let changed = if cfg.mode == Mode::Switching {
                        let out = switching_decide(&state, &view, &cfg, now);
                        let c = out.state.active != state.active;
                        state = out.state;
                        c
                    } else {
                        let out = pd_decide(&state, &view, &cfg, now);
                        let c = out.state.duplicating != state.duplicating;
                        state = out.state;
                        c
                    };
                    if changed {
                        changes += 1;
                        if last.is_some_and(|l| now - l < dwell) {
                            violations += 1;
                        }
                        last = Some(now);
                    }
                }
            }
        }
    }
    (changes, violations)
}

/// Short trace with RSRP dips and heavy, sometimes lossy, latency spikes.
pub fn random_trace(seed: u64, rsrp_a: f64, rsrp_b: f64) -> DualTrace {
    let mut cfg = SynthConfig::flat(30.0, 0.5e6, -95.0, seed);
    cfg.rsrp_track = PerOperator::new(
        vec![[0.0, rsrp_a], [15.0, rsrp_a - 12.0], [30.0, rsrp_a]],
        vec![[0.0, rsrp_b], [20.0, rsrp_b - 15.0], [30.0, rsrp_b + 3.0]],
    );
    cfg.shadowing_sigma_db = 5.0;
    cfg.latency_model = LatencyModel {
        spike_prob: 0.5,
        spike_scale_ms: 400.0,
        spike_tail_index: 0.6,
        ..LatencyModel::default()
    };
    synth_dual_trace(&cfg).unwrap()
}

pub const START_S: u64 = 1_000;
pub const STEP_US: u64 = 10_000;

/// 10 ms spacing over `secs` seconds, 10 ms echoes, 1 Hz radio.
pub fn step_trace(
    secs: u64,
    ul_ms: impl Fn(Operator, u64) -> f64,
    rsrp: impl Fn(Operator, u64) -> f64,
) -> DualTrace {
    let mut packets = Vec::new();
    let n = secs * 1_000_000 / STEP_US;
    for op in Operator::ALL {
        for i in 0..n {
            let tx = START_S * 1_000_000 + i * STEP_US;
            let rx = tx + (ul_ms(op, tx) * 1000.0) as u64;
            packets.push(PacketRecord {
                seq: i,
                operator: op,
                direction: Direction::Ul,
                tx_us: tx,
                rx_us: Some(rx),
                payload_len: 1436,
            });
            packets.push(PacketRecord {
                seq: i,
                operator: op,
                direction: Direction::Dl,
                tx_us: rx,
                rx_us: Some(rx + 10_000),
                payload_len: 1436,
            });
        }
    }
    sort_packets(&mut packets);
    let radio = PerOperator::from_fn(|op| {
        (0..secs)
            .map(|k| RadioSample {
                operator: op,
                t_s: START_S + k,
                rsrp_dbm: rsrp(op, k),
                ul_tx_pwr_dbm: 10.0,
                cell_id: "1".into(),
                position: None,
            })
            .collect()
    });
    DualTrace {
        run_id: "step".into(),
        target_rate_bps: 1436.0 * 8.0 * 100.0,
        packets,
        radio,
        meta: ScenarioMeta {
            scenario: Scenario::Synthetic,
            duration_s: secs as f64,
            distance_km: 0.0,
            notes: String::new(),
        },
    }
}
