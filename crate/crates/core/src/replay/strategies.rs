use super::outcome::{DecisionEvent, EventKind, ReplayOutcome};
use super::timeline::{Observer, Timeline, TimingConfig};
use super::ReplayError;
use crate::kpi::effective_latency;
use crate::policy::{
    excess_terms_lenient, pd_decide, switching_decide, ControllerState, KpiView, Mode,
    PolicyConfig, SwitchDecision,
};
use crate::trace::{DualTrace, Operator, PerOperator};

/// Every packet over one operator.
pub fn replay_baseline(tl: &Timeline, operator: Operator) -> Result<ReplayOutcome, ReplayError> {
    let lats: Vec<f64> = tl.slots.iter().map(|s| s.latency_ms[operator]).collect();
    let n = lats.len() as u64;
    let mut carried = PerOperator::new(0, 0);
    carried[operator] = n;
    ReplayOutcome::build(
        format!("Baseline ({}-only)", operator.mno_label()),
        operator,
        lats,
        carried,
        0,
        Vec::new(),
    )
}

/// Every packet over both operators; the first arrival counts.
pub fn replay_fd(tl: &Timeline, primary: Operator) -> Result<ReplayOutcome, ReplayError> {
    let lats: Vec<f64> = tl
        .slots
        .iter()
        .map(|s| s.latency_ms.a.min(s.latency_ms.b))
        .collect();
    let n = lats.len() as u64;
    ReplayOutcome::build("FD", primary, lats, PerOperator::new(n, n), n, Vec::new())
}

/// UL latencies of one operator from a run at half the composite rate.
#[derive(Debug, Clone, PartialEq)]
pub struct OperatorSlice {
    pub operator: Operator,
    pub latencies_ms: Vec<f64>,
}

impl OperatorSlice {
    pub fn from_trace(trace: &DualTrace, operator: Operator) -> Option<Self> {
        let latencies_ms: Vec<f64> = trace.uplink(operator).map(effective_latency).collect();
        (!latencies_ms.is_empty()).then_some(Self {
            operator,
            latencies_ms,
        })
    }
}

/// Even split of the load: packets alternate between the two half-rate runs.
pub fn replay_aggregation(
    half_p: Option<&OperatorSlice>,
    half_q: Option<&OperatorSlice>,
) -> Result<ReplayOutcome, ReplayError> {
    let (p, q) = match (half_p, half_q) {
        (Some(p), Some(q)) => (p, q),
        (None, _) => return Err(ReplayError::AggregationUnavailable("primary half missing".into())),
        (_, None) => return Err(ReplayError::AggregationUnavailable("secondary half missing".into())),
    };
    if p.operator == q.operator {
        return Err(ReplayError::AggregationUnavailable(format!(
            "both halves belong to operator {}",
            p.operator
        )));
    }
    let (lp, lq) = (&p.latencies_ms, &q.latencies_ms);
    let mut lats = Vec::with_capacity(lp.len() + lq.len());
    for i in 0..lp.len().max(lq.len()) {
        lats.extend(lp.get(i));
        lats.extend(lq.get(i));
    }
    let mut carried = PerOperator::new(0, 0);
    carried[p.operator] = lp.len() as u64;
    carried[q.operator] = lq.len() as u64;
    ReplayOutcome::build("Link Aggregation", p.operator, lats, carried, 0, Vec::new())
}

fn start_checks(tl: &Timeline, cfg: &PolicyConfig, timing: &TimingConfig, mode: Mode) -> Result<u64, ReplayError> {
    cfg.validate()?;
    timing.validate()?;
    if cfg.mode != mode {
        return Err(ReplayError::WrongMode(format!("policy '{}' is {:?}", cfg.name, cfg.mode)));
    }
    let t0 = tl.first_tx_us();
    let span = tl.last_tx_us() - t0;
    if span < timing.warmup_us() {
        return Err(ReplayError::TooShort {
            span_ms: span as f64 / 1000.0,
            warmup_ms: timing.warmup_ms,
        });
    }
    Ok(t0)
}

/// Selected metrics whose excess on `op` is positive, e.g. `RSRP+LAT`.
pub(crate) fn exceeding(view: &KpiView, cfg: &PolicyConfig, op: Operator) -> String {
    let e = excess_terms_lenient(view, cfg, op);
    let names: Vec<&str> = cfg
        .metrics
        .iter()
        .filter(|m| e.get(*m) > 0.0)
        .map(|m| m.as_str())
        .collect();
    if names.is_empty() {
        "none".into()
    } else {
        names.join("+")
    }
}

/// Heartbeat-driven switching: slots sent in `[t_k, t_k+1)` use the operator
/// selected at heartbeat `t_k`.
pub fn replay_switching(
    tl: &Timeline,
    cfg: &PolicyConfig,
    timing: &TimingConfig,
) -> Result<ReplayOutcome, ReplayError> {
    let t0 = start_checks(tl, cfg, timing, Mode::Switching)?;
    let first_decision = t0 + timing.warmup_us();
    let hb = timing.heartbeat_us();
    let p = cfg.primary;

    let mut obs = Observer::new(tl, timing);
    let mut state = ControllerState::new(p);
    let mut log = Vec::new();
    let mut blocked = false;
    let mut next_hb = t0;
    let mut lats = Vec::with_capacity(tl.slots.len());
    let mut carried = PerOperator::new(0u64, 0u64);

    for slot in &tl.slots {
        while next_hb <= slot.tx_us {
            if next_hb >= first_decision {
                let view = obs.view(next_hb);
                let out = switching_decide(&state, &view, cfg, next_hb);
                let shown = match (out.decision, out.suppressed) {
                    (SwitchDecision::Stay, None) => None,
                    (SwitchDecision::Stay, Some(d)) => Some(d),
                    (d, _) => Some(d),
                };
                let suppressed = out.suppressed.is_some();
                if let Some(d) = shown {
                    if !suppressed || !blocked {
                        let trigger = match d {
                            SwitchDecision::SwitchToSecondary => exceeding(&view, cfg, p),
                            _ if out.scores[p] == 0.0 => "recovered".into(),
                            _ => "secondary_not_better".into(),
                        };
                        log.push(DecisionEvent {
                            t_us: next_hb,
                            event: EventKind::Switch,
                            trigger,
                            scores: out.scores,
                            active: out.state.active,
                            duplicating: false,
                            suppressed,
                        });
                    }
                }
                blocked = suppressed;
                state = out.state;
            }
            next_hb += hb;
        }
        lats.push(slot.latency_ms[state.active]);
        carried[state.active] += 1;
    }
    ReplayOutcome::build(cfg.name.clone(), p, lats, carried, 0, log)
}

/// Event-driven partial duplication, evaluated at every packet and at every
/// instant a new primary radio report becomes visible.
pub fn replay_pd(tl: &Timeline, cfg: &PolicyConfig, timing: &TimingConfig) -> Result<ReplayOutcome, ReplayError> {
    let t0 = start_checks(tl, cfg, timing, Mode::PartialDuplication)?;
    let first_decision = t0 + timing.warmup_us();
    let p = cfg.primary;
    let radio_instants = Observer::radio_visibility(tl, timing, p);

    let mut obs = Observer::new(tl, timing);
    let mut state = ControllerState::new(p);
    let mut log = Vec::new();
    let mut blocked = false;
    let mut ri = 0;
    let mut lats = Vec::with_capacity(tl.slots.len());
    let mut duplicated = 0u64;

    let mut evaluate = |t: u64, state: &mut ControllerState| {
        let view = obs.view(t);
        let out = pd_decide(state, &view, cfg, t);
        if out.changed || (out.suppressed && !blocked) {
            let turning_on = !state.duplicating;
            log.push(DecisionEvent {
                t_us: t,
                event: if turning_on { EventKind::DupOn } else { EventKind::DupOff },
                trigger: if turning_on { exceeding(&view, cfg, p) } else { "cleared".into() },
                scores: out.scores,
                active: p,
                duplicating: out.duplicating,
                suppressed: out.suppressed,
            });
        }
        blocked = out.suppressed;
        *state = out.state;
    };

    for slot in &tl.slots {
        while ri < radio_instants.len() && radio_instants[ri] <= slot.tx_us {
            let t = radio_instants[ri];
            if t >= first_decision && t < slot.tx_us {
                evaluate(t, &mut state);
            }
            ri += 1;
        }
        if slot.tx_us >= first_decision {
            evaluate(slot.tx_us, &mut state);
        }
        if state.duplicating {
            duplicated += 1;
            lats.push(slot.latency_ms.a.min(slot.latency_ms.b));
        } else {
            lats.push(slot.latency_ms[p]);
        }
    }
    let n = lats.len() as u64;
    let mut carried = PerOperator::new(0, 0);
    carried[p] = n;
    carried[p.other()] = duplicated;
    ReplayOutcome::build(cfg.name.clone(), p, lats, carried, duplicated, log)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kpi::LOSS_SENTINEL_MS;
    use crate::policy::{Metric, MetricSet, TriggerExpr};
    use crate::trace::{Direction, PacketRecord, RadioSample, Scenario, ScenarioMeta};

    const STEP: u64 = 10_000;

    /// 10 ms spacing, constant radio, latencies from the closures.
    fn trace(n: u64, lat: impl Fn(Operator, u64) -> Option<u64>) -> DualTrace {
        let mut packets = Vec::new();
        for op in Operator::ALL {
            for i in 0..n {
                let tx = 1_000_000 + i * STEP;
                packets.push(PacketRecord {
                    seq: i,
                    operator: op,
                    direction: Direction::Ul,
                    tx_us: tx,
                    rx_us: lat(op, i).map(|l| tx + l),
                    payload_len: 1436,
                });
            }
        }
        crate::trace::sort_packets(&mut packets);
        let secs = (n * STEP) / 1_000_000 + 2;
        let radio = PerOperator::from_fn(|op| {
            (0..secs)
                .map(|s| RadioSample {
                    operator: op,
                    t_s: s,
                    rsrp_dbm: -80.0,
                    ul_tx_pwr_dbm: 5.0,
                    cell_id: "1".into(),
                    position: None,
                })
                .collect()
        });
        DualTrace {
            run_id: "t".into(),
            target_rate_bps: 1436.0 * 8.0 * 100.0,
            packets,
            radio,
            meta: ScenarioMeta {
                scenario: Scenario::Synthetic,
                duration_s: (n * STEP) as f64 / 1e6,
                distance_km: 0.0,
                notes: String::new(),
            },
        }
    }

    #[test]
    fn fd_takes_min_and_loses_only_when_both_lost() {
        let tr = trace(4, |op, i| match (op, i) {
            (Operator::A, 0) => Some(40_000),
            (Operator::B, 0) => Some(900_000),
            (_, 1) => None,
            (Operator::A, _) => None,
            (Operator::B, _) => Some(20_000),
        });
        let tl = Timeline::new(&tr).unwrap();
        let fd = replay_fd(&tl, Operator::A).unwrap();
        assert_eq!(fd.effective_latencies, vec![40.0, LOSS_SENTINEL_MS, 20.0, 20.0]);
        assert_eq!(fd.losses.lost, 1);
        assert_eq!(fd.overhead_pct, 100.0);
        assert_eq!(fd.use_pct, PerOperator::new(100.0, 100.0));
    }

    #[test]
    fn aggregation_examples() {
        let s = |op, v: Vec<f64>| OperatorSlice { operator: op, latencies_ms: v };
        let a = s(Operator::A, vec![30.0; 5]);
        let b = s(Operator::B, vec![30.0; 5]);
        let o = replay_aggregation(Some(&a), Some(&b)).unwrap();
        assert_eq!(o.stats.p99, 30.0);
        assert_eq!(o.overhead_pct, 0.0);
        let lost = s(Operator::B, vec![LOSS_SENTINEL_MS; 5]);
        let o = replay_aggregation(Some(&a), Some(&lost)).unwrap();
        assert_eq!(o.losses.true_loss_ratio, 0.5);
        assert_eq!(o.effective_latencies[..4], [30.0, LOSS_SENTINEL_MS, 30.0, LOSS_SENTINEL_MS]);
        assert!(matches!(replay_aggregation(Some(&a), None), Err(ReplayError::AggregationUnavailable(_))));
        assert!(replay_aggregation(Some(&a), Some(&a)).is_err());
    }

    #[test]
    fn latency_switch_and_return() {
        // A degrades from packet 300 to 599; B stays at 20 ms
        let tr = trace(1000, |op, i| match op {
            Operator::A if (300..600).contains(&i) => Some(400_000),
            Operator::A => Some(30_000),
            Operator::B => Some(20_000),
        });
        let tl = Timeline::new(&tr).unwrap();
        let cfg = PolicyConfig::switching(MetricSet::from_iter([Metric::Lat]), Operator::A);
        let timing = TimingConfig {
            warmup_ms: 500.0,
            ..TimingConfig::default()
        };
        let o = replay_switching(&tl, &cfg, &timing).unwrap();
        let events: Vec<_> = o.decision_log.iter().filter(|e| !e.suppressed).collect();
        assert_eq!(events.len(), 2, "{:?}", o.decision_log);
        assert_eq!(events[0].active, Operator::B);
        assert_eq!(events[0].trigger, "LAT");
        assert_eq!(events[1].active, Operator::A);
        // reaction: step at 4.0 s, RTT_min 20 ms, heartbeat 100 ms
        let t_step = 1_000_000 + 300 * STEP;
        assert!(events[0].t_us <= t_step + 20_000 + 100_000);
        assert_eq!(o.overhead_pct, 0.0);
        assert!((o.use_pct.a + o.use_pct.b - 100.0).abs() < 1e-9);
        for (l, s) in o.effective_latencies.iter().zip(&tl.slots) {
            assert!(*l == s.latency_ms.a || *l == s.latency_ms.b);
        }
    }

    #[test]
    fn pd_degenerate_cases() {
        let tr = trace(500, |op, i| match op {
            Operator::A if i % 7 == 0 => Some(300_000),
            Operator::A => Some(30_000),
            Operator::B if i % 5 == 0 => None,
            Operator::B => Some(25_000),
        });
        let tl = Timeline::new(&tr).unwrap();
        let timing = TimingConfig {
            warmup_ms: 0.0,
            ..TimingConfig::default()
        };
        let on = PolicyConfig::partial_duplication(TriggerExpr::Const(true), Operator::A);
        let off = PolicyConfig::partial_duplication(TriggerExpr::Const(false), Operator::A);
        let fd = replay_fd(&tl, Operator::A).unwrap();
        let base = replay_baseline(&tl, Operator::A).unwrap();
        let pd_on = replay_pd(&tl, &on, &timing).unwrap();
        let pd_off = replay_pd(&tl, &off, &timing).unwrap();
        assert_eq!(pd_on.effective_latencies, fd.effective_latencies);
        assert_eq!(pd_on.overhead_pct, 100.0);
        assert_eq!(pd_off.effective_latencies, base.effective_latencies);
        assert_eq!(pd_off.overhead_pct, 0.0);
    }

    #[test]
    fn short_trace_and_wrong_mode_rejected() {
        let tr = trace(10, |_, _| Some(10_000));
        let tl = Timeline::new(&tr).unwrap();
        let sw = PolicyConfig::switching(MetricSet::from_iter([Metric::Rsrp]), Operator::A);
        assert!(matches!(
            replay_switching(&tl, &sw, &TimingConfig::default()),
            Err(ReplayError::TooShort { .. })
        ));
        let timing = TimingConfig { warmup_ms: 0.0, ..TimingConfig::default() };
        assert!(matches!(replay_pd(&tl, &sw, &timing), Err(ReplayError::WrongMode(_))));
    }
}
