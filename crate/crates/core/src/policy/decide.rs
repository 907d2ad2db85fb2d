use super::{Metric, PolicyConfig, PolicyError, Trigger};
use crate::trace::{Operator, PerOperator};

/// A KPI value and the instant the controller could first know it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Observed {
    pub value: f64,
    pub observed_at_us: u64,
}

/// Latest observed KPIs of one operator.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LinkKpis {
    pub rsrp_dbm: Option<Observed>,
    pub ul_tx_pwr_dbm: Option<Observed>,
    pub latency_ms: Option<Observed>,
}

impl LinkKpis {
    pub fn get(&self, m: Metric) -> Option<Observed> {
        match m {
            Metric::Rsrp => self.rsrp_dbm,
            Metric::UlTx => self.ul_tx_pwr_dbm,
            Metric::Lat => self.latency_ms,
        }
    }
}

pub type KpiView = PerOperator<LinkKpis>;

/// Non-negative threshold violations: dB for RSRP and UL power, ms for latency.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Excess {
    pub e_r: f64,
    pub e_u: f64,
    pub e_l: f64,
}

impl Excess {
    pub fn get(&self, m: Metric) -> f64 {
        match m {
            Metric::Rsrp => self.e_r,
            Metric::UlTx => self.e_u,
            Metric::Lat => self.e_l,
        }
    }
}

fn excess_of(m: Metric, value: f64, cfg: &PolicyConfig) -> f64 {
    let raw = match m {
        Metric::Rsrp => cfg.theta_r_dbm - value,
        Metric::UlTx => value - cfg.theta_u_dbm,
        Metric::Lat => value - cfg.theta_l_ms,
    };
    raw.max(0.0)
}

/// Excess terms for `operator`; every KPI must have been observed.
pub fn excess_terms(view: &KpiView, cfg: &PolicyConfig, operator: Operator) -> Result<Excess, PolicyError> {
    let link = &view[operator];
    let mut e = [0.0; 3];
    for (slot, m) in e.iter_mut().zip(Metric::ALL) {
        let obs = link.get(m).ok_or(PolicyError::MissingKpi { operator, metric: m })?;
        *slot = excess_of(m, obs.value, cfg);
    }
    Ok(Excess {
        e_r: e[0],
        e_u: e[1],
        e_l: e[2],
    })
}

/// Excess terms with unobserved KPIs contributing zero.
pub fn excess_terms_lenient(view: &KpiView, cfg: &PolicyConfig, operator: Operator) -> Excess {
    let link = &view[operator];
    let e = |m: Metric| link.get(m).map_or(0.0, |o| excess_of(m, o.value, cfg));
    Excess {
        e_r: e(Metric::Rsrp),
        e_u: e(Metric::UlTx),
        e_l: e(Metric::Lat),
    }
}

/// Weighted, normalised sum of the excess terms of the selected metrics.
pub fn score_of(excess: &Excess, cfg: &PolicyConfig) -> f64 {
    let sigma = |m: Metric| match m {
        Metric::Rsrp => cfg.sigma_r_db,
        Metric::UlTx => cfg.sigma_u_db,
        Metric::Lat => cfg.sigma_l_ms,
    };
    cfg.metrics
        .iter()
        .fold(0.0, |acc, m| acc + cfg.weight(m) * excess.get(m) / sigma(m))
}

pub fn joint_score(view: &KpiView, cfg: &PolicyConfig, operator: Operator) -> Result<f64, PolicyError> {
    excess_terms(view, cfg, operator).map(|e| score_of(&e, cfg))
}

/// True when a state change at `now_us` respects the dwell time. The first
/// change of a run is always allowed.
pub fn dwell_gate(last_change_us: Option<u64>, now_us: u64, cfg: &PolicyConfig) -> bool {
    match last_change_us {
        None => true,
        Some(last) => now_us.saturating_sub(last) >= cfg.dwell_us(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ControllerState {
    pub primary: Operator,
    /// Operator carrying traffic (switching); always the primary under PD.
    pub active: Operator,
    pub duplicating: bool,
    pub last_change_us: Option<u64>,
}

impl ControllerState {
    pub fn new(primary: Operator) -> Self {
        Self {
            primary,
            active: primary,
            duplicating: false,
            last_change_us: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SwitchDecision {
    Stay,
    SwitchToSecondary,
    ReturnToPrimary,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SwitchOutcome {
    pub state: ControllerState,
    pub decision: SwitchDecision,
    /// A change the rule asked for but the dwell gate blocked.
    pub suppressed: Option<SwitchDecision>,
    pub scores: PerOperator<f64>,
}

/// One switching evaluation. Missing KPIs count as healthy.
pub fn switching_decide(
    state: &ControllerState,
    view: &KpiView,
    cfg: &PolicyConfig,
    now_us: u64,
) -> SwitchOutcome {
    let p = state.primary;
    let q = p.other();
    let scores = PerOperator::from_fn(|op| score_of(&excess_terms_lenient(view, cfg, op), cfg));
    let (sp, sq) = (scores[p], scores[q]);
    let wanted = if state.active == p {
        if sp > 0.0 && sq < sp {
            SwitchDecision::SwitchToSecondary
        } else {
            SwitchDecision::Stay
        }
    } else if sp == 0.0 || sp <= sq {
        SwitchDecision::ReturnToPrimary
    } else {
        SwitchDecision::Stay
    };
    let mut out = SwitchOutcome {
        state: *state,
        decision: SwitchDecision::Stay,
        suppressed: None,
        scores,
    };
    if wanted == SwitchDecision::Stay {
        return out;
    }
    if !dwell_gate(state.last_change_us, now_us, cfg) {
        out.suppressed = Some(wanted);
        return out;
    }
    out.decision = wanted;
    out.state.active = if wanted == SwitchDecision::SwitchToSecondary { q } else { p };
    out.state.last_change_us = Some(now_us);
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PdOutcome {
    pub state: ControllerState,
    pub duplicating: bool,
    pub changed: bool,
    /// The trigger disagreed with the current state but the dwell gate held.
    pub suppressed: bool,
    pub scores: PerOperator<f64>,
}

/// Whether the partial-duplication trigger holds on the primary.
pub fn pd_condition(view: &KpiView, cfg: &PolicyConfig) -> bool {
    let e = excess_terms_lenient(view, cfg, cfg.primary);
    match &cfg.trigger {
        Trigger::Score => score_of(&e, cfg) > 0.0,
        Trigger::Condition(expr) => expr.eval(&|m| e.get(m) > 0.0),
    }
}

/// One partial-duplication evaluation.
pub fn pd_decide(state: &ControllerState, view: &KpiView, cfg: &PolicyConfig, now_us: u64) -> PdOutcome {
    let want = pd_condition(view, cfg);
    let scores = PerOperator::from_fn(|op| score_of(&excess_terms_lenient(view, cfg, op), cfg));
    let mut out = PdOutcome {
        state: *state,
        duplicating: state.duplicating,
        changed: false,
        suppressed: false,
        scores,
    };
    if want == state.duplicating {
        return out;
    }
    if !dwell_gate(state.last_change_us, now_us, cfg) {
        out.suppressed = true;
        return out;
    }
    out.state.duplicating = want;
    out.state.last_change_us = Some(now_us);
    out.duplicating = want;
    out.changed = true;
    out
}
