//! Primary-anchored failover decisions.
//!
//! Each operator's observed RSRP, UL transmit power and UL latency are turned
//! into threshold excess terms and a weighted risk score. Switching policies
//! move traffic to the secondary operator only when its score is strictly
//! lower; partial duplication mirrors traffic onto the secondary while a
//! trigger expression over the primary's excess terms holds. Every state
//! change is gated by a dwell time.

mod decide;
mod expr;
mod presets;

pub use decide::{
    dwell_gate, excess_terms, excess_terms_lenient, joint_score, pd_condition, pd_decide, score_of,
    switching_decide, ControllerState, Excess, KpiView, LinkKpis, Observed, PdOutcome,
    SwitchDecision, SwitchOutcome,
};
pub use expr::TriggerExpr;
pub use presets::{pd_presets, switching_presets};

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::trace::Operator;

#[derive(Debug, thiserror::Error)]
pub enum PolicyError {
    #[error("trigger expression, position {position}: {message}")]
    Parse { position: usize, message: String },
    #[error("invalid policy {field}: {message}")]
    Invalid { field: &'static str, message: String },
    #[error("no {metric} observation for operator {operator}")]
    MissingKpi { operator: Operator, metric: Metric },
}

fn invalid(field: &'static str, message: impl Into<String>) -> PolicyError {
    PolicyError::Invalid {
        field,
        message: message.into(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Metric {
    #[serde(rename = "RSRP")]
    Rsrp,
    #[serde(rename = "ULTX")]
    UlTx,
    #[serde(rename = "LAT")]
    Lat,
}

impl Metric {
    pub const ALL: [Metric; 3] = [Metric::Rsrp, Metric::UlTx, Metric::Lat];

    pub fn as_str(self) -> &'static str {
        match self {
            Metric::Rsrp => "RSRP",
            Metric::UlTx => "ULTX",
            Metric::Lat => "LAT",
        }
    }

    /// Name used in result tables.
    pub fn label(self) -> &'static str {
        match self {
            Metric::Rsrp => "RSRP",
            Metric::UlTx => "UL Tx Pwr",
            Metric::Lat => "Latency",
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Metric {
    type Err = PolicyError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_uppercase().as_str() {
            "RSRP" => Ok(Metric::Rsrp),
            "ULTX" | "UL_TX" | "UL_TX_PWR" => Ok(Metric::UlTx),
            "LAT" | "LATENCY" => Ok(Metric::Lat),
            other => Err(invalid("metric", format!("unknown metric '{other}'"))),
        }
    }
}

/// Subset of [`Metric`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct MetricSet(u8);

impl MetricSet {
    pub const EMPTY: MetricSet = MetricSet(0);
    pub const ALL: MetricSet = MetricSet(0b111);

    fn bit(m: Metric) -> u8 {
        1 << m as u8
    }

    pub fn contains(self, m: Metric) -> bool {
        self.0 & Self::bit(m) != 0
    }

    pub fn with(self, m: Metric) -> Self {
        MetricSet(self.0 | Self::bit(m))
    }

    pub fn union(self, other: MetricSet) -> Self {
        MetricSet(self.0 | other.0)
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    /// Members in canonical order RSRP, ULTX, LAT.
    pub fn iter(self) -> impl Iterator<Item = Metric> {
        Metric::ALL.into_iter().filter(move |m| self.contains(*m))
    }

    /// Table label such as `RSRP + UL Tx Pwr`.
    pub fn label(self) -> String {
        self.iter().map(Metric::label).collect::<Vec<_>>().join(" + ")
    }
}

impl FromIterator<Metric> for MetricSet {
    fn from_iter<I: IntoIterator<Item = Metric>>(iter: I) -> Self {
        iter.into_iter().fold(MetricSet::EMPTY, MetricSet::with)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Switching,
    PartialDuplication,
}

/// How the selected metrics are combined into a decision.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Trigger {
    /// Weighted joint score.
    Score,
    /// Boolean expression over "metric exceeds its threshold" on the primary.
    Condition(TriggerExpr),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PolicyFile", into = "PolicyFile")]
pub struct PolicyConfig {
    pub name: String,
    pub mode: Mode,
    pub primary: Operator,
    pub metrics: MetricSet,
    pub trigger: Trigger,
    pub theta_r_dbm: f64,
    pub theta_u_dbm: f64,
    pub theta_l_ms: f64,
    pub sigma_r_db: f64,
    pub sigma_u_db: f64,
    pub sigma_l_ms: f64,
    pub w_r: f64,
    pub w_u: f64,
    pub w_l: f64,
    pub dwell_ms: f64,
}

pub const DWELL_WITH_LATENCY_MS: f64 = 100.0;
pub const DWELL_WITHOUT_LATENCY_MS: f64 = 1000.0;

pub fn default_dwell_ms(metrics: MetricSet) -> f64 {
    if metrics.contains(Metric::Lat) {
        DWELL_WITH_LATENCY_MS
    } else {
        DWELL_WITHOUT_LATENCY_MS
    }
}

impl PolicyConfig {
    /// Switching over the joint score of `metrics`, default thresholds.
    pub fn switching(metrics: MetricSet, primary: Operator) -> Self {
        Self {
            name: format!("{} - PAAF Switching", metrics.label()),
            mode: Mode::Switching,
            primary,
            metrics,
            trigger: Trigger::Score,
            theta_r_dbm: -100.0,
            theta_u_dbm: 21.0,
            theta_l_ms: 150.0,
            sigma_r_db: 5.0,
            sigma_u_db: 2.0,
            sigma_l_ms: 100.0,
            w_r: 0.8,
            w_u: 0.7,
            w_l: 1.0,
            dwell_ms: default_dwell_ms(metrics),
        }
    }

    /// Partial duplication triggered by `expr` on the primary.
    pub fn partial_duplication(expr: TriggerExpr, primary: Operator) -> Self {
        let metrics = expr.metrics();
        Self {
            name: format!("{} - PAAF PD", pd_label(&expr)),
            mode: Mode::PartialDuplication,
            trigger: Trigger::Condition(expr),
            ..Self::switching(metrics, primary)
        }
    }

    /// Weight of `m`, zero for metrics outside the selected set.
    pub fn weight(&self, m: Metric) -> f64 {
        if !self.metrics.contains(m) {
            return 0.0;
        }
        match m {
            Metric::Rsrp => self.w_r,
            Metric::UlTx => self.w_u,
            Metric::Lat => self.w_l,
        }
    }

    pub fn dwell_us(&self) -> u64 {
        (self.dwell_ms * 1000.0).round() as u64
    }

    pub fn validate(&self) -> Result<(), PolicyError> {
        for (field, v) in [
            ("sigma_r", self.sigma_r_db),
            ("sigma_u", self.sigma_u_db),
            ("sigma_l", self.sigma_l_ms),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(invalid(field, format!("must be positive, got {v}")));
            }
        }
        for (field, v) in [("w_r", self.w_r), ("w_u", self.w_u), ("w_l", self.w_l)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(invalid(field, format!("must be non-negative, got {v}")));
            }
        }
        for (field, v) in [
            ("theta_r", self.theta_r_dbm),
            ("theta_u", self.theta_u_dbm),
            ("theta_l", self.theta_l_ms),
        ] {
            if v.is_nan() {
                return Err(invalid(field, "must be a number"));
            }
        }
        if !(self.dwell_ms > 0.0 && self.dwell_ms.is_finite()) {
            return Err(invalid("dwell_ms", format!("must be positive, got {}", self.dwell_ms)));
        }
        match (&self.trigger, self.mode) {
            (Trigger::Score, _) if self.metrics.is_empty() => {
                Err(invalid("metric_set", "must not be empty"))
            }
            (Trigger::Condition(_), Mode::Switching) => Err(invalid(
                "combinator",
                "switching policies combine metrics by SCORE only",
            )),
            (Trigger::Condition(e), _) if e.metrics() != self.metrics => Err(invalid(
                "metric_set",
                "does not match the metrics used by the trigger expression",
            )),
            _ => Ok(()),
        }
    }
}

/// Table label; mixed AND/OR groups are always parenthesised.
fn pd_label(expr: &TriggerExpr) -> String {
    fn go(e: &TriggerExpr, parent: Option<bool>) -> String {
        match e {
            TriggerExpr::Metric(m) => m.label().to_string(),
            TriggerExpr::Const(c) => if *c { "TRUE" } else { "FALSE" }.to_string(),
            TriggerExpr::And(a, b) | TriggerExpr::Or(a, b) => {
                let is_and = matches!(e, TriggerExpr::And(..));
                let op = if is_and { "AND" } else { "OR" };
                let inner = format!("{} {op} {}", go(a, Some(is_and)), go(b, Some(is_and)));
                match parent {
                    Some(p) if p != is_and => format!("({inner})"),
                    _ => inner,
                }
            }
        }
    }
    go(expr, None)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Combinator {
    And,
    Or,
    Score,
}

/// On-disk form of [`PolicyConfig`].
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PolicyFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    name: Option<String>,
    mode: Mode,
    #[serde(default = "default_primary")]
    primary: Operator,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    metric_set: Option<Vec<Metric>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    combinator: Option<Combinator>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    expr: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    theta_r: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    theta_u: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    theta_l: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    sigma_r: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    sigma_u: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    sigma_l: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    w_r: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    w_u: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    w_l: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    dwell_ms: Option<f64>,
}

fn default_primary() -> Operator {
    Operator::A
}

impl TryFrom<PolicyFile> for PolicyConfig {
    type Error = PolicyError;

    fn try_from(f: PolicyFile) -> Result<Self, PolicyError> {
        let listed: Option<MetricSet> = f.metric_set.as_ref().map(|v| v.iter().copied().collect());
        let expr = match (&f.expr, f.combinator, listed) {
            (Some(_), Some(_), _) => {
                return Err(invalid("expr", "give either expr or combinator, not both"))
            }
            (Some(src), None, _) => Some(TriggerExpr::parse(src)?),
            (None, Some(Combinator::And), Some(set)) => Some(TriggerExpr::all_of(set)),
            (None, Some(Combinator::Or), Some(set)) => Some(TriggerExpr::any_of(set)),
            (None, Some(Combinator::And | Combinator::Or), None) => {
                return Err(invalid("metric_set", "required with AND/OR combinators"))
            }
            (None, Some(Combinator::Score) | None, Some(_)) => None,
            (None, Some(Combinator::Score) | None, None) => {
                return Err(invalid("metric_set", "missing"))
            }
        };
        let metrics = match (&expr, listed) {
            (Some(e), Some(set)) if e.metrics() != set => {
                return Err(invalid(
                    "metric_set",
                    format!("lists {} but the expression uses {}", set.label(), e.metrics().label()),
                ))
            }
            (Some(e), _) => e.metrics(),
            (None, Some(set)) => set,
            (None, None) => unreachable!("checked above"),
        };
        let mut cfg = match (f.mode, expr) {
            (Mode::PartialDuplication, Some(e)) => PolicyConfig::partial_duplication(e, f.primary),
            (Mode::PartialDuplication, None) => PolicyConfig {
                name: format!("{} SCORE - PAAF PD", metrics.label()),
                mode: Mode::PartialDuplication,
                ..PolicyConfig::switching(metrics, f.primary)
            },
            (Mode::Switching, None) => PolicyConfig::switching(metrics, f.primary),
            (Mode::Switching, Some(e)) => PolicyConfig {
                trigger: Trigger::Condition(e),
                ..PolicyConfig::switching(metrics, f.primary)
            },
        };
        if let Some(n) = f.name {
            cfg.name = n;
        }
        let set = |slot: &mut f64, v: Option<f64>| {
            if let Some(v) = v {
                *slot = v;
            }
        };
        set(&mut cfg.theta_r_dbm, f.theta_r);
        set(&mut cfg.theta_u_dbm, f.theta_u);
        set(&mut cfg.theta_l_ms, f.theta_l);
        set(&mut cfg.sigma_r_db, f.sigma_r);
        set(&mut cfg.sigma_u_db, f.sigma_u);
        set(&mut cfg.sigma_l_ms, f.sigma_l);
        set(&mut cfg.w_r, f.w_r);
        set(&mut cfg.w_u, f.w_u);
        set(&mut cfg.w_l, f.w_l);
        set(&mut cfg.dwell_ms, f.dwell_ms);
        cfg.validate()?;
        Ok(cfg)
    }
}

impl From<PolicyConfig> for PolicyFile {
    fn from(c: PolicyConfig) -> Self {
        let (combinator, expr) = match &c.trigger {
            Trigger::Score => (Some(Combinator::Score), None),
            Trigger::Condition(e) => (None, Some(e.to_string())),
        };
        PolicyFile {
            name: Some(c.name),
            mode: c.mode,
            primary: c.primary,
            metric_set: Some(c.metrics.iter().collect()),
            combinator,
            expr,
            theta_r: Some(c.theta_r_dbm),
            theta_u: Some(c.theta_u_dbm),
            theta_l: Some(c.theta_l_ms),
            sigma_r: Some(c.sigma_r_db),
            sigma_u: Some(c.sigma_u_db),
            sigma_l: Some(c.sigma_l_ms),
            w_r: Some(c.w_r),
            w_u: Some(c.w_u),
            w_l: Some(c.w_l),
            dwell_ms: Some(c.dwell_ms),
        }
    }
}

/// Parses one policy object or a JSON array of them.
pub fn parse_policies(json: &str) -> Result<Vec<PolicyConfig>, serde_json::Error> {
    let value: serde_json::Value = serde_json::from_str(json)?;
    if value.is_array() {
        serde_json::from_value(value)
    } else {
        serde_json::from_value(value).map(|c| vec![c])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_and_dwell() {
        let c: PolicyConfig =
            serde_json::from_str(r#"{"mode": "switching", "metric_set": ["RSRP", "ULTX"]}"#).unwrap();
        assert_eq!(c.dwell_ms, 1000.0);
        assert_eq!(c.primary, Operator::A);
        assert_eq!(c.name, "RSRP + UL Tx Pwr - PAAF Switching");
        assert_eq!(c.weight(Metric::Lat), 0.0);
        assert_eq!(c.weight(Metric::UlTx), 0.7);
        let l: PolicyConfig =
            serde_json::from_str(r#"{"mode": "switching", "metric_set": ["LAT"], "primary": "B"}"#).unwrap();
        assert_eq!(l.dwell_ms, 100.0);
        assert_eq!(l.primary, Operator::B);
    }

    #[test]
    fn pd_from_combinator_and_expr() {
        let c: PolicyConfig = serde_json::from_str(
            r#"{"mode": "partial_duplication", "metric_set": ["RSRP", "LAT"], "combinator": "OR"}"#,
        )
        .unwrap();
        assert_eq!(c.trigger, Trigger::Condition(TriggerExpr::parse("RSRP OR LAT").unwrap()));
        assert_eq!(c.name, "RSRP OR Latency - PAAF PD");
        let e: PolicyConfig = serde_json::from_str(
            r#"{"mode": "partial_duplication", "expr": "(RSRP AND ULTX) OR LAT"}"#,
        )
        .unwrap();
        assert_eq!(e.name, "(RSRP AND UL Tx Pwr) OR Latency - PAAF PD");
        assert_eq!(e.dwell_ms, 100.0);
    }

    #[test]
    fn json_round_trip() {
        for c in switching_presets(Operator::B).into_iter().chain(pd_presets(Operator::A)) {
            let s = serde_json::to_string(&c).unwrap();
            let back: PolicyConfig = serde_json::from_str(&s).unwrap();
            assert_eq!(back, c);
        }
    }

    #[test]
    fn rejects_invalid() {
        for bad in [
            r#"{"mode": "switching", "metric_set": []}"#,
            r#"{"mode": "switching", "metric_set": ["RSRP"], "sigma_r": 0}"#,
            r#"{"mode": "switching", "metric_set": ["RSRP"], "dwell_ms": 0}"#,
            r#"{"mode": "switching", "metric_set": ["RSRP", "LAT"], "combinator": "AND"}"#,
            r#"{"mode": "partial_duplication", "metric_set": ["RSRP"], "expr": "LAT"}"#,
            r#"{"mode": "partial_duplication", "expr": "RSRP AND"}"#,
            r#"{"mode": "switching", "metric_set": ["RSRP"], "bogus": 1}"#,
        ] {
            assert!(serde_json::from_str::<PolicyConfig>(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn parse_one_or_many() {
        assert_eq!(parse_policies(r#"{"mode": "switching", "metric_set": ["LAT"]}"#).unwrap().len(), 1);
        let many = parse_policies(
            r#"[{"mode": "switching", "metric_set": ["LAT"]}, {"mode": "partial_duplication", "expr": "TRUE"}]"#,
        )
        .unwrap();
        assert_eq!(many.len(), 2);
        assert!(many[1].metrics.is_empty());
        let err = parse_policies(r#"{"mode": "switching", "metric_set": ["LAT"], "sigma_l": -1}"#).unwrap_err();
        assert!(err.to_string().contains("sigma_l"), "{err}");
    }
}
