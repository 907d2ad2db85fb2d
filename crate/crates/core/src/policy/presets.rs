use super::{Metric, MetricSet, PolicyConfig, TriggerExpr};
use crate::trace::Operator;

/// The seven single and combined switching policies, in table order.
pub fn switching_presets(primary: Operator) -> Vec<PolicyConfig> {
    use Metric::*;
    let sets: [&[Metric]; 7] = [
        &[Rsrp],
        &[UlTx],
        &[Lat],
        &[Rsrp, UlTx],
        &[Rsrp, Lat],
        &[UlTx, Lat],
        &[Rsrp, UlTx, Lat],
    ];
    sets.iter()
        .map(|s| PolicyConfig::switching(s.iter().copied().collect::<MetricSet>(), primary))
        .collect()
}

/// The seven partial-duplication triggers, in table order.
pub fn pd_presets(primary: Operator) -> Vec<PolicyConfig> {
    [
        "RSRP",
        "ULTX",
        "LAT",
        "RSRP AND ULTX",
        "RSRP OR LAT",
        "ULTX OR LAT",
        "(RSRP AND ULTX) OR LAT",
    ]
    .into_iter()
    .map(|src| {
        let expr = TriggerExpr::parse(src).expect("preset expressions are well formed");
        PolicyConfig::partial_duplication(expr, primary)
    })
    .collect()
}
