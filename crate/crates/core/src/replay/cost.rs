use serde::{Deserialize, Serialize};

use super::ReplayOutcome;

/// Secondary-link weights reported in outcome tables.
pub const COST_WEIGHTS: [f64; 4] = [1.2, 1.5, 2.0, 3.0];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostModel {
    /// Price of a secondary-link packet relative to a primary one.
    pub secondary_weight: f64,
}

/// Traffic cost relative to sending every packet once over the primary.
pub fn normalized_cost(outcome: &ReplayOutcome, model: &CostModel) -> f64 {
    let n = outcome.baseline_packets as f64;
    let p = outcome.carried[outcome.primary] as f64;
    let q = outcome.carried[outcome.primary.other()] as f64;
    p / n + model.secondary_weight * (q / n)
}

/// Indices of the points not dominated in (higher reliability, lower
/// overhead). Equal points do not dominate each other.
pub fn pareto_front(points: &[(f64, f64)]) -> Vec<usize> {
    let dominated = |i: usize| {
        let (ri, oi) = points[i];
        points
            .iter()
            .any(|&(r, o)| r >= ri && o <= oi && (r > ri || o < oi))
    };
    (0..points.len()).filter(|&i| !dominated(i)).collect()
}

/// Non-dominated outcomes by reliability at the latency target and overhead.
pub fn pareto_points(outcomes: &[ReplayOutcome]) -> Vec<&ReplayOutcome> {
    let pts: Vec<(f64, f64)> = outcomes.iter().map(|o| (o.reliability(), o.overhead_pct)).collect();
    pareto_front(&pts).into_iter().map(|i| &outcomes[i]).collect()
}
