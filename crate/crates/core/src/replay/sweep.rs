use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::strategies::{replay_pd, replay_switching};
use super::{ReplayError, ReplayOutcome, Timeline, TimingConfig};
use crate::policy::{Mode, PolicyConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParam {
    ThetaR,
    ThetaU,
}

impl std::str::FromStr for SweepParam {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "theta_r" => Ok(SweepParam::ThetaR),
            "theta_u" => Ok(SweepParam::ThetaU),
            other => Err(format!("unknown sweep parameter '{other}' (expected theta_r or theta_u)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub value: f64,
    pub overhead_pct: f64,
    pub p95: f64,
    pub p99: f64,
}

fn replay(tl: &Timeline, cfg: &PolicyConfig, timing: &TimingConfig) -> Result<ReplayOutcome, ReplayError> {
    match cfg.mode {
        Mode::PartialDuplication => replay_pd(tl, cfg, timing),
        Mode::Switching => replay_switching(tl, cfg, timing),
    }
}

/// Replays `base` once per grid value of the chosen threshold. Grid points
/// run in parallel; rows come back in grid order.
pub fn sensitivity_sweep(
    tl: &Timeline,
    base: &PolicyConfig,
    param: SweepParam,
    grid: &[f64],
    timing: &TimingConfig,
) -> Result<Vec<SweepRow>, ReplayError> {
    if grid.is_empty() {
        return Err(ReplayError::EmptyGrid);
    }
    grid.par_iter()
        .map(|&value| {
            let mut cfg = base.clone();
            match param {
                SweepParam::ThetaR => cfg.theta_r_dbm = value,
                SweepParam::ThetaU => cfg.theta_u_dbm = value,
            }
            let o = replay(tl, &cfg, timing)?;
            Ok(SweepRow {
                value,
                overhead_pct: o.overhead_pct,
                p95: o.stats.p95,
                p99: o.stats.p99,
            })
        })
        .collect()
}
