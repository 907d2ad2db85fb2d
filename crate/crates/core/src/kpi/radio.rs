//! Radio-side KPIs: handover rate, rank correlation, the UL power regression
//! and the Shannon rate/SINR bound.

use serde::{Deserialize, Serialize};

use super::KpiError;
use crate::trace::{RadioSample, ScenarioMeta};

/// Samples at or above this UL transmit power are treated as saturated and
/// left out of the power regression.
pub const SATURATION_THRESHOLD_DBM: f64 = 22.5;

/// Cell-id changes per kilometre per minute.
pub fn handover_rate(samples: &[RadioSample], meta: &ScenarioMeta) -> Result<f64, KpiError> {
    if !(meta.duration_s > 0.0) {
        return Err(KpiError::NonPositive {
            name: "duration",
            value: meta.duration_s,
        });
    }
    if !(meta.distance_km > 0.0) {
        return Err(KpiError::NonPositive {
            name: "distance",
            value: meta.distance_km,
        });
    }
    let changes = samples
        .windows(2)
        .filter(|w| w[0].cell_id != w[1].cell_id)
        .count();
    Ok(changes as f64 / (meta.distance_km * meta.duration_s / 60.0))
}

/// 1-based ranks with ties sharing the mean of the positions they span.
fn mid_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&i, &j| values[i].total_cmp(&values[j]));
    let mut ranks = vec![0.0; values.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && values[order[end]] == values[order[start]] {
            end += 1;
        }
        let rank = (start + 1 + end) as f64 / 2.0;
        for &idx in &order[start..end] {
            ranks[idx] = rank;
        }
        start = end;
    }
    ranks
}

fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// Spearman's rho: Pearson correlation of mid-ranks.
pub fn spearman_rho(x: &[f64], y: &[f64]) -> Result<f64, KpiError> {
    if x.len() != y.len() {
        return Err(KpiError::LengthMismatch(x.len(), y.len()));
    }
    if x.len() < 3 {
        return Err(KpiError::TooFewSamples {
            needed: 3,
            got: x.len(),
        });
    }
    if let Some(&bad) = x.iter().chain(y).find(|v| v.is_nan()) {
        return Err(KpiError::InvalidLatency(bad));
    }
    pearson(&mid_ranks(x), &mid_ranks(y)).ok_or(KpiError::ConstantSequence)
}

/// Linear model `ul_tx_pwr = slope * rsrp + intercept`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegressionFit {
    pub slope: f64,
    pub intercept: f64,
    pub sample_count: usize,
    pub excluded_saturated: usize,
}

impl RegressionFit {
    /// A fit given directly by its coefficients.
    pub fn line(slope: f64, intercept: f64) -> Self {
        Self {
            slope,
            intercept,
            sample_count: 0,
            excluded_saturated: 0,
        }
    }

    pub fn predict(&self, rsrp_dbm: f64) -> f64 {
        self.slope * rsrp_dbm + self.intercept
    }
}

/// Ordinary least squares of UL power on RSRP over non-saturated samples.
pub fn fit_power_regression(samples: &[RadioSample]) -> Result<RegressionFit, KpiError> {
    let (kept, saturated): (Vec<&RadioSample>, Vec<&RadioSample>) = samples
        .iter()
        .partition(|s| s.ul_tx_pwr_dbm < SATURATION_THRESHOLD_DBM);
    if kept.len() < 2 {
        return Err(KpiError::TooFewSamples {
            needed: 2,
            got: kept.len(),
        });
    }
    let n = kept.len() as f64;
    let mx = kept.iter().map(|s| s.rsrp_dbm).sum::<f64>() / n;
    let my = kept.iter().map(|s| s.ul_tx_pwr_dbm).sum::<f64>() / n;
    let (mut sxx, mut sxy) = (0.0, 0.0);
    for s in &kept {
        let dx = s.rsrp_dbm - mx;
        sxx += dx * dx;
        sxy += dx * (s.ul_tx_pwr_dbm - my);
    }
    if sxx == 0.0 {
        return Err(KpiError::DegenerateRegression);
    }
    let slope = sxy / sxx;
    Ok(RegressionFit {
        slope,
        intercept: my - slope * mx,
        sample_count: kept.len(),
        excluded_saturated: saturated.len(),
    })
}

/// Transmit-power gap between two regression lines at a given RSRP.
pub fn regression_gap(fit_hi: &RegressionFit, fit_lo: &RegressionFit, rsrp_dbm: f64) -> f64 {
    fit_hi.predict(rsrp_dbm) - fit_lo.predict(rsrp_dbm)
}

/// Minimum SINR difference (dB) between carrying `r1_bps` and `r2_bps` over
/// a channel of `bw_hz`, from the Shannon capacity bound.
///
/// Computed as a difference of logarithms so that swapping the rates negates
/// the result exactly; `expm1` keeps precision when the rates are far below
/// the bandwidth.
pub fn delta_sinr_bound(r1_bps: f64, r2_bps: f64, bw_hz: f64) -> Result<f64, KpiError> {
    for (name, value) in [("r1", r1_bps), ("r2", r2_bps), ("bandwidth", bw_hz)] {
        if !(value > 0.0 && value.is_finite()) {
            return Err(KpiError::NonPositive { name, value });
        }
    }
    let required = |r: f64| (r / bw_hz * std::f64::consts::LN_2).exp_m1();
    Ok(10.0 * (required(r1_bps).log10() - required(r2_bps).log10()))
}
