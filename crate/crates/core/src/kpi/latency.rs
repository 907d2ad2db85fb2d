use serde::{Deserialize, Serialize};

use super::{KpiError, LATE_LOSS_MS, LOSS_SENTINEL_MS};
use crate::trace::PacketRecord;

/// Percentiles reported for every latency series, in per-mille.
pub const PERCENTILES_PERMILLE: [u32; 5] = [500, 900, 950, 990, 999];

/// One-way latency in milliseconds; undelivered packets (or packets that
/// arrived after the 10 s timeout) get the loss sentinel.
pub fn effective_latency(p: &PacketRecord) -> f64 {
    match p.rx_us {
        Some(rx) => {
            let lat = rx.saturating_sub(p.tx_us) as f64 / 1000.0;
            lat.min(LOSS_SENTINEL_MS)
        }
        None => LOSS_SENTINEL_MS,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossClass {
    Ok,
    LateLoss,
    TrueLoss,
}

pub fn classify_loss(latency_ms: f64) -> Result<LossClass, KpiError> {
    if latency_ms.is_nan() || latency_ms < 0.0 {
        return Err(KpiError::InvalidLatency(latency_ms));
    }
    if latency_ms > LOSS_SENTINEL_MS {
        return Err(KpiError::AboveSentinel(latency_ms));
    }
    Ok(if latency_ms < LATE_LOSS_MS {
        LossClass::Ok
    } else if latency_ms < LOSS_SENTINEL_MS {
        LossClass::LateLoss
    } else {
        LossClass::TrueLoss
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub delivered_ok_ratio: f64,
    pub late_loss_ratio: f64,
    pub true_loss_ratio: f64,
    pub ok: u64,
    pub late: u64,
    pub lost: u64,
}

impl LossReport {
    pub fn from_latencies<'a>(latencies: impl IntoIterator<Item = &'a f64>) -> Result<Self, KpiError> {
        let (mut ok, mut late, mut lost) = (0u64, 0u64, 0u64);
        for &l in latencies {
            match classify_loss(l)? {
                LossClass::Ok => ok += 1,
                LossClass::LateLoss => late += 1,
                LossClass::TrueLoss => lost += 1,
            }
        }
        let total = ok + late + lost;
        if total == 0 {
            return Err(KpiError::Empty);
        }
        let n = total as f64;
        Ok(Self {
            delivered_ok_ratio: ok as f64 / n,
            late_loss_ratio: late as f64 / n,
            true_loss_ratio: lost as f64 / n,
            ok,
            late,
            lost,
        })
    }

    pub fn total(&self) -> u64 {
        self.ok + self.late + self.lost
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatencyStats {
    pub p50: f64,
    pub p90: f64,
    pub p95: f64,
    pub p99: f64,
    pub p999: f64,
    pub sample_count: usize,
}

/// Nearest-rank percentile: the ceil(q*N)-th order statistic of `sorted`.
///
/// The rank is computed in integer per-mille arithmetic so that ladders such
/// as N=10, q=0.9 land exactly on rank 9.
pub fn percentile_nearest_rank(sorted: &[f64], permille: u32) -> f64 {
    debug_assert!(!sorted.is_empty() && permille <= 1000);
    let n = sorted.len() as u64;
    let rank = (u64::from(permille) * n).div_ceil(1000).clamp(1, n);
    sorted[(rank - 1) as usize]
}

pub fn latency_percentiles(latencies: &[f64]) -> Result<LatencyStats, KpiError> {
    if latencies.is_empty() {
        return Err(KpiError::Empty);
    }
    if let Some(&bad) = latencies.iter().find(|l| l.is_nan() || **l < 0.0) {
        return Err(KpiError::InvalidLatency(bad));
    }
    let mut sorted = latencies.to_vec();
    sorted.sort_unstable_by(f64::total_cmp);
    let [p50, p90, p95, p99, p999] = PERCENTILES_PERMILLE.map(|q| percentile_nearest_rank(&sorted, q));
    Ok(LatencyStats {
        p50,
        p90,
        p95,
        p99,
        p999,
        sample_count: sorted.len(),
    })
}

/// Fraction of latencies at or below `limit_ms`.
pub fn fraction_within(latencies: &[f64], limit_ms: f64) -> f64 {
    if latencies.is_empty() {
        return 0.0;
    }
    latencies.iter().filter(|&&l| l <= limit_ms).count() as f64 / latencies.len() as f64
}
