//! Per-bin and per-stream KPI tables.

use std::collections::BTreeMap;
use std::io::Write;

use serde::Serialize;

use super::{effective_latency, latency_percentiles, KpiError, LossReport};
use crate::trace::{radio_at, Direction, DualTrace, Operator};

/// UL latencies whose transmit-time RSRP fell into `[lower_dbm, upper_dbm)`.
#[derive(Debug, Clone, PartialEq)]
pub struct RsrpBin {
    pub lower_dbm: f64,
    pub upper_dbm: f64,
    pub latencies_ms: Vec<f64>,
    pub loss: LossReport,
    /// Share of the operator's UL packets that fell into this bin.
    pub occupancy: f64,
}

/// Groups the UL packets of `operator` by the RSRP in effect at transmission.
///
/// Bin edges are integer multiples of `bin_width_db`. Bins are returned in
/// ascending RSRP order; empty bins are omitted.
pub fn binned_latency_by_rsrp(
    trace: &DualTrace,
    operator: Operator,
    bin_width_db: f64,
) -> Result<Vec<RsrpBin>, KpiError> {
    if !(bin_width_db > 0.0 && bin_width_db.is_finite()) {
        return Err(KpiError::NonPositive {
            name: "bin width",
            value: bin_width_db,
        });
    }
    let mut bins: BTreeMap<i64, Vec<f64>> = BTreeMap::new();
    let mut total = 0usize;
    for p in trace.uplink(operator) {
        let rsrp = radio_at(trace, operator, p.tx_us)?.sample.rsrp_dbm;
        let k = (rsrp / bin_width_db).floor() as i64;
        bins.entry(k).or_default().push(effective_latency(p));
        total += 1;
    }
    if total == 0 {
        return Err(KpiError::Empty);
    }
    bins.into_iter()
        .map(|(k, latencies_ms)| {
            Ok(RsrpBin {
                lower_dbm: k as f64 * bin_width_db,
                upper_dbm: (k + 1) as f64 * bin_width_db,
                loss: LossReport::from_latencies(&latencies_ms)?,
                occupancy: latencies_ms.len() as f64 / total as f64,
                latencies_ms,
            })
        })
        .collect()
}

/// Summary of one packet stream (operator and direction) of a run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KpiRow {
    pub run_id: String,
    pub operator: Operator,
    pub direction: Direction,
    pub sample_count: usize,
    pub p50: f64,
    pub p90: f64,
    pub p95: f64,
    pub p99: f64,
    pub p999: f64,
    pub delivered_ok_ratio: f64,
    pub late_loss_ratio: f64,
    pub true_loss_ratio: f64,
}

/// One row per non-empty (operator, direction) stream, UL before DL.
pub fn kpi_rows(trace: &DualTrace) -> Result<Vec<KpiRow>, KpiError> {
    let mut rows = Vec::new();
    for op in Operator::ALL {
        for dir in [Direction::Ul, Direction::Dl] {
            let lats: Vec<f64> = trace
                .packets
                .iter()
                .filter(|p| p.operator == op && p.direction == dir)
                .map(effective_latency)
                .collect();
            if lats.is_empty() {
                continue;
            }
            let stats = latency_percentiles(&lats)?;
            let loss = LossReport::from_latencies(&lats)?;
            rows.push(KpiRow {
                run_id: trace.run_id.clone(),
                operator: op,
                direction: dir,
                sample_count: stats.sample_count,
                p50: stats.p50,
                p90: stats.p90,
                p95: stats.p95,
                p99: stats.p99,
                p999: stats.p999,
                delivered_ok_ratio: loss.delivered_ok_ratio,
                late_loss_ratio: loss.late_loss_ratio,
                true_loss_ratio: loss.true_loss_ratio,
            });
        }
    }
    if rows.is_empty() {
        return Err(KpiError::Empty);
    }
    Ok(rows)
}

pub fn write_kpi_csv<W: Write>(writer: W, rows: &[KpiRow]) -> Result<(), KpiError> {
    let mut w = csv::Writer::from_writer(writer);
    for row in rows {
        w.serialize(row)?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trace::{PacketRecord, PerOperator, RadioSample, Scenario, ScenarioMeta};

    fn trace(radio: Vec<(u64, f64)>, packets: Vec<(u64, Option<u64>)>) -> DualTrace {
        let radio_a = radio
            .into_iter()
            .map(|(t_s, rsrp)| RadioSample {
                operator: Operator::A,
                t_s,
                rsrp_dbm: rsrp,
                ul_tx_pwr_dbm: 0.0,
                cell_id: "1".into(),
                position: None,
            })
            .collect();
        let packets = packets
            .into_iter()
            .enumerate()
            .map(|(i, (tx, rx))| PacketRecord {
                seq: i as u64,
                operator: Operator::A,
                direction: Direction::Ul,
                tx_us: tx,
                rx_us: rx,
                payload_len: 1436,
            })
            .collect();
        DualTrace {
            run_id: "r".into(),
            target_rate_bps: 1e6,
            packets,
            radio: PerOperator::new(radio_a, vec![]),
            meta: ScenarioMeta {
                scenario: Scenario::Synthetic,
                duration_s: 10.0,
                distance_km: 0.0,
                notes: String::new(),
            },
        }
    }

    #[test]
    fn single_rsrp_single_bin() {
        let tr = trace(vec![(0, -90.0)], vec![(0, Some(30_000)), (500_000, None)]);
        let bins = binned_latency_by_rsrp(&tr, Operator::A, 5.0).unwrap();
        assert_eq!(bins.len(), 1);
        assert_eq!(bins[0].occupancy, 1.0);
        assert_eq!((bins[0].lower_dbm, bins[0].upper_dbm), (-90.0, -85.0));
        assert_eq!(bins[0].loss.true_loss_ratio, 0.5);
    }

    #[test]
    fn adjacent_values_split_on_edge() {
        let tr = trace(
            vec![(0, -99.0), (1, -101.0)],
            vec![(100, Some(200)), (1_000_100, Some(1_000_200))],
        );
        let bins = binned_latency_by_rsrp(&tr, Operator::A, 5.0).unwrap();
        assert_eq!(bins.len(), 2);
        assert_eq!(bins[0].lower_dbm, -105.0);
        assert_eq!(bins[1].lower_dbm, -100.0);
    }

    #[test]
    fn step_shows_in_late_loss() {
        let mut radio = Vec::new();
        let mut packets = Vec::new();
        for s in 0..40u64 {
            let rsrp = -80.0 - s as f64;
            radio.push((s, rsrp));
            let lat = if rsrp < -101.0 { 900_000 } else { 40_000 };
            let tx = s * 1_000_000 + 10;
            packets.push((tx, Some(tx + lat)));
        }
        let bins = binned_latency_by_rsrp(&trace(radio, packets), Operator::A, 5.0).unwrap();
        let low = bins.iter().find(|b| b.upper_dbm <= -105.0).unwrap();
        let high = bins.iter().find(|b| b.lower_dbm >= -95.0).unwrap();
        assert!(low.loss.late_loss_ratio > high.loss.late_loss_ratio);
        let occ: f64 = bins.iter().map(|b| b.occupancy).sum();
        assert!((occ - 1.0).abs() < 1e-12);
    }

    #[test]
    fn errors() {
        let tr = trace(vec![(0, -90.0)], vec![]);
        assert!(matches!(binned_latency_by_rsrp(&tr, Operator::A, 5.0), Err(KpiError::Empty)));
        assert!(binned_latency_by_rsrp(&tr, Operator::A, 0.0).is_err());
    }

    #[test]
    fn kpi_csv_has_header_and_rows() {
        let tr = trace(vec![(0, -90.0)], vec![(0, Some(30_000)), (500_000, Some(900_000))]);
        let rows = kpi_rows(&tr).unwrap();
        assert_eq!(rows.len(), 1);
        let mut buf = Vec::new();
        write_kpi_csv(&mut buf, &rows).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(
            lines.next().unwrap(),
            "run_id,operator,direction,sample_count,p50,p90,p95,p99,p999,delivered_ok_ratio,late_loss_ratio,true_loss_ratio"
        );
        assert!(lines.next().unwrap().starts_with("r,A,UL,2,30.0,400.0"));
    }
}
