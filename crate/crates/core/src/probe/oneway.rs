use std::collections::HashMap;

use crate::trace::{Operator, PacketRecord};

const TIMEOUT_US: i64 = 10_000_000;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct OnewayResult {
    /// One record per sent packet, in the order of the tx log.
    pub packets: Vec<PacketRecord>,
    /// Receptions of an already received (operator, seq).
    pub duplicates: u64,
    /// Receptions with no matching transmission.
    pub unmatched_rx: u64,
    /// Receptions that appeared to precede their transmission after the
    /// offset correction; their latency is clamped to zero.
    pub negative_clamped: u64,
}

/// Joins sender and receiver logs on (operator, seq).
///
/// `clock_offset_us` is the receiver clock minus the sender clock and is
/// subtracted from every receive time. Packets without a reception inside
/// the 10 s timeout are marked lost.
pub fn compute_oneway(tx_log: &[PacketRecord], rx_log: &[PacketRecord], clock_offset_us: i64) -> OnewayResult {
    let mut result = OnewayResult::default();
    let mut first: HashMap<(Operator, u64), u64> = HashMap::with_capacity(rx_log.len());
    for r in rx_log {
        let Some(rx) = r.rx_us else { continue };
        match first.entry((r.operator, r.seq)) {
            std::collections::hash_map::Entry::Vacant(v) => {
                v.insert(rx);
            }
            std::collections::hash_map::Entry::Occupied(mut o) => {
                result.duplicates += 1;
                if rx < *o.get() {
                    o.insert(rx);
                }
            }
        }
    }
    let mut matched = 0usize;
    for t in tx_log {
        let mut rec = t.clone();
        rec.rx_us = None;
        if let Some(&rx) = first.get(&(t.operator, t.seq)) {
            matched += 1;
            let corrected = rx as i64 - clock_offset_us;
            let mut lat = corrected - t.tx_us as i64;
            if lat < 0 {
                result.negative_clamped += 1;
                lat = 0;
            }
            if lat < TIMEOUT_US {
                rec.rx_us = Some(t.tx_us + lat as u64);
            }
        }
        result.packets.push(rec);
    }
    result.unmatched_rx = (first.len() - matched.min(first.len())) as u64;
    result
}
