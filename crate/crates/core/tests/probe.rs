use std::net::SocketAddr;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::Duration;

use paaf_core::probe::{compute_oneway, run_sender, Clock, EchoServer, SenderConfig, SystemClock};
use paaf_core::trace::{Direction, Operator, PacketRecord};
use proptest::prelude::*;

fn loopback(rate_bps: f64, secs: u64, drop_every: Option<u64>) -> (Vec<PacketRecord>, Vec<PacketRecord>, Vec<PacketRecord>) {
    let clock: Arc<dyn Clock> = Arc::new(SystemClock);
    let server = EchoServer::bind(SocketAddr::from(([127, 0, 0, 1], 0)), Arc::clone(&clock)).unwrap();
    let addr = server.local_addr().unwrap();
    let stop = Arc::new(AtomicBool::new(false));
    let rx_log = Arc::new(Mutex::new(Vec::new()));
    let handle = {
        let stop = Arc::clone(&stop);
        let rx_log = Arc::clone(&rx_log);
        thread::spawn(move || {
            server
                .run(&stop, &mut |r| {
                    if drop_every.is_some_and(|k| r.seq % k == 0) {
                        return;
                    }
                    rx_log.lock().unwrap().push(r.clone());
                })
                .unwrap()
        })
    };
    let mut cfg = SenderConfig::new(rate_bps, addr, Operator::A, Duration::from_secs(secs));
    cfg.echo_grace = Duration::from_millis(300);
    let report = run_sender(&cfg, clock).unwrap();
    stop.store(true, Ordering::Relaxed);
    let stats = handle.join().unwrap();
    assert_eq!(stats.malformed, 0);
    let rx = rx_log.lock().unwrap().clone();
    (report.tx_log, rx, report.dl_log)
}

#[test]
fn loopback_latency_and_echo_seq() {
    let (tx, rx, dl) = loopback(1e6, 2, None);
    assert!((173..=175).contains(&tx.len()), "{}", tx.len());
    let joined = compute_oneway(&tx, &rx, 0);
    assert_eq!(joined.duplicates, 0);
    assert_eq!(joined.unmatched_rx, 0);
    for p in &joined.packets {
        let rx = p.rx_us.expect("no loopback loss");
        assert!(rx - p.tx_us < 5_000, "UL latency {} us", rx - p.tx_us);
    }
    let mut echoed: Vec<u64> = dl.iter().map(|r| r.seq).collect();
    echoed.sort_unstable();
    let sent: Vec<u64> = tx.iter().map(|r| r.seq).collect();
    assert_eq!(echoed, sent);
    assert!(dl.iter().all(|r| r.direction == Direction::Dl && r.operator == Operator::A));
}

#[test]
fn server_side_drop_shows_as_loss() {
    let (tx, rx, _) = loopback(1e6, 1, Some(10));
    let joined = compute_oneway(&tx, &rx, 0);
    for p in &joined.packets {
        assert_eq!(p.rx_us.is_none(), p.seq % 10 == 0, "seq {}", p.seq);
    }
}

fn nested_loop(tx: &[PacketRecord], rx: &[PacketRecord], offset: i64) -> Vec<Option<u64>> {
    tx.iter()
        .map(|t| {
            let mut best: Option<u64> = None;
            for r in rx {
                if r.operator == t.operator && r.seq == t.seq {
                    let v = r.rx_us.unwrap();
                    best = Some(best.map_or(v, |b| b.min(v)));
                }
            }
            best.and_then(|v| {
                let lat = (v as i64 - offset - t.tx_us as i64).max(0);
                (lat < 10_000_000).then_some(t.tx_us + lat as u64)
            })
        })
        .collect()
}

fn record(op: Operator, seq: u64, tx: u64, rx: Option<u64>) -> PacketRecord {
    PacketRecord {
        seq,
        operator: op,
        direction: Direction::Ul,
        tx_us: tx,
        rx_us: rx,
        payload_len: 1436,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn join_matches_nested_loop(
        lats in prop::collection::vec(prop::option::weighted(0.9, 0u64..12_000_000), 1000),
        dup_mask in prop::collection::vec(any::<bool>(), 1000),
        offset in -5_000i64..5_000,
        shuffle_seed in any::<u64>(),
    ) {
        let mut tx = Vec::new();
        let mut rx = Vec::new();
        for (i, lat) in lats.iter().enumerate() {
            let op = if i % 2 == 0 { Operator::A } else { Operator::B };
            let seq = (i / 2) as u64;
            let t = 10_000_000 + i as u64 * 2_872;
            tx.push(record(op, seq, t, None));
            if let Some(l) = lat {
                rx.push(record(op, seq, t, Some(t + l)));
                if dup_mask[i] {
                    rx.push(record(op, seq, t, Some(t + l + 7)));
                }
            }
        }
        rx.push(record(Operator::A, 999_999, 0, Some(1)));
        // Deterministic Fisher-Yates so the join cannot rely on input order.
        let mut s = shuffle_seed | 1;
        for i in (1..rx.len()).rev() {
            s ^= s << 13;
            s ^= s >> 7;
            s ^= s << 17;
            rx.swap(i, (s % (i as u64 + 1)) as usize);
        }
        let got = compute_oneway(&tx, &rx, offset);
        let want = nested_loop(&tx, &rx, offset);
        let got_rx: Vec<Option<u64>> = got.packets.iter().map(|p| p.rx_us).collect();
        prop_assert_eq!(got_rx, want);
        prop_assert_eq!(got.unmatched_rx, 1);
        let dups = lats.iter().zip(&dup_mask).filter(|(l, d)| l.is_some() && **d).count() as u64;
        prop_assert_eq!(got.duplicates, dups);
    }

    #[test]
    fn latency_invariant_under_common_clock_shift(
        lats in prop::collection::vec(0u64..1_000_000, 1..200),
        shift in 0u64..1_000_000_000,
        offset in 0i64..1_000,
    ) {
        let mk = |base: u64| -> (Vec<PacketRecord>, Vec<PacketRecord>) {
            let tx: Vec<_> = lats.iter().enumerate()
                .map(|(i, _)| record(Operator::A, i as u64, base + i as u64 * 1000, None)).collect();
            let rx: Vec<_> = lats.iter().enumerate()
                .map(|(i, l)| record(Operator::A, i as u64, 0, Some(base + i as u64 * 1000 + l + offset as u64))).collect();
            (tx, rx)
        };
        let (t0, r0) = mk(1_000_000);
        let (t1, r1) = mk(1_000_000 + shift);
        let l0: Vec<_> = compute_oneway(&t0, &r0, offset).packets.iter().map(|p| p.rx_us.unwrap() - p.tx_us).collect();
        let l1: Vec<_> = compute_oneway(&t1, &r1, offset).packets.iter().map(|p| p.rx_us.unwrap() - p.tx_us).collect();
        prop_assert_eq!(&l0, &l1);
        prop_assert_eq!(l0, lats);
    }
}
