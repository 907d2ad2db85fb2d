use std::io::ErrorKind;
use std::net::{SocketAddr, UdpSocket};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread;
use std::time::{Duration, Instant};

use super::packet::{ProbePacket, PAYLOAD_LEN};
use super::{Clock, ProbeError, TelemetrySnapshot};
use crate::trace::{Direction, Operator, PacketRecord, PROBE_PAYLOAD_LEN};

/// A wall-clock reading further than this from the monotonic schedule is
/// reported as a clock step.
const CLOCK_STEP_US: i64 = 100_000;

#[derive(Debug, Clone)]
pub struct SenderConfig {
    pub rate_bps: f64,
    pub dest: SocketAddr,
    pub bind: SocketAddr,
    pub operator: Operator,
    pub duration: Duration,
    /// How long to keep listening for echoes after the last packet.
    pub echo_grace: Duration,
    /// Cycled through, one snapshot embedded per second.
    pub telemetry: Vec<TelemetrySnapshot>,
}

impl SenderConfig {
    pub fn new(rate_bps: f64, dest: SocketAddr, operator: Operator, duration: Duration) -> Self {
        let bind = if dest.is_ipv4() {
            SocketAddr::from(([0, 0, 0, 0], 0))
        } else {
            SocketAddr::from(([0u16; 8], 0))
        };
        Self {
            rate_bps,
            dest,
            bind,
            operator,
            duration,
            echo_grace: Duration::from_secs(1),
            telemetry: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct SenderReport {
    /// Sent UL packets, `rx_us` unset.
    pub tx_log: Vec<PacketRecord>,
    /// Echoes received back: tx is the server's send time, rx the local clock.
    pub dl_log: Vec<PacketRecord>,
    pub clock_steps: u32,
    pub malformed_echoes: u64,
}

pub fn interval_for_rate(rate_bps: f64) -> Result<Duration, ProbeError> {
    if !(rate_bps > 0.0 && rate_bps.is_finite()) {
        return Err(ProbeError::InvalidRate(rate_bps));
    }
    Ok(Duration::from_secs_f64(f64::from(PROBE_PAYLOAD_LEN) * 8.0 / rate_bps))
}

fn spawn_receiver(
    socket: UdpSocket,
    clock: Arc<dyn Clock>,
    done: Arc<AtomicBool>,
) -> thread::JoinHandle<(Vec<PacketRecord>, u64)> {
    thread::spawn(move || {
        let mut log = Vec::new();
        let mut malformed = 0u64;
        let mut buf = [0u8; 2048];
        while !done.load(Ordering::Relaxed) {
            match socket.recv(&mut buf) {
                Ok(n) => {
                    let rx = clock.now_us();
                    match ProbePacket::decode(&buf[..n]) {
                        Ok(p) => log.push(PacketRecord {
                            seq: p.seq(),
                            operator: p.operator(),
                            direction: Direction::Dl,
                            tx_us: p.tx_us(),
                            rx_us: Some(rx),
                            payload_len: n as u32,
                        }),
                        Err(e) => {
                            malformed += 1;
                            log::debug!("dropping malformed echo: {e}");
                        }
                    }
                }
                Err(e) if matches!(e.kind(), ErrorKind::WouldBlock | ErrorKind::TimedOut | ErrorKind::ConnectionRefused) => {}
                Err(e) => {
                    log::warn!("echo receive failed: {e}");
                    break;
                }
            }
        }
        (log, malformed)
    })
}

/// Sends a constant-bit-rate probe stream for `cfg.duration` and collects
/// the echoes. Packets follow an absolute schedule against a monotonic
/// clock, so sleep overshoot does not accumulate into rate drift.
pub fn run_sender(cfg: &SenderConfig, clock: Arc<dyn Clock>) -> Result<SenderReport, ProbeError> {
    let interval = interval_for_rate(cfg.rate_bps)?;
    let socket = UdpSocket::bind(cfg.bind)?;
    socket.connect(cfg.dest)?;
    let rx_socket = socket.try_clone()?;
    rx_socket.set_read_timeout(Some(Duration::from_millis(20)))?;
    let done = Arc::new(AtomicBool::new(false));
    let receiver = spawn_receiver(rx_socket, Arc::clone(&clock), Arc::clone(&done));

    let mut report = SenderReport::default();
    let interval_ns = interval.as_nanos() as f64;
    let start = Instant::now();
    let mut wall_base = clock.now_us() as i64;
    let mut last_second = None;
    let mut seq = 0u64;
    let send_result = loop {
        let offset = Duration::from_nanos((seq as f64 * interval_ns).round() as u64);
        if offset >= cfg.duration {
            break Ok(());
        }
        let deadline = start + offset;
        let now = Instant::now();
        if deadline > now {
            thread::sleep(deadline - now);
        }
        let elapsed_us = start.elapsed().as_micros() as i64;
        let tx_us = clock.now_us();
        if (tx_us as i64 - (wall_base + elapsed_us)).abs() > CLOCK_STEP_US {
            log::warn!(
                "wall clock stepped by {} us at seq {seq}",
                tx_us as i64 - (wall_base + elapsed_us)
            );
            report.clock_steps += 1;
            wall_base = tx_us as i64 - elapsed_us;
        }

        let second = offset.as_secs();
        let body = match (cfg.telemetry.is_empty(), last_second == Some(second)) {
            (false, false) => {
                let snap = &cfg.telemetry[(second as usize) % cfg.telemetry.len()];
                snap.to_body()?
            }
            _ => Vec::new(),
        };
        last_second = Some(second);
        let packet = ProbePacket::new(cfg.operator, seq, tx_us, &body)?;
        if let Err(e) = socket.send(&packet.encode()) {
            if e.kind() != ErrorKind::ConnectionRefused {
                break Err(e);
            }
        }
        report.tx_log.push(PacketRecord {
            seq,
            operator: cfg.operator,
            direction: Direction::Ul,
            tx_us,
            rx_us: None,
            payload_len: PAYLOAD_LEN as u32,
        });
        seq += 1;
    };

    thread::sleep(cfg.echo_grace);
    done.store(true, Ordering::Relaxed);
    let (dl_log, malformed) = receiver.join().unwrap_or_default();
    send_result?;
    report.dl_log = dl_log;
    report.malformed_echoes = malformed;
    Ok(report)
}
