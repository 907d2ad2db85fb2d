//! Live UDP probing: a constant-bit-rate sender, an echo server and the
//! offline join that turns their logs into one-way latencies.

mod echo;
mod oneway;
mod packet;
mod sender;
mod telemetry;

pub use echo::{EchoServer, EchoStats};
pub use oneway::{compute_oneway, OnewayResult};
pub use packet::{flag_operator, operator_flag, ProbePacket, BODY_LEN, HEADER_LEN, PAYLOAD_LEN};
pub use sender::{interval_for_rate, run_sender, SenderConfig, SenderReport};
pub use telemetry::{NeighborCell, ServingCell, TelemetrySnapshot};

use std::time::{SystemTime, UNIX_EPOCH};

#[derive(Debug, thiserror::Error)]
pub enum ProbeError {
    #[error("datagram is {0} bytes, expected {PAYLOAD_LEN}")]
    WrongLength(usize),
    #[error("reserved operator flag 0x{0:02x}")]
    ReservedFlag(u8),
    #[error("body of {len} bytes exceeds the {max}-byte limit")]
    Oversize { len: usize, max: usize },
    #[error("rate must be positive, got {0} bps")]
    InvalidRate(f64),
    #[error("telemetry: {0}")]
    Telemetry(String),
    #[error("socket: {0}")]
    Io(#[from] std::io::Error),
}

/// Wall-clock source in microseconds since the Unix epoch.
pub trait Clock: Send + Sync {
    fn now_us(&self) -> u64;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct SystemClock;

impl Clock for SystemClock {
    fn now_us(&self) -> u64 {
        SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map_or(0, |d| d.as_micros() as u64)
    }
}
