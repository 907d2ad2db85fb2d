use std::io::ErrorKind;
use std::net::{SocketAddr, UdpSocket};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::time::Duration;

use super::packet::ProbePacket;
use super::{Clock, ProbeError};
use crate::trace::{Direction, PacketRecord};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct EchoStats {
    pub received: u64,
    pub echoed: u64,
    pub malformed: u64,
}

/// Reflects probe packets back to their source with the transmit timestamp
/// replaced by the server's send time.
pub struct EchoServer {
    socket: UdpSocket,
    clock: Arc<dyn Clock>,
}

impl EchoServer {
    pub fn bind(addr: SocketAddr, clock: Arc<dyn Clock>) -> Result<Self, ProbeError> {
        let socket = UdpSocket::bind(addr)?;
        socket.set_read_timeout(Some(Duration::from_millis(50)))?;
        Ok(Self { socket, clock })
    }

    pub fn local_addr(&self) -> Result<SocketAddr, ProbeError> {
        Ok(self.socket.local_addr()?)
    }

    /// Serves until `stop` is set. Each valid datagram is reported to
    /// `on_rx` as an UL record stamped with the server receive time.
    pub fn run(&self, stop: &AtomicBool, on_rx: &mut dyn FnMut(&PacketRecord)) -> Result<EchoStats, ProbeError> {
        let mut stats = EchoStats::default();
        let mut buf = [0u8; 2048];
        while !stop.load(Ordering::Relaxed) {
            let (n, src) = match self.socket.recv_from(&mut buf) {
                Ok(r) => r,
                Err(e) if matches!(e.kind(), ErrorKind::WouldBlock | ErrorKind::TimedOut | ErrorKind::ConnectionRefused) => {
                    continue
                }
                Err(e) => return Err(e.into()),
            };
            let rx_us = self.clock.now_us();
            let mut packet = match ProbePacket::decode(&buf[..n]) {
                Ok(p) => p,
                Err(e) => {
                    stats.malformed += 1;
                    log::warn!("dropping datagram from {src}: {e}");
                    continue;
                }
            };
            stats.received += 1;
            on_rx(&PacketRecord {
                seq: packet.seq(),
                operator: packet.operator(),
                direction: Direction::Ul,
                tx_us: packet.tx_us(),
                rx_us: Some(rx_us),
                payload_len: n as u32,
            });
            packet.set_tx_us(self.clock.now_us());
            match self.socket.send_to(&packet.encode(), src) {
                Ok(_) => stats.echoed += 1,
                Err(e) => log::warn!("echo to {src} failed: {e}"),
            }
        }
        Ok(stats)
    }
}
