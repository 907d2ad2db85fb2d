use super::ProbeError;
use crate::trace::{Operator, PROBE_PAYLOAD_LEN};

pub const PAYLOAD_LEN: usize = PROBE_PAYLOAD_LEN as usize;
pub const HEADER_LEN: usize = 17;
pub const BODY_LEN: usize = PAYLOAD_LEN - HEADER_LEN;

pub fn operator_flag(op: Operator) -> u8 {
    match op {
        Operator::A => 0x01,
        Operator::B => 0x02,
    }
}

pub fn flag_operator(flag: u8) -> Result<Operator, ProbeError> {
    match flag {
        0x01 => Ok(Operator::A),
        0x02 => Ok(Operator::B),
        other => Err(ProbeError::ReservedFlag(other)),
    }
}

/// One probe datagram. The body is always stored zero-padded to its full
/// length so that decoding returns exactly what was encoded.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProbePacket {
    operator: Operator,
    seq: u64,
    tx_us: u64,
    body: Box<[u8; BODY_LEN]>,
}

impl ProbePacket {
    pub fn new(operator: Operator, seq: u64, tx_us: u64, body: &[u8]) -> Result<Self, ProbeError> {
        if body.len() > BODY_LEN {
            return Err(ProbeError::Oversize {
                len: body.len(),
                max: BODY_LEN,
            });
        }
        let mut padded = Box::new([0u8; BODY_LEN]);
        padded[..body.len()].copy_from_slice(body);
        Ok(Self {
            operator,
            seq,
            tx_us,
            body: padded,
        })
    }

    pub fn operator(&self) -> Operator {
        self.operator
    }

    pub fn seq(&self) -> u64 {
        self.seq
    }

    pub fn tx_us(&self) -> u64 {
        self.tx_us
    }

    /// Full padded body.
    pub fn body(&self) -> &[u8] {
        &self.body[..]
    }

    pub fn set_tx_us(&mut self, tx_us: u64) {
        self.tx_us = tx_us;
    }

    /// flag(1) ‖ seq(8, BE) ‖ tx timestamp µs(8, BE) ‖ body.
    pub fn encode(&self) -> [u8; PAYLOAD_LEN] {
        let mut out = [0u8; PAYLOAD_LEN];
        out[0] = operator_flag(self.operator);
        out[1..9].copy_from_slice(&self.seq.to_be_bytes());
        out[9..17].copy_from_slice(&self.tx_us.to_be_bytes());
        out[HEADER_LEN..].copy_from_slice(&self.body[..]);
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, ProbeError> {
        if bytes.len() != PAYLOAD_LEN {
            return Err(ProbeError::WrongLength(bytes.len()));
        }
        let operator = flag_operator(bytes[0])?;
        let seq = u64::from_be_bytes(bytes[1..9].try_into().expect("8 bytes"));
        let tx_us = u64::from_be_bytes(bytes[9..17].try_into().expect("8 bytes"));
        let mut body = Box::new([0u8; BODY_LEN]);
        body.copy_from_slice(&bytes[HEADER_LEN..]);
        Ok(Self {
            operator,
            seq,
            tx_us,
            body,
        })
    }
}
