use serde::{Deserialize, Serialize};

use super::packet::BODY_LEN;
use super::ProbeError;
use crate::trace::GeoPosition;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ServingCell {
    pub cell_id: String,
    pub rsrp_dbm: f64,
    pub ul_tx_pwr_dbm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeighborCell {
    pub cell_id: String,
    pub rsrp_dbm: f64,
}

/// Modem and position state embedded in one probe per second.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TelemetrySnapshot {
    pub gps: Option<GeoPosition>,
    pub modem_status: String,
    pub serving_cell: ServingCell,
    #[serde(default)]
    pub neighbors: Vec<NeighborCell>,
    /// Set when neighbours were dropped to fit the packet body.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub truncated: bool,
}

impl TelemetrySnapshot {
    /// JSON body that fits a probe packet, dropping the neighbour list if
    /// needed.
    pub fn to_body(&self) -> Result<Vec<u8>, ProbeError> {
        let full = serde_json::to_vec(self).map_err(|e| ProbeError::Telemetry(e.to_string()))?;
        if full.len() <= BODY_LEN {
            return Ok(full);
        }
        let cut = TelemetrySnapshot {
            neighbors: Vec::new(),
            truncated: true,
            ..self.clone()
        };
        let short = serde_json::to_vec(&cut).map_err(|e| ProbeError::Telemetry(e.to_string()))?;
        if short.len() <= BODY_LEN {
            Ok(short)
        } else {
            Err(ProbeError::Oversize {
                len: short.len(),
                max: BODY_LEN,
            })
        }
    }

    /// Parses a zero-padded body; `None` for filler bodies.
    pub fn from_body(body: &[u8]) -> Option<Self> {
        let end = body.iter().rposition(|&b| b != 0).map_or(0, |i| i + 1);
        serde_json::from_slice(&body[..end]).ok()
    }
}
