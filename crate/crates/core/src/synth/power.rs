use serde::{Deserialize, Serialize};

use super::SynthError;

/// Open-loop PUSCH power control with fractional path-loss compensation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PowerControlModel {
    pub p_max_ue_dbm: f64,
    pub p0_dbm: f64,
    pub alpha: f64,
    /// MCS and rate dependent offset.
    pub delta_ue_db: f64,
    /// Accumulated closed-loop correction.
    pub tpc_db: f64,
    /// Subcarrier spacing configuration index.
    pub mu: u32,
    pub m_prb: u32,
}

impl Default for PowerControlModel {
    /// Saturates at a path loss of about 118.7 dB, i.e. RSRP near -100.7 dBm
    /// with the default 18 dBm reference.
    fn default() -> Self {
        Self {
            p_max_ue_dbm: 23.0,
            p0_dbm: -88.0,
            alpha: 0.8,
            delta_ue_db: 0.0,
            tpc_db: 0.0,
            mu: 1,
            m_prb: 20,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TxPower {
    pub power_dbm: f64,
    /// The open-loop demand exceeded the UE maximum and was clamped.
    pub limited: bool,
}

impl PowerControlModel {
    pub fn validate(&self) -> Result<(), SynthError> {
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(SynthError::field("alpha", format!("must be in (0, 1], got {}", self.alpha)));
        }
        if self.m_prb == 0 {
            return Err(SynthError::field("m_prb", "must be at least 1"));
        }
        for (name, v) in [
            ("p_max_ue_dbm", self.p_max_ue_dbm),
            ("p0_dbm", self.p0_dbm),
            ("delta_ue_db", self.delta_ue_db),
            ("tpc_db", self.tpc_db),
        ] {
            if !v.is_finite() {
                return Err(SynthError::field(name, "must be finite"));
            }
        }
        Ok(())
    }

    fn bandwidth_term_db(&self) -> f64 {
        10.0 * (2f64.powi(self.mu as i32) * f64::from(self.m_prb)).log10()
    }

    /// Transmit power needed to close the link at `path_loss_db`, capped at
    /// the UE maximum.
    pub fn required_tx_power(&self, path_loss_db: f64) -> TxPower {
        let open_loop = self.p0_dbm
            + self.alpha * path_loss_db
            + self.delta_ue_db
            + self.tpc_db
            + self.bandwidth_term_db();
        if open_loop > self.p_max_ue_dbm {
            TxPower {
                power_dbm: self.p_max_ue_dbm,
                limited: true,
            }
        } else {
            TxPower {
                power_dbm: open_loop,
                limited: false,
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn plain() -> PowerControlModel {
        PowerControlModel {
            p0_dbm: -90.0,
            alpha: 1.0,
            mu: 0,
            m_prb: 1,
            ..PowerControlModel::default()
        }
    }

    #[test]
    fn hand_evaluated_points() {
        let m = plain();
        assert_eq!(m.required_tx_power(100.0), TxPower { power_dbm: 10.0, limited: false });
        assert_eq!(m.required_tx_power(120.0), TxPower { power_dbm: 23.0, limited: true });
        assert_eq!(m.required_tx_power(113.0), TxPower { power_dbm: 23.0, limited: false });
    }

    #[test]
    fn fractional_compensation_slope() {
        let m = PowerControlModel { alpha: 0.8, ..plain() };
        let a = m.required_tx_power(90.0).power_dbm;
        let b = m.required_tx_power(100.0).power_dbm;
        assert!((b - a - 8.0).abs() < 1e-12);
    }

    #[test]
    fn default_saturates_near_minus_101_rsrp() {
        let m = PowerControlModel::default();
        assert!(!m.required_tx_power(18.0 + 100.5).limited);
        assert!(m.required_tx_power(18.0 + 101.0).limited);
    }

    #[test]
    fn validation() {
        assert!(PowerControlModel { alpha: 0.0, ..plain() }.validate().is_err());
        assert!(PowerControlModel { alpha: 1.2, ..plain() }.validate().is_err());
        assert!(PowerControlModel { m_prb: 0, ..plain() }.validate().is_err());
        assert!(plain().validate().is_ok());
    }

    proptest! {
        #[test]
        fn monotone_and_clamped(
            alpha in 0.01f64..=1.0,
            p0 in -120.0f64..-60.0,
            pl1 in 0.0f64..200.0,
            pl2 in 0.0f64..200.0,
        ) {
            let m = PowerControlModel { alpha, p0_dbm: p0, ..PowerControlModel::default() };
            let (lo, hi) = if pl1 <= pl2 { (pl1, pl2) } else { (pl2, pl1) };
            let a = m.required_tx_power(lo);
            let b = m.required_tx_power(hi);
            prop_assert!(a.power_dbm <= b.power_dbm);
            prop_assert!(b.power_dbm <= m.p_max_ue_dbm);
            if b.limited {
                prop_assert_eq!(b.power_dbm, m.p_max_ue_dbm);
            }
        }
    }
}
