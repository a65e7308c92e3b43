//! 802.11 frame and MAC-slot durations.
//!
//! Every other module reads its timing vocabulary from here: the on-air time
//! of a (possibly aggregated) data frame, the ACK, a complete successful
//! exchange, and the mean MAC slot length for a given idle probability.

use serde::{Deserialize, Serialize};

use crate::error::{check_probability, CoexError, Result};
use crate::units::Nanos;

/// PHY/MAC constants. Defaults are the 802.11ac values used throughout
/// (9 us slot, 34 us DIFS, 16 us SIFS, 40 us preamble, 12000-bit payload).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PhyParams {
    pub slot_sigma: Nanos,
    pub difs: Nanos,
    pub sifs: Nanos,
    pub plcp: Nanos,
    pub l_service: u64,
    pub l_delimiter: u64,
    pub l_mac_header: u64,
    pub l_tail: u64,
    pub l_ack: u64,
    /// Payload bits of one MPDU.
    pub payload_d: u64,
}

impl Default for PhyParams {
    fn default() -> Self {
        PhyParams {
            slot_sigma: Nanos::from_micros(9),
            difs: Nanos::from_micros(34),
            sifs: Nanos::from_micros(16),
            plcp: Nanos::from_micros(40),
            l_service: 16,
            l_delimiter: 32,
            l_mac_header: 288,
            l_tail: 6,
            l_ack: 256,
            payload_d: 12_000,
        }
    }
}

impl PhyParams {
    pub fn validate(&self) -> Result<()> {
        for (field, d) in [
            ("slot_sigma", self.slot_sigma),
            ("difs", self.difs),
            ("sifs", self.sifs),
            ("plcp", self.plcp),
        ] {
            if d.is_zero() {
                return Err(CoexError::invalid(field, "duration must be positive"));
            }
        }
        for (field, bits) in [
            ("l_service", self.l_service),
            ("l_delimiter", self.l_delimiter),
            ("l_mac_header", self.l_mac_header),
            ("l_tail", self.l_tail),
            ("l_ack", self.l_ack),
            ("payload_d", self.payload_d),
        ] {
            if bits == 0 {
                return Err(CoexError::invalid(field, "bit length must be positive"));
            }
        }
        if self.difs <= self.sifs {
            return Err(CoexError::invalid("difs", "DIFS must exceed SIFS"));
        }
        Ok(())
    }
}

/// Modulation profile. The default (260 bits per 4 us symbol) is 64-QAM 5/6
/// on a 20 MHz channel with one spatial stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct McsProfile {
    pub bits_per_symbol: u64,
    pub symbol_duration: Nanos,
}

impl Default for McsProfile {
    fn default() -> Self {
        McsProfile {
            bits_per_symbol: 260,
            symbol_duration: Nanos::from_micros(4),
        }
    }
}

impl McsProfile {
    pub fn validate(&self) -> Result<()> {
        if self.bits_per_symbol == 0 {
            return Err(CoexError::invalid("bits_per_symbol", "must be at least 1"));
        }
        if self.symbol_duration.is_zero() {
            return Err(CoexError::invalid("symbol_duration", "must be positive"));
        }
        Ok(())
    }

    fn airtime(&self, bits: u64) -> Nanos {
        self.symbol_duration * bits.div_ceil(self.bits_per_symbol)
    }
}

/// Durations of one frame exchange for a given aggregation level.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrameTimings {
    /// Data frame without ACK; also the on-air length of a collision.
    pub t_fra: Nanos,
    pub t_ack: Nanos,
    /// Successful exchange: `t_fra + SIFS + t_ack`.
    pub t_b: Nanos,
    pub n_agg: u32,
}

impl FrameTimings {
    pub fn new(phy: &PhyParams, mcs: &McsProfile, n_agg: u32) -> Result<Self> {
        Self::with_payload(phy, mcs, n_agg, phy.payload_d)
    }

    /// Timings for a station whose MPDU payload differs from `phy.payload_d`.
    pub fn with_payload(phy: &PhyParams, mcs: &McsProfile, n_agg: u32, payload: u64) -> Result<Self> {
        let t_fra = frame_airtime(phy, mcs, n_agg, payload)?;
        let t_ack = ack_duration(phy, mcs)?;
        Ok(FrameTimings {
            t_fra,
            t_ack,
            t_b: t_fra + phy.sifs + t_ack,
            n_agg,
        })
    }

    /// Channel occupancy of a busy MAC slot (success or collision).
    pub fn busy_slot(&self, phy: &PhyParams) -> Nanos {
        self.t_b + phy.difs
    }
}

fn frame_airtime(phy: &PhyParams, mcs: &McsProfile, n_agg: u32, payload: u64) -> Result<Nanos> {
    if n_agg == 0 {
        return Err(CoexError::invalid("n_agg", "at least one MPDU per frame"));
    }
    if mcs.bits_per_symbol == 0 {
        return Err(CoexError::invalid("bits_per_symbol", "must be at least 1"));
    }
    let bits = phy.l_service + u64::from(n_agg) * (phy.l_delimiter + phy.l_mac_header + payload) + phy.l_tail;
    Ok(phy.plcp + mcs.airtime(bits))
}

/// On-air time of a data frame carrying `n_agg` aggregated MPDUs.
pub fn frame_duration(phy: &PhyParams, mcs: &McsProfile, n_agg: u32) -> Result<Nanos> {
    frame_airtime(phy, mcs, n_agg, phy.payload_d)
}

pub fn ack_duration(phy: &PhyParams, mcs: &McsProfile) -> Result<Nanos> {
    if mcs.bits_per_symbol == 0 {
        return Err(CoexError::invalid("bits_per_symbol", "must be at least 1"));
    }
    Ok(phy.plcp + mcs.airtime(phy.l_service + phy.l_ack + phy.l_tail))
}

/// Data frame, SIFS and ACK.
pub fn success_duration(phy: &PhyParams, mcs: &McsProfile, n_agg: u32) -> Result<Nanos> {
    Ok(frame_duration(phy, mcs, n_agg)? + phy.sifs + ack_duration(phy, mcs)?)
}

/// Mean MAC slot length in seconds: an idle slot lasts `sigma`, a busy one
/// `T_b + DIFS` for successes and collisions alike.
pub fn mean_mac_slot(phy: &PhyParams, timings: &FrameTimings, p_e: f64) -> Result<f64> {
    check_probability("p_e", p_e)?;
    Ok(phy.slot_sigma.secs() * p_e + timings.busy_slot(phy).secs() * (1.0 - p_e))
}
