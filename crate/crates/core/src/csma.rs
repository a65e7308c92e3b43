//! Per-MAC-slot probabilities of a CSMA/CA population with fixed attempt
//! probabilities, and the quantities of that population running alone.

use serde::{Deserialize, Serialize};

use crate::error::{check_probability, CoexError, Result};
use crate::units::Nanos;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationSet {
    pub taus: Vec<f64>,
    /// Bits delivered by one successful transmission of each station.
    pub payloads: Vec<u64>,
}

impl StationSet {
    pub fn new(taus: Vec<f64>, payloads: Vec<u64>) -> Result<Self> {
        let set = StationSet { taus, payloads };
        set.validate()?;
        Ok(set)
    }

    /// `n` identical stations.
    pub fn uniform(n: usize, tau: f64, payload: u64) -> Result<Self> {
        Self::new(vec![tau; n], vec![payload; n])
    }

    pub fn n(&self) -> usize {
        self.taus.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.taus.is_empty() {
            return Err(CoexError::invalid("taus", "need at least one station"));
        }
        if self.taus.len() != self.payloads.len() {
            return Err(CoexError::invalid(
                "payloads",
                format!("{} payloads for {} stations", self.payloads.len(), self.taus.len()),
            ));
        }
        for &t in &self.taus {
            check_probability("tau", t)?;
            if t >= 1.0 {
                return Err(CoexError::invalid("tau", "must be strictly below 1"));
            }
        }
        Ok(())
    }

    pub(crate) fn check_index(&self, j: usize) -> Result<()> {
        if j < self.n() {
            Ok(())
        } else {
            Err(CoexError::StationIndex { index: j, n: self.n() })
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlotProbabilities {
    pub p_e: f64,
    pub p_s: f64,
    pub p_c: f64,
    pub p_succ: Vec<f64>,
}

impl SlotProbabilities {
    pub fn p_busy(&self) -> f64 {
        self.p_s + self.p_c
    }
}

pub fn slot_probabilities(stations: &StationSet) -> Result<SlotProbabilities> {
    stations.validate()?;
    let p_e: f64 = stations.taus.iter().map(|t| 1.0 - t).product();
    // p_succ_j = tau_j prod_{k != j} (1 - tau_k), written without a division
    // so that it stays exact when some other tau is large. tau_j goes in last
    // so that equal stations get bitwise equal values.
    let p_succ: Vec<f64> = (0..stations.n())
        .map(|j| {
            let others: f64 = stations
                .taus
                .iter()
                .enumerate()
                .filter(|&(k, _)| k != j)
                .map(|(_, &t)| 1.0 - t)
                .product();
            others * stations.taus[j]
        })
        .collect();
    let p_s: f64 = p_succ.iter().sum();
    let p_c = (1.0 - p_s - p_e).max(0.0);
    Ok(SlotProbabilities { p_e, p_s, p_c, p_succ })
}

/// Probability that the channel is idle at an instant that is independent of
/// the CSMA slot process: `1 - (p_s T_b + p_c T_fra) / E[M]`.
pub fn idle_probability(probs: &SlotProbabilities, t_b: Nanos, t_fra: Nanos, mean_slot: f64) -> Result<f64> {
    if !(mean_slot > 0.0) {
        return Err(CoexError::invalid("mean_slot", "must be positive"));
    }
    Ok(1.0 - (probs.p_s * t_b.secs() + probs.p_c * t_fra.secs()) / mean_slot)
}

/// Long-run throughput of station `j` without a scheduled transmitter.
pub fn standalone_rate(stations: &StationSet, probs: &SlotProbabilities, mean_slot: f64, j: usize) -> Result<f64> {
    stations.check_index(j)?;
    if !(mean_slot > 0.0) {
        return Err(CoexError::invalid("mean_slot", "must be positive"));
    }
    Ok(probs.p_succ[j] * stations.payloads[j] as f64 / mean_slot)
}
