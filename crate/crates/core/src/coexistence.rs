//! Renewal-reward throughput model of one scheduled transmitter sharing the
//! channel with a CSMA/CA population.
//!
//! Analytic durations in this module are `f64` seconds. Two busy-period
//! lengths appear: the MAC-slot occupancy `T_b + DIFS` (what a truncated
//! CSMA slot costs the CSMA side) and the on-air mixture
//! `(p_s T_b + p_c T_fra) / (p_s + p_c)` (what can overlap a scheduled
//! transmission).

use serde::{Deserialize, Serialize};

use crate::csma::{slot_probabilities, standalone_rate, SlotProbabilities, StationSet};
use crate::error::{check_probability, CoexError, Result};
use crate::phy::{mean_mac_slot, FrameTimings, McsProfile, PhyParams};
use crate::units::Nanos;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AccessMode {
    /// Duty cycle: transmit at the epoch start whatever the channel state.
    Preemptive,
    /// Listen before talk: claim the first idle MAC slot, then hold the
    /// channel with a reservation signal up to the next `delta` boundary.
    Opportunistic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Sensing {
    /// CSMA stations detect scheduled transmissions by carrier sensing.
    Perfect,
    /// Stations only defer after decoding an announcement sent at the epoch
    /// start, which is lost when it collides with a CSMA frame.
    ExplicitSignal,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScheduledParams {
    pub mode: AccessMode,
    pub t_on: Nanos,
    pub mean_t_off: Nanos,
    pub slot_delta: Nanos,
    /// Scheduled PHY rate in bits/s.
    pub rate_r: f64,
    /// Mean reservation time of the opportunistic mode.
    pub t_res: Nanos,
    pub sensing: Sensing,
}

impl ScheduledParams {
    /// 75 Mb/s, reservation `delta / 2`, perfect sensing.
    pub fn new(mode: AccessMode, t_on: Nanos, mean_t_off: Nanos, slot_delta: Nanos) -> Self {
        ScheduledParams {
            mode,
            t_on,
            mean_t_off,
            slot_delta,
            rate_r: 75e6,
            t_res: Nanos(slot_delta.0 / 2),
            sensing: Sensing::Perfect,
        }
    }

    pub fn with_sensing(mut self, sensing: Sensing) -> Self {
        self.sensing = sensing;
        self
    }

    pub fn with_mean_t_off(mut self, mean_t_off: Nanos) -> Self {
        self.mean_t_off = mean_t_off;
        self
    }

    pub fn cycle(&self) -> f64 {
        self.t_on.secs() + self.mean_t_off.secs()
    }

    pub fn validate(&self) -> Result<()> {
        if self.slot_delta.is_zero() {
            return Err(CoexError::invalid("slot_delta", "must be positive"));
        }
        if self.t_on.is_zero() {
            return Err(CoexError::invalid("t_on", "must be positive"));
        }
        if !self.t_on.is_multiple_of(self.slot_delta) {
            return Err(CoexError::invalid(
                "t_on",
                format!("{} is not a multiple of delta = {}", self.t_on, self.slot_delta),
            ));
        }
        if self.t_res > self.slot_delta {
            return Err(CoexError::invalid("t_res", "reservation cannot exceed delta"));
        }
        if self.t_res > self.t_on {
            return Err(CoexError::invalid("t_res", "reservation cannot exceed t_on"));
        }
        if !(self.rate_r.is_finite() && self.rate_r >= 0.0) {
            return Err(CoexError::invalid("rate_r", "must be a finite non-negative rate"));
        }
        Ok(())
    }
}

/// Everything about the CSMA population the coexistence formulas need.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelContext {
    pub probs: SlotProbabilities,
    pub timings: FrameTimings,
    pub sigma: Nanos,
    pub difs: Nanos,
    /// `E[M]` in seconds.
    pub mean_slot: f64,
}

impl ChannelContext {
    pub fn new(phy: &PhyParams, mcs: &McsProfile, stations: &StationSet, n_agg: u32) -> Result<Self> {
        let timings = FrameTimings::new(phy, mcs, n_agg)?;
        let probs = slot_probabilities(stations)?;
        let mean_slot = mean_mac_slot(phy, &timings, probs.p_e)?;
        Ok(ChannelContext {
            probs,
            timings,
            sigma: phy.slot_sigma,
            difs: phy.difs,
            mean_slot,
        })
    }

    /// Busy MAC slot length `T_b + DIFS`.
    pub fn delta_mac(&self) -> f64 {
        (self.timings.t_b + self.difs).secs()
    }

    /// Mean on-air length of a busy slot; `T_b` when the channel is silent.
    pub fn delta_on_air(&self) -> f64 {
        let busy = self.probs.p_busy();
        if busy > 0.0 {
            self.on_air_mass() / busy
        } else {
            self.timings.t_b.secs()
        }
    }

    fn on_air_mass(&self) -> f64 {
        self.probs.p_s * self.timings.t_b.secs() + self.probs.p_c * self.timings.t_fra.secs()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HeterogeneityCosts {
    pub p_tx_a: f64,
    /// Off-period airtime lost to truncated or collided CSMA slots.
    pub c1: f64,
    /// On-period airtime that carries no scheduled data.
    pub c2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThroughputPrediction {
    pub s_csma: Vec<f64>,
    pub s_sched: f64,
    pub eff_off: f64,
    pub airtime_csma_full_slots: f64,
    pub airtime_sched: f64,
    pub costs: HeterogeneityCosts,
}

/// Probability that the scheduled epoch start meets a CSMA transmission.
pub fn on_start_collision_prob(
    mode: AccessMode,
    probs: &SlotProbabilities,
    timings: &FrameTimings,
    mean_slot: f64,
) -> Result<f64> {
    match mode {
        AccessMode::Preemptive => {
            if !(mean_slot > 0.0) {
                return Err(CoexError::invalid("mean_slot", "must be positive"));
            }
            let on_air = probs.p_s * timings.t_b.secs() + probs.p_c * timings.t_fra.secs();
            Ok((on_air / mean_slot).min(1.0))
        }
        AccessMode::Opportunistic => Ok(1.0 - probs.p_e),
    }
}

/// Mean truncated-slot loss of a duty-cycled start: `(delta / 2) p`.
pub fn preemptive_c1(delta: f64, p_tx_a: f64) -> f64 {
    delta / 2.0 * p_tx_a
}

/// `ceil(delta / 2 slot) slot p`: the scheduled slots hit by the remainder of
/// an interrupted frame, taking the remainder as half a frame.
pub fn preemptive_c2(delta: f64, slot: f64, p_tx_a: f64) -> f64 {
    (delta / (2.0 * slot)).ceil() * slot * p_tx_a
}

/// A collided claim loses the longer of the reservation and the subframes
/// covered by the colliding frame; otherwise only the reservation is spent.
pub fn opportunistic_c2(delta: f64, slot: f64, t_res: f64, p_tx_a: f64) -> f64 {
    t_res.max((delta / slot).ceil() * slot) * p_tx_a + t_res * (1.0 - p_tx_a)
}

/// Off-time loss of a duty-cycled start with explicit signalling.
pub fn explicit_preemptive_loss(delta: f64, p_tx_a: f64) -> f64 {
    delta / 2.0 * p_tx_a * (1.0 - p_tx_a) + delta * p_tx_a * p_tx_a
}

/// Off-time loss of a listen-before-talk start with explicit signalling:
/// the claim collides with probability `1 - p_e`, after which a CSMA frame
/// straddles the epoch end with probability `p_on_air`.
pub fn explicit_opportunistic_loss(delta: f64, p_e: f64, p_on_air: f64) -> f64 {
    delta / 2.0 * (1.0 - p_e) * p_on_air
}

pub fn heterogeneity_costs(sched: &ScheduledParams, ctx: &ChannelContext) -> Result<HeterogeneityCosts> {
    sched.validate()?;
    let slot = sched.slot_delta.secs();
    let t_on = sched.t_on.secs();
    let t_res = sched.t_res.secs();
    let p_on_air = on_start_collision_prob(AccessMode::Preemptive, &ctx.probs, &ctx.timings, ctx.mean_slot)?;
    let p_tx_a = on_start_collision_prob(sched.mode, &ctx.probs, &ctx.timings, ctx.mean_slot)?;
    let delta = ctx.delta_on_air();
    let costs = match (sched.sensing, sched.mode) {
        (Sensing::Perfect, AccessMode::Preemptive) => HeterogeneityCosts {
            p_tx_a,
            c1: preemptive_c1(ctx.delta_mac(), p_tx_a),
            c2: preemptive_c2(delta, slot, p_tx_a),
        },
        (Sensing::Perfect, AccessMode::Opportunistic) => HeterogeneityCosts {
            p_tx_a,
            c1: 0.0,
            c2: opportunistic_c2(delta, slot, t_res, p_tx_a),
        },
        (Sensing::ExplicitSignal, mode) => {
            let idle_run = ctx.sigma.secs() * ctx.probs.p_e / (1.0 - ctx.probs.p_e).max(f64::MIN_POSITIVE);
            if idle_run > slot {
                log::warn!(
                    "mean idle run {:.1} us exceeds delta; an unannounced epoch may leave whole subframes clean",
                    idle_run * 1e6
                );
            }
            match mode {
                AccessMode::Preemptive => HeterogeneityCosts {
                    p_tx_a,
                    c1: explicit_preemptive_loss(delta, p_tx_a),
                    c2: t_on * p_tx_a,
                },
                AccessMode::Opportunistic => HeterogeneityCosts {
                    p_tx_a,
                    c1: explicit_opportunistic_loss(delta, ctx.probs.p_e, p_on_air),
                    c2: t_on * p_tx_a + t_res * (1.0 - p_tx_a),
                },
            }
        }
    };
    Ok(costs)
}

/// Mean off-period time made of complete CSMA MAC slots.
pub fn effective_off_time(sched: &ScheduledParams, costs: &HeterogeneityCosts) -> Result<f64> {
    let eff = sched.mean_t_off.secs() - costs.c1;
    if eff > 0.0 {
        Ok(eff)
    } else {
        Err(CoexError::Infeasible(format!(
            "mean off time {} leaves no complete CSMA slots (loss {:.1} us)",
            sched.mean_t_off,
            costs.c1 * 1e6
        )))
    }
}

/// Standalone rate of station `j` scaled by the share of time it can use.
pub fn csma_throughput(
    stations: &StationSet,
    probs: &SlotProbabilities,
    mean_slot: f64,
    sched: &ScheduledParams,
    eff_off: f64,
    j: usize,
) -> Result<f64> {
    let cycle = sched.cycle();
    if !(cycle > 0.0) {
        return Err(CoexError::invalid("t_on + mean_t_off", "cycle must be positive"));
    }
    Ok(standalone_rate(stations, probs, mean_slot, j)? * eff_off / cycle)
}

pub fn scheduled_throughput(sched: &ScheduledParams, costs: &HeterogeneityCosts) -> Result<f64> {
    let t_on = sched.t_on.secs();
    check_probability("p_tx_a", costs.p_tx_a)?;
    if costs.c2 > t_on {
        return Err(CoexError::Infeasible(format!(
            "on period {} is shorter than its mean loss {:.1} us",
            sched.t_on,
            costs.c2 * 1e6
        )));
    }
    if sched.t_res > sched.t_on {
        return Err(CoexError::Infeasible("reservation exceeds the on period".into()));
    }
    let cycle = sched.cycle();
    if !(cycle > 0.0) {
        return Err(CoexError::invalid("t_on + mean_t_off", "cycle must be positive"));
    }
    Ok(sched.rate_r * (t_on - costs.c2) / cycle)
}

/// All analytic outputs for one configuration.
pub fn predict(stations: &StationSet, sched: &ScheduledParams, ctx: &ChannelContext) -> Result<ThroughputPrediction> {
    let costs = heterogeneity_costs(sched, ctx)?;
    let eff_off = effective_off_time(sched, &costs)?;
    let s_csma = (0..stations.n())
        .map(|j| csma_throughput(stations, &ctx.probs, ctx.mean_slot, sched, eff_off, j))
        .collect::<Result<Vec<_>>>()?;
    let s_sched = scheduled_throughput(sched, &costs)?;
    let cycle = sched.cycle();
    Ok(ThroughputPrediction {
        s_csma,
        s_sched,
        eff_off,
        airtime_csma_full_slots: eff_off / cycle,
        airtime_sched: (sched.t_on.secs() + costs.c1) / cycle,
        costs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ctx(n: usize, n_agg: u32) -> (StationSet, ChannelContext) {
        let phy = PhyParams::default();
        let stations = StationSet::uniform(n, 1.0 / 16.0, 12_000 * u64::from(n_agg)).unwrap();
        let c = ChannelContext::new(&phy, &McsProfile::default(), &stations, n_agg).unwrap();
        (stations, c)
    }

    fn sched(mode: AccessMode, on_ms: u64, off_ms: u64) -> ScheduledParams {
        ScheduledParams::new(
            mode,
            Nanos::from_millis(on_ms),
            Nanos::from_millis(off_ms),
            Nanos::from_millis(1),
        )
    }

    #[test]
    fn collision_probability_three_stations() {
        let (_, c) = ctx(3, 1);
        let p = on_start_collision_prob(AccessMode::Preemptive, &c.probs, &c.timings, c.mean_slot).unwrap();
        assert!((p - 0.784).abs() < 5e-4, "{p}");
        // The on-air mixture turns the generic (1 - p_e) delta / E[M] into the same value.
        let generic = (1.0 - c.probs.p_e) * c.delta_on_air() / c.mean_slot;
        assert!((generic - p).abs() < 1e-12);
        let o = on_start_collision_prob(AccessMode::Opportunistic, &c.probs, &c.timings, c.mean_slot).unwrap();
        assert_eq!(o, 1.0 - c.probs.p_e);
    }

    #[test]
    fn silent_channel_has_no_collisions() {
        let probs = SlotProbabilities {
            p_e: 1.0,
            p_s: 0.0,
            p_c: 0.0,
            p_succ: vec![0.0],
        };
        let (_, c) = ctx(1, 1);
        for mode in [AccessMode::Preemptive, AccessMode::Opportunistic] {
            assert_eq!(on_start_collision_prob(mode, &probs, &c.timings, 9e-6).unwrap(), 0.0);
        }
    }

    #[test]
    fn cost_formulas_by_hand() {
        let c1 = preemptive_c1(330e-6, 0.784);
        assert!((c1 - 129.36e-6).abs() < 1e-12);
        let c2 = preemptive_c2(330e-6, 1e-3, 0.784);
        assert!((c2 - 784e-6).abs() < 1e-12);
        assert_eq!(preemptive_c1(330e-6, 0.0), 0.0);
        assert_eq!(preemptive_c2(330e-6, 1e-3, 0.0), 0.0);
        assert_eq!(opportunistic_c2(330e-6, 1e-3, 0.5e-3, 0.0), 0.5e-3);
        let c2 = opportunistic_c2(330e-6, 1e-3, 0.5e-3, 0.1);
        assert!((c2 - 550e-6).abs() < 1e-12);
    }

    #[test]
    fn explicit_loss_endpoints() {
        let d = 330e-6;
        assert_eq!(explicit_preemptive_loss(d, 0.0), 0.0);
        assert_eq!(explicit_preemptive_loss(d, 1.0), d);
        let eff = 50e-3 - explicit_preemptive_loss(d, 0.5);
        assert!((eff - 49_876.25e-6).abs() < 1e-12);
        assert_eq!(explicit_opportunistic_loss(d, 1.0, 0.3), 0.0);
    }

    #[test]
    fn opportunistic_half_duty_cycle_halves_rate() {
        let (stations, c) = ctx(1, 1);
        let s = sched(AccessMode::Opportunistic, 50, 50);
        let pred = predict(&stations, &s, &c).unwrap();
        let alone = standalone_rate(&stations, &c.probs, c.mean_slot, 0).unwrap();
        assert_eq!(pred.costs.c1, 0.0);
        assert!((pred.s_csma[0] - alone / 2.0).abs() < 1e-9 * alone);
    }

    #[test]
    fn scheduled_throughput_example() {
        let s = ScheduledParams {
            rate_r: 75e6,
            ..sched(AccessMode::Opportunistic, 50, 150)
        };
        let costs = HeterogeneityCosts {
            p_tx_a: 0.1,
            c1: 0.0,
            c2: opportunistic_c2(330e-6, 1e-3, 0.5e-3, 0.1),
        };
        let r = scheduled_throughput(&s, &costs).unwrap();
        assert!((r - 75e6 * 49_450.0 / 200_000.0).abs() < 1e-3);
        assert!((r / 1e6 - 18.54).abs() < 0.01);
    }

    #[test]
    fn sole_occupant_gets_full_rate() {
        let s = sched(AccessMode::Preemptive, 10, 0);
        let costs = HeterogeneityCosts {
            p_tx_a: 0.0,
            c1: 0.0,
            c2: 0.0,
        };
        assert_eq!(scheduled_throughput(&s, &costs).unwrap(), s.rate_r);
        let lost = HeterogeneityCosts {
            p_tx_a: 1.0,
            c1: 0.0,
            c2: 10e-3,
        };
        assert_eq!(scheduled_throughput(&s, &lost).unwrap(), 0.0);
    }

    #[test]
    fn csma_throughput_limits() {
        let (stations, c) = ctx(2, 1);
        let alone = standalone_rate(&stations, &c.probs, c.mean_slot, 1).unwrap();
        let mut s = sched(AccessMode::Preemptive, 10, 20);
        s.t_on = Nanos::ZERO;
        let full = csma_throughput(&stations, &c.probs, c.mean_slot, &s, 20e-3, 1).unwrap();
        assert!((full - alone).abs() < 1e-9 * alone);
        assert_eq!(
            csma_throughput(&stations, &c.probs, c.mean_slot, &s, 0.0, 1).unwrap(),
            0.0
        );
    }

    #[test]
    fn airtime_partition() {
        let (stations, c) = ctx(3, 16);
        let s = sched(AccessMode::Preemptive, 10, 30);
        let p = predict(&stations, &s, &c).unwrap();
        assert!((p.airtime_sched + p.airtime_csma_full_slots - 1.0).abs() < 1e-12);
        assert!(p.eff_off <= s.mean_t_off.secs());
    }

    #[test]
    fn explicit_signal_matches_perfect_without_collisions() {
        let phy = PhyParams::default();
        let stations = StationSet::uniform(2, 0.0, 12_000).unwrap();
        let c = ChannelContext::new(&phy, &McsProfile::default(), &stations, 1).unwrap();
        for (mode, off) in [
            (AccessMode::Preemptive, 10),
            (AccessMode::Opportunistic, 10),
            (AccessMode::Opportunistic, 30),
        ] {
            let s = sched(mode, 10, off);
            let perfect = predict(&stations, &s, &c).unwrap();
            let explicit = predict(&stations, &s.with_sensing(Sensing::ExplicitSignal), &c).unwrap();
            assert_eq!(perfect.s_sched.to_bits(), explicit.s_sched.to_bits());
            assert_eq!(perfect.eff_off.to_bits(), explicit.eff_off.to_bits());
            assert_eq!(perfect, explicit);
        }
    }

    #[test]
    fn infeasible_configurations_are_errors() {
        let (stations, c) = ctx(3, 64);
        let s = sched(AccessMode::Preemptive, 1, 1);
        assert!(matches!(predict(&stations, &s, &c), Err(CoexError::Infeasible(_))));
        let mut bad = sched(AccessMode::Preemptive, 10, 10);
        bad.t_on = Nanos::from_micros(10_500);
        assert!(bad.validate().is_err());
        let mut res = sched(AccessMode::Opportunistic, 1, 10);
        res.slot_delta = Nanos::from_micros(500);
        res.t_on = Nanos::from_micros(500);
        res.t_res = Nanos::from_micros(500);
        assert!(res.validate().is_ok());
        res.t_res = Nanos::from_micros(600);
        assert!(res.validate().is_err());
    }
}
