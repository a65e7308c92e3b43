//! MAC-slot simulator of the shared channel.
//!
//! CSMA stations advance through idle (`sigma`) and busy (`T_b + DIFS`)
//! slots, drawing an independent attempt per backlogged station per slot.
//! The scheduled transmitter alternates on and off periods on top of that.
//!
//! Random streams (ChaCha8, one stream each, all keyed by the run seed):
//! 0 scheduled transmitter, 1 channel loss, `2 + 2j` attempts of station
//! `j`, `3 + 2j` arrivals of station `j`.

mod engine;
mod ensemble;
mod report;

pub use engine::run;
pub use ensemble::{run_ensemble, EnsembleReport, Stat};
pub use report::{Airtime, SimReport};

use rand::Rng;
use rand_distr::Exp1;
use serde::{Deserialize, Serialize};

use crate::coexistence::ScheduledParams;
use crate::csma::StationSet;
use crate::error::{check_probability, CoexError, Result};
use crate::phy::{McsProfile, PhyParams};
use crate::units::Nanos;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum OffKind {
    Deterministic,
    UniformQuantized,
    ExponentialQuantized,
}

/// Law of the off period. Uniform samples span `[minimum, 2 mean - minimum]`
/// and exponential ones are `minimum + Exp(mean - minimum)`, so both keep the
/// configured mean.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OffDistribution {
    pub kind: OffKind,
    pub mean: Nanos,
    pub minimum: Nanos,
    /// Grid the duty-cycled transmitter starts on, normally `delta`.
    pub quantum: Nanos,
}

impl OffDistribution {
    pub fn deterministic(mean: Nanos, quantum: Nanos) -> Self {
        OffDistribution {
            kind: OffKind::Deterministic,
            mean,
            minimum: Nanos::ZERO,
            quantum,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.quantum.is_zero() {
            return Err(CoexError::invalid("quantum", "must be positive"));
        }
        if self.kind != OffKind::Deterministic && self.minimum > self.mean {
            return Err(CoexError::invalid("minimum", "cannot exceed the mean"));
        }
        Ok(())
    }

    /// One unrounded sample in nanoseconds.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let mean = self.mean.as_nanos() as f64;
        let min = self.minimum.as_nanos() as f64;
        match self.kind {
            OffKind::Deterministic => mean,
            OffKind::UniformQuantized => min + 2.0 * (mean - min) * rng.random::<f64>(),
            OffKind::ExponentialQuantized => {
                let e: f64 = rng.sample(Exp1);
                min + (mean - min) * e
            }
        }
    }
}

/// How `p_idle_emp` is sampled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ProbeMode {
    /// At `period, 2 period, ...`; the channel is busy while a CSMA frame
    /// is on the air or the scheduled transmitter is on.
    Periodic { period: Nanos },
    /// At every scheduled epoch start, counting it idle when the start does
    /// not meet a CSMA transmission.
    OnStart,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub phy: PhyParams,
    pub mcs: McsProfile,
    pub n_agg: u32,
    /// `payloads` are the bits credited per successful transmission.
    pub stations: StationSet,
    /// `None` simulates the CSMA stations alone.
    pub sched: Option<ScheduledParams>,
    pub off_dist: OffDistribution,
    pub horizon: Nanos,
    pub seed: u64,
    /// Frames a station can hold, head of line included; `None` is unbounded.
    pub buffer_capacity: Option<usize>,
    /// Offered load per station in bits/s; infinite means saturated.
    pub arrival_rates: Vec<f64>,
    pub channel_loss: f64,
    pub probe: ProbeMode,
}

impl SimConfig {
    /// Saturated stations, no scheduled transmitter, 100 ms probes.
    pub fn csma_only(
        phy: PhyParams,
        mcs: McsProfile,
        n_agg: u32,
        stations: StationSet,
        horizon: Nanos,
        seed: u64,
    ) -> Self {
        let n = stations.n();
        SimConfig {
            phy,
            mcs,
            n_agg,
            stations,
            sched: None,
            off_dist: OffDistribution::deterministic(Nanos::ZERO, Nanos::from_millis(1)),
            horizon,
            seed,
            buffer_capacity: None,
            arrival_rates: vec![f64::INFINITY; n],
            channel_loss: 0.0,
            probe: ProbeMode::Periodic {
                period: Nanos::from_millis(100),
            },
        }
    }

    /// Saturated stations sharing the channel with `sched`; the off law's
    /// mean is taken from `sched.mean_t_off`.
    pub fn with_scheduled(mut self, sched: ScheduledParams, kind: OffKind, minimum: Nanos) -> Self {
        self.off_dist = OffDistribution {
            kind,
            mean: sched.mean_t_off,
            minimum,
            quantum: sched.slot_delta,
        };
        self.sched = Some(sched);
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.phy.validate()?;
        self.mcs.validate()?;
        self.stations.validate()?;
        if self.n_agg == 0 {
            return Err(CoexError::invalid("n_agg", "at least one MPDU per frame"));
        }
        if self.horizon.is_zero() {
            return Err(CoexError::invalid("horizon", "must be positive"));
        }
        if self.arrival_rates.len() != self.stations.n() {
            return Err(CoexError::invalid(
                "arrival_rates",
                format!("{} rates for {} stations", self.arrival_rates.len(), self.stations.n()),
            ));
        }
        if self.arrival_rates.iter().any(|r| r.is_nan() || *r < 0.0) {
            return Err(CoexError::invalid("arrival_rates", "rates must be non-negative"));
        }
        for (j, (&rate, &d)) in self.arrival_rates.iter().zip(&self.stations.payloads).enumerate() {
            if rate.is_finite() && rate > 0.0 && d == 0 {
                return Err(CoexError::invalid(
                    "payloads",
                    format!("station {j} has traffic but a zero payload"),
                ));
            }
        }
        if self.buffer_capacity == Some(0) {
            return Err(CoexError::invalid("buffer_capacity", "must hold at least one frame"));
        }
        check_probability("channel_loss", self.channel_loss)?;
        match self.probe {
            ProbeMode::Periodic { period } if period.is_zero() => {
                return Err(CoexError::invalid("probe_period", "must be positive"));
            }
            ProbeMode::OnStart if self.sched.is_none() => {
                return Err(CoexError::invalid(
                    "probe",
                    "on-start probing needs a scheduled transmitter",
                ));
            }
            _ => {}
        }
        if let Some(sched) = &self.sched {
            sched.validate()?;
            self.off_dist.validate()?;
            if self.horizon < sched.t_on + self.off_dist.mean {
                return Err(CoexError::invalid("horizon", "shorter than one on/off cycle"));
            }
        }
        Ok(())
    }
}
