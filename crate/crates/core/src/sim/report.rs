use serde::{Deserialize, Serialize};

use crate::units::Nanos;

/// Partition of the simulated time, as fractions of the horizon.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Airtime {
    pub idle: f64,
    pub csma_success: f64,
    /// CSMA collisions and frames lost to the channel.
    pub csma_collision: f64,
    pub sched_data: f64,
    pub sched_reservation: f64,
    /// On-period time wasted by overlap with CSMA frames.
    pub inter_tech_collision: f64,
    /// Pieces of CSMA slots cut by an on period.
    pub partial_slot: f64,
}

impl Airtime {
    pub fn sum(&self) -> f64 {
        self.idle
            + self.csma_success
            + self.csma_collision
            + self.sched_data
            + self.sched_reservation
            + self.inter_tech_collision
            + self.partial_slot
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimReport {
    pub s_csma_emp: Vec<f64>,
    pub s_sched_emp: f64,
    pub p_idle_emp: f64,
    pub airtime: Airtime,
    /// Head-of-line to start of the successful transmission, per delivered frame.
    pub delay_samples: Vec<Nanos>,
    pub slots_simulated: u64,
    /// Scheduled epochs started inside the horizon.
    pub epochs: u64,
    pub on_start_collision_frac: f64,
    /// Mean realised off period and its part made of complete CSMA slots, s.
    pub mean_off_emp: f64,
    pub eff_off_emp: f64,
    /// Mean off-period loss per epoch, s.
    pub c1_emp: f64,
    /// Mean on-period time without scheduled data per epoch, s.
    pub c2_emp: f64,
    pub mean_reservation: f64,
    pub offered_bits: Vec<u64>,
    pub delivered_bits: Vec<u64>,
    pub dropped_frames: Vec<u64>,
    pub max_queue: Vec<usize>,
}

impl SimReport {
    pub fn mean_delay(&self) -> f64 {
        if self.delay_samples.is_empty() {
            return 0.0;
        }
        self.delay_samples.iter().map(|d| d.secs()).sum::<f64>() / self.delay_samples.len() as f64
    }

    pub fn total_csma(&self) -> f64 {
        self.s_csma_emp.iter().sum()
    }
}
