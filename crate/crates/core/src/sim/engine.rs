use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;

use super::report::{Airtime, SimReport};
use super::{ProbeMode, SimConfig};
use crate::coexistence::{AccessMode, ScheduledParams, Sensing};
use crate::error::Result;
use crate::phy::FrameTimings;
use crate::units::Nanos;

const STREAM_SCHED: u64 = 0;
const STREAM_LOSS: u64 = 1;

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Label {
    Idle,
    Success,
    Collision,
    SchedData,
    Reservation,
    InterTech,
    Partial,
}

/// Labels every instant of `[0, horizon)` exactly once and samples the
/// periodic probes on the way.
struct Timeline {
    horizon: u64,
    cursor: u64,
    totals: [u64; 7],
    probe_period: Option<u64>,
    next_probe: u64,
    probes: u64,
    idle_probes: u64,
}

impl Timeline {
    fn new(horizon: Nanos, probe: ProbeMode) -> Self {
        let probe_period = match probe {
            ProbeMode::Periodic { period } => Some(period.as_nanos()),
            ProbeMode::OnStart => None,
        };
        Timeline {
            horizon: horizon.as_nanos(),
            cursor: 0,
            totals: [0; 7],
            probe_period,
            // The channel state at time zero is not a steady-state sample.
            next_probe: probe_period.unwrap_or(0),
            probes: 0,
            idle_probes: 0,
        }
    }

    /// `[start, end)` carries `label`; the channel is busy up to `busy_end`.
    fn emit(&mut self, start: Nanos, end: Nanos, label: Label, busy_end: Nanos) {
        debug_assert_eq!(start.as_nanos(), self.cursor, "timeline gap");
        debug_assert!(end >= start);
        self.cursor = end.as_nanos();
        let s = start.as_nanos().min(self.horizon);
        let e = end.as_nanos().min(self.horizon);
        self.totals[label as usize] += e - s;
        if let Some(period) = self.probe_period {
            while self.next_probe < e {
                self.probes += 1;
                if self.next_probe >= busy_end.as_nanos() {
                    self.idle_probes += 1;
                }
                self.next_probe += period;
            }
        }
    }

    fn fraction(&self, label: Label) -> f64 {
        self.totals[label as usize] as f64 / self.horizon as f64
    }
}

#[allow(clippy::large_enum_variant)]
enum Traffic {
    Saturated,
    Poisson {
        rng: ChaCha8Rng,
        /// Mean inter-arrival time in ns; infinite when the load is zero.
        mean_gap: f64,
        next: f64,
        queued: usize,
        capacity: Option<usize>,
    },
}

struct Station {
    tau: f64,
    payload: u64,
    attempts: ChaCha8Rng,
    traffic: Traffic,
    /// Instant the current head-of-line frame got there.
    hol_since: Option<Nanos>,
    offered_bits: u64,
    delivered_bits: u64,
    dropped: u64,
    max_queue: usize,
}

impl Station {
    fn advance_arrivals(&mut self, t: Nanos) {
        let Traffic::Poisson {
            rng,
            mean_gap,
            next,
            queued,
            capacity,
        } = &mut self.traffic
        else {
            return;
        };
        while *next <= t.as_nanos() as f64 {
            self.offered_bits += self.payload;
            if capacity.is_none_or(|c| *queued < c) {
                *queued += 1;
                if *queued == 1 {
                    self.hol_since = Some(Nanos(next.ceil() as u64));
                }
                self.max_queue = self.max_queue.max(*queued);
            } else {
                self.dropped += 1;
            }
            let e: f64 = rng.sample(Exp1);
            *next += e * *mean_gap;
        }
    }

    fn backlogged(&self) -> bool {
        self.hol_since.is_some()
    }

    fn depart(&mut self, end: Nanos) {
        match &mut self.traffic {
            Traffic::Saturated => self.hol_since = Some(end),
            Traffic::Poisson { queued, .. } => {
                *queued -= 1;
                self.hol_since = (*queued > 0).then_some(end);
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum SlotKind {
    Idle,
    Success(usize),
    Collision,
}

#[derive(Debug, Clone, Copy)]
struct Slot {
    start: Nanos,
    kind: SlotKind,
    len: Nanos,
    on_air: Nanos,
}

impl Slot {
    fn end(&self) -> Nanos {
        self.start + self.len
    }

    fn air_end(&self) -> Nanos {
        self.start + self.on_air
    }
}

#[derive(Default)]
struct EpochStats {
    epochs: u64,
    collisions: u64,
    off_total: u64,
    full_total: u64,
    lost_on_total: u64,
    reservation_total: u64,
}

struct Engine<'a> {
    cfg: &'a SimConfig,
    horizon: Nanos,
    sigma: Nanos,
    busy: Nanos,
    t_b: Nanos,
    t_fra: Nanos,
    stations: Vec<Station>,
    loss_rng: ChaCha8Rng,
    timeline: Timeline,
    t: Nanos,
    slots: u64,
    /// Time spent in complete CSMA slots.
    full_slot_time: u64,
    delays: Vec<Nanos>,
    epoch: EpochStats,
}

impl<'a> Engine<'a> {
    fn new(cfg: &'a SimConfig) -> Result<Self> {
        let timings = FrameTimings::new(&cfg.phy, &cfg.mcs, cfg.n_agg)?;
        let stations = (0..cfg.stations.n())
            .map(|j| {
                let rate = cfg.arrival_rates[j];
                let payload = cfg.stations.payloads[j];
                let (traffic, hol_since) = if rate.is_infinite() {
                    (Traffic::Saturated, Some(Nanos::ZERO))
                } else {
                    let mut rng = stream(cfg.seed, 3 + 2 * j as u64);
                    let mean_gap = if rate > 0.0 {
                        payload as f64 / rate * 1e9
                    } else {
                        f64::INFINITY
                    };
                    let e: f64 = rng.sample(Exp1);
                    let traffic = Traffic::Poisson {
                        rng,
                        mean_gap,
                        next: e * mean_gap,
                        queued: 0,
                        capacity: cfg.buffer_capacity,
                    };
                    (traffic, None)
                };
                Station {
                    tau: cfg.stations.taus[j],
                    payload,
                    attempts: stream(cfg.seed, 2 + 2 * j as u64),
                    traffic,
                    hol_since,
                    offered_bits: 0,
                    delivered_bits: 0,
                    dropped: 0,
                    max_queue: 0,
                }
            })
            .collect();
        Ok(Engine {
            cfg,
            horizon: cfg.horizon,
            sigma: cfg.phy.slot_sigma,
            busy: timings.busy_slot(&cfg.phy),
            t_b: timings.t_b,
            t_fra: timings.t_fra,
            stations,
            loss_rng: stream(cfg.seed, STREAM_LOSS),
            timeline: Timeline::new(cfg.horizon, cfg.probe),
            t: Nanos::ZERO,
            slots: 0,
            full_slot_time: 0,
            delays: Vec::new(),
            epoch: EpochStats::default(),
        })
    }

    fn draw(&mut self, start: Nanos) -> Slot {
        self.slots += 1;
        let mut first = None;
        let mut count = 0;
        for (j, st) in self.stations.iter_mut().enumerate() {
            st.advance_arrivals(start);
            if st.backlogged() && st.attempts.random::<f64>() < st.tau {
                count += 1;
                first.get_or_insert(j);
            }
        }
        match (count, first) {
            (0, _) => Slot {
                start,
                kind: SlotKind::Idle,
                len: self.sigma,
                on_air: Nanos::ZERO,
            },
            (1, Some(j)) => Slot {
                start,
                kind: SlotKind::Success(j),
                len: self.busy,
                on_air: self.t_b,
            },
            _ => Slot {
                start,
                kind: SlotKind::Collision,
                len: self.busy,
                on_air: self.t_fra,
            },
        }
    }

    /// Delivers station `j`'s frame unless the channel drops it.
    fn deliver(&mut self, j: usize, slot: &Slot) -> bool {
        let st = &mut self.stations[j];
        st.advance_arrivals(slot.end());
        if self.cfg.channel_loss > 0.0 && self.loss_rng.random::<f64>() < self.cfg.channel_loss {
            return false;
        }
        if slot.end() <= self.horizon {
            st.delivered_bits += st.payload;
            let hol = st.hol_since.expect("a transmitting station is backlogged");
            self.delays.push(slot.start.saturating_sub(hol));
        }
        st.depart(slot.end());
        true
    }

    /// Runs `slot` to its end as an ordinary CSMA slot.
    fn complete(&mut self, slot: Slot) {
        let label = match slot.kind {
            SlotKind::Idle => Label::Idle,
            SlotKind::Success(j) => {
                if self.deliver(j, &slot) {
                    Label::Success
                } else {
                    Label::Collision
                }
            }
            SlotKind::Collision => Label::Collision,
        };
        self.timeline.emit(slot.start, slot.end(), label, slot.air_end());
        self.full_slot_time += slot.len.as_nanos();
        self.t = slot.end();
    }

    fn run_free_until(&mut self, limit: Nanos) {
        while self.t < limit {
            let slot = self.draw(self.t);
            self.complete(slot);
        }
    }

    /// Stations keep contending through an unannounced on period; every
    /// frame they send is lost. Returns the first CSMA slot boundary at or
    /// after `on_end`.
    fn unannounced(&mut self, mut last: Slot, on_end: Nanos) -> Nanos {
        while last.end() < on_end {
            last = self.draw(last.end());
        }
        self.tail(last, on_end)
    }

    /// Labels the part of `slot` that outlives the on period.
    fn tail(&mut self, slot: Slot, on_end: Nanos) -> Nanos {
        if slot.end() > on_end {
            self.timeline.emit(on_end, slot.end(), Label::Partial, slot.air_end());
            slot.end()
        } else {
            on_end
        }
    }

    fn emit_on(&mut self, start: Nanos, reservation: Nanos, lost: Nanos, on_end: Nanos) {
        let data = start + reservation;
        self.timeline.emit(start, data, Label::Reservation, data);
        self.timeline.emit(data, data + lost, Label::InterTech, data + lost);
        self.timeline.emit(data + lost, on_end, Label::SchedData, on_end);
        self.epoch.lost_on_total += (reservation + lost).as_nanos();
        self.epoch.reservation_total += reservation.as_nanos();
    }

    fn record_off(&mut self, off_start: Nanos, start: Nanos, full_before: u64, collided: bool) {
        self.epoch.epochs += 1;
        self.epoch.collisions += u64::from(collided);
        self.epoch.off_total += (start - off_start).as_nanos();
        self.epoch.full_total += self.full_slot_time - full_before;
    }

    fn run_preemptive(&mut self, sched: &ScheduledParams) {
        let mut sampler = stream(self.cfg.seed, STREAM_SCHED);
        let grid = self.cfg.off_dist.quantum;
        let mut nominal = self.cfg.off_dist.sample(&mut sampler);
        let mut off_start = Nanos::ZERO;
        loop {
            let s = Nanos(nominal.round() as u64).round_to(grid).max(self.t.ceil_to(grid));
            if s >= self.horizon {
                break;
            }
            let full_before = self.full_slot_time;
            let straddle = loop {
                if self.t >= s {
                    break None;
                }
                let slot = self.draw(self.t);
                if slot.end() <= s {
                    self.complete(slot);
                } else {
                    break Some(slot);
                }
            };
            let hit = straddle.is_some_and(|sl| sl.air_end() > s);
            self.record_off(off_start, s, full_before, hit);
            let on_end = s + sched.t_on;
            if let Some(sl) = straddle {
                self.timeline.emit(sl.start, s, Label::Partial, sl.air_end());
                if let (SlotKind::Success(j), false) = (sl.kind, hit) {
                    self.deliver(j, &sl);
                }
            }
            let unannounced = hit && sched.sensing == Sensing::ExplicitSignal;
            self.t = match straddle {
                Some(sl) if unannounced => {
                    self.emit_on(s, Nanos::ZERO, sched.t_on, on_end);
                    self.unannounced(sl, on_end)
                }
                Some(sl) => {
                    let lost = if hit {
                        (sl.air_end() - s).ceil_to(sched.slot_delta).min(sched.t_on)
                    } else {
                        Nanos::ZERO
                    };
                    self.emit_on(s, Nanos::ZERO, lost, on_end);
                    self.tail(sl, on_end)
                }
                None => {
                    self.emit_on(s, Nanos::ZERO, Nanos::ZERO, on_end);
                    on_end
                }
            };
            off_start = on_end;
            nominal += (sched.t_on.as_nanos() as f64) + self.cfg.off_dist.sample(&mut sampler);
        }
        self.run_free_until(self.horizon);
    }

    fn run_opportunistic(&mut self, sched: &ScheduledParams) {
        let mut sampler = stream(self.cfg.seed, STREAM_SCHED);
        let delta = sched.slot_delta;
        let mut nominal = self.cfg.off_dist.sample(&mut sampler);
        let mut off_start = Nanos::ZERO;
        loop {
            let target = Nanos(nominal.round() as u64).max(self.t);
            if target >= self.horizon {
                break;
            }
            let full_before = self.full_slot_time;
            self.run_free_until(target);
            let b = self.t;
            if b >= self.horizon {
                break;
            }
            let claim = self.draw(b);
            let hit = claim.kind != SlotKind::Idle;
            self.record_off(off_start, b, full_before, hit);
            let reservation = Nanos((delta.as_nanos() - b.as_nanos() % delta.as_nanos()) % delta.as_nanos());
            let on_end = b + sched.t_on;
            let data_len = sched.t_on - reservation;
            self.t = if !hit {
                self.emit_on(b, reservation, Nanos::ZERO, on_end);
                on_end
            } else if sched.sensing == Sensing::ExplicitSignal {
                self.emit_on(b, reservation, data_len, on_end);
                self.unannounced(claim, on_end)
            } else {
                let overlap = claim.air_end().saturating_sub(b + reservation);
                let lost = overlap.ceil_to(delta).min(data_len);
                self.emit_on(b, reservation, lost, on_end);
                self.tail(claim, on_end)
            };
            off_start = on_end;
            nominal += (sched.t_on.as_nanos() as f64) + self.cfg.off_dist.sample(&mut sampler);
        }
        self.run_free_until(self.horizon);
    }

    fn finish(self) -> SimReport {
        let h = self.horizon.secs();
        let tl = &self.timeline;
        let ep = &self.epoch;
        let per_epoch = |total: u64| {
            if ep.epochs == 0 {
                0.0
            } else {
                total as f64 * 1e-9 / ep.epochs as f64
            }
        };
        let collision_frac = if ep.epochs == 0 {
            0.0
        } else {
            ep.collisions as f64 / ep.epochs as f64
        };
        let p_idle_emp = match self.cfg.probe {
            ProbeMode::Periodic { .. } if tl.probes > 0 => tl.idle_probes as f64 / tl.probes as f64,
            ProbeMode::Periodic { .. } => 1.0,
            ProbeMode::OnStart => 1.0 - collision_frac,
        };
        let rate_r = self.cfg.sched.map_or(0.0, |s| s.rate_r);
        let mean_off_emp = per_epoch(ep.off_total);
        let eff_off_emp = per_epoch(ep.full_total);
        SimReport {
            s_csma_emp: self.stations.iter().map(|s| s.delivered_bits as f64 / h).collect(),
            s_sched_emp: rate_r * tl.fraction(Label::SchedData),
            p_idle_emp,
            airtime: Airtime {
                idle: tl.fraction(Label::Idle),
                csma_success: tl.fraction(Label::Success),
                csma_collision: tl.fraction(Label::Collision),
                sched_data: tl.fraction(Label::SchedData),
                sched_reservation: tl.fraction(Label::Reservation),
                inter_tech_collision: tl.fraction(Label::InterTech),
                partial_slot: tl.fraction(Label::Partial),
            },
            delay_samples: self.delays,
            slots_simulated: self.slots,
            epochs: ep.epochs,
            on_start_collision_frac: collision_frac,
            mean_off_emp,
            eff_off_emp,
            c1_emp: mean_off_emp - eff_off_emp,
            c2_emp: per_epoch(ep.lost_on_total),
            mean_reservation: per_epoch(ep.reservation_total),
            offered_bits: self.stations.iter().map(|s| s.offered_bits).collect(),
            delivered_bits: self.stations.iter().map(|s| s.delivered_bits).collect(),
            dropped_frames: self.stations.iter().map(|s| s.dropped).collect(),
            max_queue: self.stations.iter().map(|s| s.max_queue).collect(),
        }
    }
}

/// One deterministic run of `cfg`.
pub fn run(cfg: &SimConfig) -> Result<SimReport> {
    cfg.validate()?;
    let mut engine = Engine::new(cfg)?;
    match cfg.sched {
        None => engine.run_free_until(cfg.horizon),
        Some(sched) => match sched.mode {
            AccessMode::Preemptive => engine.run_preemptive(&sched),
            AccessMode::Opportunistic => engine.run_opportunistic(&sched),
        },
    }
    Ok(engine.finish())
}
