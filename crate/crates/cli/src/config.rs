//! Experiment configuration file.
//!
//! TOML with the sections `[phy]`, `[mcs]`, `[stations]`, `[scheduled]`,
//! `[offdist]`, `[sim]` and `[sweep]`; every key is optional. PHY durations
//! are in microseconds, scheduled-side durations in milliseconds, the
//! horizon in seconds and rates in Mb/s.

use std::path::{Path, PathBuf};

use coexsim_core::coexistence::{AccessMode, ScheduledParams, Sensing};
use coexsim_core::csma::StationSet;
use coexsim_core::phy::{McsProfile, PhyParams};
use coexsim_core::sim::{OffDistribution, OffKind, ProbeMode, SimConfig};
use coexsim_core::units::Nanos;
use coexsim_core::CoexError;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Scenario {
    AnalyticOnly,
    PIdleSweep,
    FairThroughputSweep,
    DelayCdf,
    UnsaturatedAirtime,
    ImperfectSensingSweep,
}

impl Scenario {
    pub fn simulates(self) -> bool {
        self != Scenario::AnalyticOnly
    }

    fn needs_scheduled(self) -> bool {
        !matches!(self, Scenario::AnalyticOnly | Scenario::PIdleSweep)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Probe {
    Periodic,
    OnStart,
}

/// A number or a list of numbers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum OneOrMany {
    One(f64),
    Many(Vec<f64>),
}

impl OneOrMany {
    fn expand(&self, n: usize, field: &str) -> Result<Vec<f64>, CliError> {
        match self {
            OneOrMany::One(v) => Ok(vec![*v; n]),
            OneOrMany::Many(v) if v.len() == 1 => Ok(vec![v[0]; n]),
            OneOrMany::Many(v) if v.len() == n => Ok(v.clone()),
            OneOrMany::Many(v) => Err(CliError::field(field, format!("{} values for {n} stations", v.len()))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PhySection {
    pub slot_us: f64,
    pub difs_us: f64,
    pub sifs_us: f64,
    pub plcp_us: f64,
    pub l_service: u64,
    pub l_delimiter: u64,
    pub l_mac_header: u64,
    pub l_tail: u64,
    pub l_ack: u64,
    pub payload_bits: u64,
}

impl Default for PhySection {
    fn default() -> Self {
        let p = PhyParams::default();
        PhySection {
            slot_us: p.slot_sigma.micros(),
            difs_us: p.difs.micros(),
            sifs_us: p.sifs.micros(),
            plcp_us: p.plcp.micros(),
            l_service: p.l_service,
            l_delimiter: p.l_delimiter,
            l_mac_header: p.l_mac_header,
            l_tail: p.l_tail,
            l_ack: p.l_ack,
            payload_bits: p.payload_d,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct McsSection {
    pub bits_per_symbol: u64,
    pub symbol_us: f64,
}

impl Default for McsSection {
    fn default() -> Self {
        let m = McsProfile::default();
        McsSection {
            bits_per_symbol: m.bits_per_symbol,
            symbol_us: m.symbol_duration.micros(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StationsSection {
    pub n: usize,
    pub n_agg: u32,
    pub tau: OneOrMany,
    /// Bits per success; defaults to `payload_bits * n_agg`.
    pub payload_bits: Option<OneOrMany>,
    /// `inf` marks a saturated station.
    pub offered_load_mbps: OneOrMany,
    pub buffer: Option<usize>,
    pub p_e_bar: Option<f64>,
}

impl Default for StationsSection {
    fn default() -> Self {
        StationsSection {
            n: 1,
            n_agg: 1,
            tau: OneOrMany::One(1.0 / 16.0),
            payload_bits: None,
            offered_load_mbps: OneOrMany::One(f64::INFINITY),
            buffer: None,
            p_e_bar: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScheduledSection {
    pub enabled: bool,
    pub mode: AccessMode,
    pub sensing: Sensing,
    pub t_on_ms: f64,
    pub t_off_ms: f64,
    pub delta_ms: f64,
    pub rate_mbps: f64,
    /// Defaults to half of `delta_ms`.
    pub t_res_ms: Option<f64>,
}

impl Default for ScheduledSection {
    fn default() -> Self {
        ScheduledSection {
            enabled: true,
            mode: AccessMode::Preemptive,
            sensing: Sensing::Perfect,
            t_on_ms: 10.0,
            t_off_ms: 10.0,
            delta_ms: 1.0,
            rate_mbps: 75.0,
            t_res_ms: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OffSection {
    pub kind: OffKind,
    pub minimum_ms: f64,
    /// Minimum as a fraction of the mean; overrides `minimum_ms`.
    pub minimum_fraction: Option<f64>,
}

impl Default for OffSection {
    fn default() -> Self {
        OffSection {
            kind: OffKind::UniformQuantized,
            minimum_ms: 0.0,
            minimum_fraction: Some(0.5),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimSection {
    pub scenario: Scenario,
    pub horizon_s: f64,
    pub runs: usize,
    pub seed: u64,
    pub probe: Probe,
    pub probe_ms: f64,
    pub channel_loss: f64,
    /// Threshold of the short-delay fraction in `DelayCdf`.
    pub delay_threshold_ms: f64,
    pub output: Option<PathBuf>,
}

impl Default for SimSection {
    fn default() -> Self {
        SimSection {
            scenario: Scenario::AnalyticOnly,
            horizon_s: 10.0,
            runs: 20,
            seed: 1,
            probe: Probe::Periodic,
            probe_ms: 100.0,
            channel_loss: 0.0,
            delay_threshold_ms: 10.0,
            output: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Axis {
    N,
    NAgg,
    Tau,
    TOnMs,
    TOffMs,
    OfferedLoadMbps,
    RateMbps,
}

impl Axis {
    pub fn name(self) -> &'static str {
        match self {
            Axis::N => "n",
            Axis::NAgg => "n_agg",
            Axis::Tau => "tau",
            Axis::TOnMs => "t_on_ms",
            Axis::TOffMs => "t_off_ms",
            Axis::OfferedLoadMbps => "offered_load_mbps",
            Axis::RateMbps => "rate_mbps",
        }
    }

    fn integral(self) -> bool {
        matches!(self, Axis::N | Axis::NAgg)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSection {
    pub axis: Option<Axis>,
    pub values: Vec<f64>,
    /// Inclusive range `[from, to]` walked with `step`; used when `values` is empty.
    pub from: Option<f64>,
    pub to: Option<f64>,
    pub step: f64,
    /// Access modes to evaluate at every point; defaults to `scheduled.mode`.
    pub modes: Vec<AccessMode>,
}

impl Default for SweepSection {
    fn default() -> Self {
        SweepSection {
            axis: None,
            values: Vec::new(),
            from: None,
            to: None,
            step: 1.0,
            modes: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub phy: PhySection,
    pub mcs: McsSection,
    pub stations: StationsSection,
    pub scheduled: ScheduledSection,
    pub offdist: OffSection,
    pub sim: SimSection,
    pub sweep: SweepSection,
}

/// One fully resolved parameter set.
#[derive(Debug, Clone, PartialEq)]
pub struct Point {
    pub sweep_value: Option<f64>,
    pub mode: AccessMode,
    pub phy: PhyParams,
    pub mcs: McsProfile,
    pub n_agg: u32,
    pub stations: StationSet,
    pub loads: Vec<f64>,
    pub sched: Option<ScheduledParams>,
}

fn micros(v: f64, field: &str) -> Result<Nanos, CliError> {
    duration(v * 1e-6, field)
}

fn millis(v: f64, field: &str) -> Result<Nanos, CliError> {
    duration(v * 1e-3, field)
}

fn duration(secs: f64, field: &str) -> Result<Nanos, CliError> {
    if secs.is_finite() && secs >= 0.0 {
        Ok(Nanos::from_secs_f64(secs))
    } else {
        Err(CliError::field(field, "must be a finite non-negative duration"))
    }
}

/// Prefixes a core validation error with the config section it came from.
fn in_section(section: &str) -> impl Fn(CoexError) -> CliError + '_ {
    move |e| match e {
        CoexError::InvalidParameter { field, reason } => CliError::field(&format!("{section}.{field}"), reason),
        CoexError::ProbabilityOutOfRange { field, value } => {
            CliError::field(&format!("{section}.{field}"), format!("{value} is outside [0, 1]"))
        }
        other => CliError::Validation(other.to_string()),
    }
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| CliError::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Validation(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }

    pub fn phy(&self) -> Result<PhyParams, CliError> {
        let p = &self.phy;
        let phy = PhyParams {
            slot_sigma: micros(p.slot_us, "phy.slot_us")?,
            difs: micros(p.difs_us, "phy.difs_us")?,
            sifs: micros(p.sifs_us, "phy.sifs_us")?,
            plcp: micros(p.plcp_us, "phy.plcp_us")?,
            l_service: p.l_service,
            l_delimiter: p.l_delimiter,
            l_mac_header: p.l_mac_header,
            l_tail: p.l_tail,
            l_ack: p.l_ack,
            payload_d: p.payload_bits,
        };
        phy.validate().map_err(in_section("phy"))?;
        Ok(phy)
    }

    pub fn mcs(&self) -> Result<McsProfile, CliError> {
        let mcs = McsProfile {
            bits_per_symbol: self.mcs.bits_per_symbol,
            symbol_duration: micros(self.mcs.symbol_us, "mcs.symbol_us")?,
        };
        mcs.validate().map_err(in_section("mcs"))?;
        Ok(mcs)
    }

    pub fn modes(&self) -> Vec<AccessMode> {
        if self.sweep.modes.is_empty() {
            vec![self.scheduled.mode]
        } else {
            self.sweep.modes.clone()
        }
    }

    /// Sweep values, or a single `None` without a sweep axis.
    pub fn sweep_values(&self) -> Result<Vec<Option<f64>>, CliError> {
        let Some(axis) = self.sweep.axis else {
            return Ok(vec![None]);
        };
        let values = if !self.sweep.values.is_empty() {
            self.sweep.values.clone()
        } else {
            let (Some(from), Some(to)) = (self.sweep.from, self.sweep.to) else {
                return Err(CliError::field("sweep.values", "give `values` or both `from` and `to`"));
            };
            let step = self.sweep.step;
            if !(step > 0.0) || !(to >= from) || !from.is_finite() || !to.is_finite() {
                return Err(CliError::field("sweep.step", "need from <= to and a positive step"));
            }
            let count = ((to - from) / step + 1e-9).floor() as usize + 1;
            (0..count).map(|i| from + i as f64 * step).collect()
        };
        if axis.integral() && values.iter().any(|v| v.fract() != 0.0 || *v < 1.0) {
            return Err(CliError::field(
                "sweep.values",
                format!("`{}` takes positive integers", axis.name()),
            ));
        }
        Ok(values.into_iter().map(Some).collect())
    }

    /// Every (sweep value, mode) point, resolved and validated.
    pub fn points(&self) -> Result<Vec<Point>, CliError> {
        let mut out = Vec::new();
        for value in self.sweep_values()? {
            for mode in self.modes() {
                out.push(self.point(value, mode)?);
            }
        }
        Ok(out)
    }

    pub fn point(&self, value: Option<f64>, mode: AccessMode) -> Result<Point, CliError> {
        let mut st = self.stations.clone();
        let mut sc = self.scheduled.clone();
        sc.mode = mode;
        let mut load_override = None;
        if let (Some(axis), Some(v)) = (self.sweep.axis, value) {
            match axis {
                Axis::N => st.n = v as usize,
                Axis::NAgg => st.n_agg = v as u32,
                Axis::Tau => st.tau = OneOrMany::One(v),
                Axis::TOnMs => sc.t_on_ms = v,
                Axis::TOffMs => sc.t_off_ms = v,
                Axis::OfferedLoadMbps => load_override = Some(v),
                Axis::RateMbps => sc.rate_mbps = v,
            }
        }
        let phy = self.phy()?;
        let mcs = self.mcs()?;
        if st.n == 0 {
            return Err(CliError::field("stations.n", "need at least one station"));
        }
        if st.n_agg == 0 {
            return Err(CliError::field("stations.n_agg", "at least one MPDU per frame"));
        }
        let taus = st.tau.expand(st.n, "stations.tau")?;
        let payloads = match &st.payload_bits {
            Some(p) => p
                .expand(st.n, "stations.payload_bits")?
                .into_iter()
                .map(|b| {
                    if b >= 0.0 && b.fract() == 0.0 {
                        Ok(b as u64)
                    } else {
                        Err(CliError::field("stations.payload_bits", "must be whole bits"))
                    }
                })
                .collect::<Result<Vec<_>, _>>()?,
            None => vec![phy.payload_d * u64::from(st.n_agg); st.n],
        };
        let stations = StationSet::new(taus, payloads).map_err(in_section("stations"))?;
        let mut loads: Vec<f64> = st
            .offered_load_mbps
            .expand(st.n, "stations.offered_load_mbps")?
            .into_iter()
            .map(|l| l * 1e6)
            .collect();
        if loads.iter().any(|l| l.is_nan() || *l < 0.0) {
            return Err(CliError::field(
                "stations.offered_load_mbps",
                "loads must be non-negative",
            ));
        }
        if let Some(v) = load_override {
            if !(v >= 0.0) {
                return Err(CliError::field("sweep.values", "offered loads must be non-negative"));
            }
            for l in loads.iter_mut().filter(|l| l.is_finite()) {
                *l = v * 1e6;
            }
        }
        let sched = if sc.enabled {
            let delta = millis(sc.delta_ms, "scheduled.delta_ms")?;
            let mut s = ScheduledParams::new(
                sc.mode,
                millis(sc.t_on_ms, "scheduled.t_on_ms")?,
                millis(sc.t_off_ms, "scheduled.t_off_ms")?,
                delta,
            )
            .with_sensing(sc.sensing);
            s.rate_r = sc.rate_mbps * 1e6;
            if let Some(r) = sc.t_res_ms {
                s.t_res = millis(r, "scheduled.t_res_ms")?;
            }
            s.validate().map_err(in_section("scheduled"))?;
            Some(s)
        } else {
            None
        };
        Ok(Point {
            sweep_value: value,
            mode,
            phy,
            mcs,
            n_agg: st.n_agg,
            stations,
            loads,
            sched,
        })
    }

    /// Simulator input for `point` with the scheduled side replaced by `sched`.
    pub fn sim_config(&self, point: &Point, sched: Option<ScheduledParams>) -> Result<SimConfig, CliError> {
        let s = &self.sim;
        let horizon = duration(s.horizon_s, "sim.horizon_s")?;
        let mut cfg = SimConfig::csma_only(
            point.phy,
            point.mcs,
            point.n_agg,
            point.stations.clone(),
            horizon,
            s.seed,
        );
        cfg.arrival_rates = point.loads.clone();
        cfg.buffer_capacity = self.stations.buffer;
        cfg.channel_loss = s.channel_loss;
        cfg.probe = match s.probe {
            Probe::Periodic => ProbeMode::Periodic {
                period: millis(s.probe_ms, "sim.probe_ms")?,
            },
            Probe::OnStart => ProbeMode::OnStart,
        };
        if let Some(sched) = sched {
            let minimum = match self.offdist.minimum_fraction {
                Some(f) if (0.0..=1.0).contains(&f) => Nanos::from_secs_f64(sched.mean_t_off.secs() * f),
                Some(_) => return Err(CliError::field("offdist.minimum_fraction", "must lie in [0, 1]")),
                None => millis(self.offdist.minimum_ms, "offdist.minimum_ms")?,
            };
            cfg.off_dist = OffDistribution {
                kind: self.offdist.kind,
                mean: sched.mean_t_off,
                minimum,
                quantum: sched.slot_delta,
            };
            cfg.sched = Some(sched);
        }
        cfg.validate().map_err(in_section("sim"))?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.sim.runs == 0 {
            return Err(CliError::field("sim.runs", "at least one run"));
        }
        if self.sim.scenario.needs_scheduled() && !self.scheduled.enabled {
            return Err(CliError::field(
                "scheduled.enabled",
                format!("{:?} needs the scheduled transmitter", self.sim.scenario),
            ));
        }
        if self.sim.scenario == Scenario::UnsaturatedAirtime && self.stations.buffer.is_none() {
            log::info!("UnsaturatedAirtime without stations.buffer simulates unbounded queues");
        }
        if !(self.sim.delay_threshold_ms >= 0.0) {
            return Err(CliError::field("sim.delay_threshold_ms", "must be non-negative"));
        }
        for p in self.points()? {
            if self.sim.scenario.simulates() {
                self.sim_config(&p, p.sched)?;
            }
        }
        Ok(())
    }
}
