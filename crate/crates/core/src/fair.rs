//! Proportional-fair split of airtime between the scheduled transmitter and
//! the CSMA stations.
//!
//! With every station saturated the optimum has a closed form. When some
//! stations are capped by their offered load the optimum is found from the
//! KKT system by an active-set iteration over the saturated set `C`.
//!
//! Notation: `T = T_on + c1`, `z` is the effective off time, and
//! `x_j = tau_j / (1 - tau_j)`. Station `j` then receives
//! `x_j p_e D_j / E[M] * z / (T + z)` and the idle-probability constraint is
//! `prod_j (1 + x_j) <= 1 / p_e`.

use serde::{Deserialize, Serialize};

use crate::coexistence::{heterogeneity_costs, predict, ChannelContext, ScheduledParams, ThroughputPrediction};
use crate::csma::StationSet;
use crate::error::{check_probability, CoexError, Result};
use crate::phy::{FrameTimings, PhyParams};
use crate::units::Nanos;

const MAX_ITERATIONS: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FairAllocation {
    /// Optimal mean off time in seconds.
    pub t_off_star: f64,
    pub frac_csma: f64,
    pub frac_sched: f64,
    pub z_star: f64,
}

impl FairAllocation {
    fn from_z(t_on: f64, c1: f64, z: f64) -> Self {
        let t = t_on + c1;
        let cycle = t + z;
        FairAllocation {
            t_off_star: z + c1,
            frac_csma: z / cycle,
            frac_sched: t / cycle,
            z_star: z,
        }
    }
}

pub fn saturated_fair_off_time(n: usize, t_on: f64, c1: f64) -> Result<FairAllocation> {
    if n == 0 {
        return Err(CoexError::invalid("n", "need at least one station"));
    }
    if !(t_on > 0.0) {
        return Err(CoexError::invalid("t_on", "must be positive"));
    }
    if !(c1 >= 0.0) {
        return Err(CoexError::invalid("c1", "must be non-negative"));
    }
    Ok(FairAllocation::from_z(t_on, c1, n as f64 * (t_on + c1)))
}

/// `sched` with its mean off time set to the saturated optimum for its own
/// `c1`, together with the allocation and the resulting prediction.
pub fn saturated_fair_config(
    stations: &StationSet,
    sched: &ScheduledParams,
    ctx: &ChannelContext,
) -> Result<(ScheduledParams, FairAllocation, ThroughputPrediction)> {
    let costs = heterogeneity_costs(sched, ctx)?;
    let alloc = saturated_fair_off_time(stations.n(), sched.t_on.secs(), costs.c1)?;
    let fair = sched.with_mean_t_off(Nanos::from_secs_f64(alloc.t_off_star));
    let prediction = predict(stations, &fair, ctx)?;
    Ok((fair, alloc, prediction))
}

/// Offered load per station in bits/s; `f64::INFINITY` marks a saturated one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnsaturatedSpec {
    pub offered_loads: Vec<f64>,
    pub p_e_bar: f64,
}

impl UnsaturatedSpec {
    /// `p_e_bar` defaults to the idle probability implied by the stations' taus.
    pub fn new(offered_loads: Vec<f64>, p_e_bar: Option<f64>, stations: &StationSet) -> Result<Self> {
        let p_e_bar = p_e_bar.unwrap_or_else(|| stations.taus.iter().map(|t| 1.0 - t).product());
        let spec = UnsaturatedSpec { offered_loads, p_e_bar };
        spec.validate(stations.n())?;
        Ok(spec)
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        if self.offered_loads.len() != n {
            return Err(CoexError::invalid(
                "offered_loads",
                format!("{} loads for {} stations", self.offered_loads.len(), n),
            ));
        }
        if self.offered_loads.iter().any(|l| l.is_nan() || *l < 0.0) {
            return Err(CoexError::invalid("offered_loads", "loads must be non-negative"));
        }
        if !self.offered_loads.iter().any(|l| l.is_infinite()) {
            return Err(CoexError::invalid(
                "offered_loads",
                "at least one station must be saturated",
            ));
        }
        check_probability("p_e_bar", self.p_e_bar)?;
        if self.p_e_bar <= 0.0 || self.p_e_bar >= 1.0 {
            return Err(CoexError::invalid("p_e_bar", "must lie strictly between 0 and 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActivityFactors {
    pub lambdas: Vec<f64>,
    pub saturated_set: Vec<usize>,
    pub n_eq: f64,
    pub x_stars: Vec<f64>,
    /// Multiplier of the idle-probability constraint; every station satisfies
    /// `lambda_j = gamma x_j / (1 + x_j)`.
    pub gamma_star: f64,
}

impl ActivityFactors {
    pub fn taus(&self) -> Vec<f64> {
        self.x_stars.iter().map(|x| x / (1.0 + x)).collect()
    }

    fn in_c(&self, j: usize) -> bool {
        self.saturated_set.contains(&j)
    }
}

/// Inputs of the mixed problem that do not change during the iteration.
#[derive(Debug, Clone, Copy)]
struct Problem<'a> {
    t: f64,
    t_on: f64,
    c1: f64,
    p_e_bar: f64,
    /// `E[M]` at `p_e_bar`.
    c4: f64,
    loads: &'a [f64],
    payloads: &'a [u64],
}

impl Problem<'_> {
    fn n(&self) -> usize {
        self.loads.len()
    }

    /// The `x_j` at which station `j` exactly meets its load, as `a_j (T + z) / z`.
    fn load_coefficient(&self, j: usize) -> f64 {
        let d = self.payloads[j] as f64;
        if self.loads[j] == 0.0 {
            0.0
        } else {
            self.loads[j] * self.c4 / (self.p_e_bar * d)
        }
    }

    fn x_at_load(&self, j: usize, z: f64) -> f64 {
        self.load_coefficient(j) * (self.t + z) / z
    }

    fn rate(&self, j: usize, x: f64, z: f64) -> f64 {
        x * self.p_e_bar * self.payloads[j] as f64 / self.c4 * z / (self.t + z)
    }

    fn budget(&self) -> f64 {
        -self.p_e_bar.ln()
    }

    /// Common `x` of the saturated set from the tight idle constraint, given
    /// the capped stations' `x`. `None` when the capped stations alone use up
    /// the whole budget.
    fn x_c(&self, in_c: &[bool], z: f64) -> Option<f64> {
        let size = in_c.iter().filter(|&&c| c).count() as f64;
        let used: f64 = (0..self.n())
            .filter(|&j| !in_c[j])
            .map(|j| self.x_at_load(j, z).ln_1p())
            .sum();
        let rest = self.budget() - used;
        (rest > 0.0).then(|| (rest / size).exp_m1())
    }

    fn point(&self, in_c: &[bool], z: f64) -> Option<(Vec<f64>, f64)> {
        let xc = self.x_c(in_c, z)?;
        let x = (0..self.n())
            .map(|j| if in_c[j] { xc } else { self.x_at_load(j, z) })
            .collect();
        Some((x, xc))
    }

    fn n_eq(&self, x: &[f64], xc: f64) -> f64 {
        let tau_c = xc / (1.0 + xc);
        x.iter().map(|&xj| (xj / (1.0 + xj)) / tau_c).sum()
    }
}

enum SetSolution {
    Point {
        z: f64,
        x: Vec<f64>,
        xc: f64,
    },
    /// The capped stations exhaust the idle budget for every `z`.
    Exhausted,
}

fn solve_for_set(p: &Problem, in_c: &[bool]) -> Result<SetSolution> {
    let capped: Vec<usize> = (0..p.n())
        .filter(|&j| !in_c[j] && p.load_coefficient(j) > 0.0)
        .collect();
    if capped.is_empty() {
        let size = in_c.iter().filter(|&&c| c).count();
        let z = size as f64 * p.t;
        let (x, xc) = p.point(in_c, z).expect("empty capped set leaves the whole budget");
        return Ok(SetSolution::Point { z, x, xc });
    }
    // Capped x_j falls with z towards a_j, so the budget is feasible on (z0, inf).
    let limit: f64 = capped.iter().map(|&j| p.load_coefficient(j).ln_1p()).sum();
    if limit >= p.budget() {
        return Ok(SetSolution::Exhausted);
    }
    let feasible = |z: f64| p.x_c(in_c, z).is_some_and(|xc| xc > 0.0);
    let mut hi = p.t;
    while !feasible(hi) {
        hi *= 2.0;
    }
    let mut lo = 0.0;
    for _ in 0..MAX_ITERATIONS {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if feasible(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let z0 = hi;

    // h(z) = z - n_eq(z) T is strictly increasing on (z0, inf) and tends to
    // -inf at z0, so it has exactly one root there.
    let h = |z: f64| -> f64 {
        let (x, xc) = p.point(in_c, z).expect("z lies inside the feasible range");
        z - p.n_eq(&x, xc) * p.t
    };
    let mut lo = z0;
    let mut hi = (2.0 * z0).max(p.n() as f64 * p.t);
    let mut grown = 0;
    while h(hi) <= 0.0 {
        lo = hi;
        hi *= 2.0;
        grown += 1;
        if grown > MAX_ITERATIONS {
            return Err(CoexError::NoConvergence {
                iterations: grown,
                reason: "no upper bracket for the off-time equation".into(),
            });
        }
    }
    for _ in 0..MAX_ITERATIONS {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if h(mid) > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let z = if h(hi).abs() < h(lo).abs() { hi } else { lo };
    let (x, xc) = p.point(in_c, z).expect("root lies inside the feasible range");
    Ok(SetSolution::Point { z, x, xc })
}

fn problem<'a>(
    stations: &'a StationSet,
    spec: &'a UnsaturatedSpec,
    t_on: f64,
    c1: f64,
    phy: &PhyParams,
    timings: &FrameTimings,
) -> Result<Problem<'a>> {
    stations.validate()?;
    spec.validate(stations.n())?;
    if !(t_on > 0.0) {
        return Err(CoexError::invalid("t_on", "must be positive"));
    }
    if !(c1 >= 0.0) {
        return Err(CoexError::invalid("c1", "must be non-negative"));
    }
    if let Some(j) = stations.payloads.iter().position(|&d| d == 0) {
        return Err(CoexError::invalid(
            "payloads",
            format!("station {j} has a zero payload"),
        ));
    }
    let c4 = c4(spec.p_e_bar, phy, timings)?;
    Ok(Problem {
        t: t_on + c1,
        t_on,
        c1,
        p_e_bar: spec.p_e_bar,
        c4,
        loads: &spec.offered_loads,
        payloads: &stations.payloads,
    })
}

/// Mean MAC slot at the boundary idle probability: `p_e (sigma - delta) + delta`.
fn c4(p_e_bar: f64, phy: &PhyParams, timings: &FrameTimings) -> Result<f64> {
    let delta = timings.busy_slot(phy).secs();
    let c4 = p_e_bar * (phy.slot_sigma.secs() - delta) + delta;
    if c4 > 0.0 {
        Ok(c4)
    } else {
        Err(CoexError::invalid("c4", "mean slot at p_e_bar must be positive"))
    }
}

/// Proportional-fair allocation with rate-capped stations.
///
/// `c1` is the per-epoch partial-slot loss at the target operating point.
pub fn mixed_fair_allocation(
    stations: &StationSet,
    spec: &UnsaturatedSpec,
    t_on: f64,
    c1: f64,
    phy: &PhyParams,
    timings: &FrameTimings,
) -> Result<(FairAllocation, ActivityFactors)> {
    let p = problem(stations, spec, t_on, c1, phy, timings)?;
    let n = p.n();
    let mut in_c = vec![true; n];
    for iteration in 0..MAX_ITERATIONS {
        if !in_c.iter().any(|&c| c) {
            return Err(CoexError::Infeasible("saturated set became empty".into()));
        }
        let (z, x, xc) = match solve_for_set(&p, &in_c)? {
            SetSolution::Point { z, x, xc } => (z, x, xc),
            SetSolution::Exhausted => {
                let j = (0..n).find(|&j| !in_c[j]).expect("exhaustion needs a capped station");
                log::debug!("iteration {iteration}: capped stations exhaust the budget, station {j} joins C");
                in_c[j] = true;
                continue;
            }
        };
        if let Some(j) = (0..n).find(|&j| !in_c[j] && x[j] >= xc) {
            log::debug!("iteration {iteration}: station {j} joins C");
            in_c[j] = true;
            continue;
        }
        let over = (0..n).find(|&j| in_c[j] && p.loads[j].is_finite() && p.rate(j, xc, z) > p.loads[j]);
        if let Some(j) = over {
            log::debug!("iteration {iteration}: station {j} leaves C");
            in_c[j] = false;
            continue;
        }
        let tau_c = xc / (1.0 + xc);
        let lambdas: Vec<f64> = (0..n)
            .map(|j| if in_c[j] { 1.0 } else { x[j] / (1.0 + x[j]) / tau_c })
            .collect();
        let n_eq = lambdas.iter().sum();
        let factors = ActivityFactors {
            lambdas,
            saturated_set: (0..n).filter(|&j| in_c[j]).collect(),
            n_eq,
            x_stars: x,
            gamma_star: (1.0 + xc) / xc,
        };
        let alloc = if factors.saturated_set.len() == n {
            saturated_fair_off_time(n, p.t_on, p.c1)?
        } else {
            FairAllocation::from_z(p.t_on, p.c1, z)
        };
        return Ok((alloc, factors));
    }
    Err(CoexError::NoConvergence {
        iterations: MAX_ITERATIONS,
        reason: "saturated set kept changing".into(),
    })
}

/// Share of airtime station `j` spends on successful transmissions.
pub fn success_airtime(
    x_j: f64,
    p_e_bar: f64,
    phy: &PhyParams,
    timings: &FrameTimings,
    z: f64,
    t_on: f64,
    c1: f64,
) -> Result<f64> {
    if !(z > 0.0) {
        return Err(CoexError::invalid("z", "must be positive"));
    }
    let c4 = c4(p_e_bar, phy, timings)?;
    let delta = timings.busy_slot(phy).secs();
    Ok(x_j * p_e_bar * delta / c4 * z / (t_on + c1 + z))
}

/// Airtime assigned to the scheduled transmitter and to each saturated
/// station: `(T_on + c1) / cycle` and `frac_csma / n_eq`.
pub fn assigned_airtime(alloc: &FairAllocation, factors: &ActivityFactors) -> (f64, f64) {
    (alloc.frac_sched, alloc.frac_csma / factors.n_eq)
}

/// Sum of log rates (up to a constant) at the point `(z, x)`; stations with
/// zero offered load are left out. `None` outside the feasible set.
pub fn log_utility(
    stations: &StationSet,
    spec: &UnsaturatedSpec,
    t_on: f64,
    c1: f64,
    phy: &PhyParams,
    timings: &FrameTimings,
    z: f64,
    x: &[f64],
) -> Result<Option<f64>> {
    let p = problem(stations, spec, t_on, c1, phy, timings)?;
    if !(z > 0.0) || x.len() != p.n() || x.iter().any(|&v| !(v >= 0.0)) {
        return Ok(None);
    }
    let used: f64 = x.iter().map(|v| v.ln_1p()).sum();
    if used > p.budget() * (1.0 + 1e-12) {
        return Ok(None);
    }
    let mut u = -(p.t + z).ln();
    for j in 0..p.n() {
        if p.loads[j] == 0.0 {
            continue;
        }
        let r = p.rate(j, x[j], z);
        if r > p.loads[j] * (1.0 + 1e-12) || r <= 0.0 {
            return Ok(None);
        }
        u += r.ln();
    }
    Ok(Some(u))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KktResiduals {
    /// `|z / (T + z) - n_eq / (1 + n_eq)|`.
    pub z_stationarity: f64,
    /// `|sum log(1 + x_j) + log p_e_bar|`.
    pub tightness: f64,
    /// Largest `|lambda_j (1 + x_j) - gamma x_j|`, scaled by `1 + x_j`.
    pub lambda_consistency: f64,
    /// Largest relative violation of a load cap, of equality for capped
    /// stations, or of `0 <= lambda_j <= 1`.
    pub load: f64,
}

impl KktResiduals {
    pub fn max(&self) -> f64 {
        self.z_stationarity
            .max(self.tightness)
            .max(self.lambda_consistency)
            .max(self.load)
    }
}

pub fn kkt_residuals(
    stations: &StationSet,
    spec: &UnsaturatedSpec,
    t_on: f64,
    c1: f64,
    phy: &PhyParams,
    timings: &FrameTimings,
    alloc: &FairAllocation,
    factors: &ActivityFactors,
) -> Result<KktResiduals> {
    let p = problem(stations, spec, t_on, c1, phy, timings)?;
    let z = alloc.z_star;
    let x = &factors.x_stars;
    let z_stationarity = (z / (p.t + z) - factors.n_eq / (1.0 + factors.n_eq)).abs();
    let tightness = (x.iter().map(|v| v.ln_1p()).sum::<f64>() - p.budget()).abs();
    let mut lambda_consistency: f64 = 0.0;
    let mut load: f64 = 0.0;
    for j in 0..p.n() {
        let l = factors.lambdas[j];
        lambda_consistency = lambda_consistency.max((l - factors.gamma_star * x[j] / (1.0 + x[j])).abs());
        load = load.max((l - 1.0).max(-l).max(0.0));
        let cap = p.loads[j];
        if cap.is_infinite() {
            continue;
        }
        let r = p.rate(j, x[j], z);
        let scale = cap.max(f64::MIN_POSITIVE);
        if factors.in_c(j) {
            load = load.max(((r - cap) / scale).max(0.0));
        } else if cap == 0.0 {
            load = load.max(x[j]);
        } else {
            load = load.max(((r - cap) / scale).abs());
        }
    }
    Ok(KktResiduals {
        z_stationarity,
        tightness,
        lambda_consistency,
        load,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phy::McsProfile;

    fn setup(n: usize) -> (StationSet, PhyParams, FrameTimings) {
        let phy = PhyParams::default();
        let t = FrameTimings::new(&phy, &McsProfile::default(), 1).unwrap();
        (StationSet::uniform(n, 1.0 / 16.0, 12_000).unwrap(), phy, t)
    }

    #[test]
    fn closed_form_examples() {
        let a = saturated_fair_off_time(3, 50e-3, 0.0).unwrap();
        assert!((a.t_off_star - 150e-3).abs() < 1e-15);
        assert!((a.frac_csma - 0.75).abs() < 1e-15);
        assert!((a.frac_sched - 0.25).abs() < 1e-15);

        let b = saturated_fair_off_time(1, 10e-3, 165e-6).unwrap();
        assert!((b.z_star - 10.165e-3).abs() < 1e-15);
        assert!((b.t_off_star - 10.330e-3).abs() < 1e-15);
        assert!((b.frac_csma - 0.5).abs() < 1e-15);
        assert!((b.frac_sched - 0.5).abs() < 1e-15);
        assert!(saturated_fair_off_time(0, 1.0, 0.0).is_err());
    }

    #[test]
    fn all_saturated_reduces_to_closed_form() {
        let (s, phy, t) = setup(3);
        let spec = UnsaturatedSpec::new(vec![f64::INFINITY; 3], None, &s).unwrap();
        let (alloc, f) = mixed_fair_allocation(&s, &spec, 10e-3, 1e-4, &phy, &t).unwrap();
        assert_eq!(alloc, saturated_fair_off_time(3, 10e-3, 1e-4).unwrap());
        assert_eq!(f.lambdas, vec![1.0; 3]);
        assert_eq!(f.n_eq, 3.0);
        assert!((f.taus()[0] - 1.0 / 16.0).abs() < 1e-12);
    }

    #[test]
    fn zero_load_station_vanishes() {
        let (s, phy, t) = setup(2);
        let spec = UnsaturatedSpec::new(vec![f64::INFINITY, 0.0], None, &s).unwrap();
        let (alloc, f) = mixed_fair_allocation(&s, &spec, 10e-3, 0.0, &phy, &t).unwrap();
        assert_eq!(f.lambdas[1], 0.0);
        assert_eq!(f.n_eq, 1.0);
        assert_eq!(f.saturated_set, vec![0]);
        assert!((alloc.frac_csma - 0.5).abs() < 1e-12);
        assert!((alloc.frac_sched - 0.5).abs() < 1e-12);
    }

    #[test]
    fn capped_station_activity_is_a_tau_ratio() {
        let (s, phy, t) = setup(3);
        let spec = UnsaturatedSpec::new(vec![f64::INFINITY, f64::INFINITY, 2e6], None, &s).unwrap();
        let (alloc, f) = mixed_fair_allocation(&s, &spec, 10e-3, 0.0, &phy, &t).unwrap();
        assert_eq!(f.saturated_set, vec![0, 1]);
        let taus = f.taus();
        assert!((f.lambdas[2] - taus[2] / taus[0]).abs() < 1e-12);
        assert!(f.lambdas[2] > 0.0 && f.lambdas[2] < 1.0);
        let r = kkt_residuals(&s, &spec, 10e-3, 0.0, &phy, &t, &alloc, &f).unwrap();
        assert!(r.max() < 1e-9, "{r:?}");
        // Success airtime scales with x, so its ratio differs from lambda by (1 + x_C) / (1 + x_u).
        let sa = |x| success_airtime(x, spec.p_e_bar, &phy, &t, alloc.z_star, 10e-3, 0.0).unwrap();
        let x = &f.x_stars;
        let ratio = sa(x[2]) / sa(x[0]);
        assert!((ratio * (1.0 + x[0]) / (1.0 + x[2]) - f.lambdas[2]).abs() < 1e-9);
        let (sched, per_station) = assigned_airtime(&alloc, &f);
        assert!((sched - per_station).abs() < 1e-9);
    }

    #[test]
    fn equal_success_airtime_in_saturated_set() {
        let (_, phy, t) = setup(2);
        let a = success_airtime(0.2, 0.8, &phy, &t, 0.02, 0.01, 0.0).unwrap();
        assert_eq!(a, success_airtime(0.2, 0.8, &phy, &t, 0.02, 0.01, 0.0).unwrap());
        assert_eq!(success_airtime(0.0, 0.8, &phy, &t, 0.02, 0.01, 0.0).unwrap(), 0.0);
        assert!(success_airtime(0.1, 0.8, &phy, &t, 0.0, 0.01, 0.0).is_err());
    }

    #[test]
    fn spec_validation() {
        let (s, _, _) = setup(2);
        assert!(UnsaturatedSpec::new(vec![1e6, 1e6], None, &s).is_err());
        assert!(UnsaturatedSpec::new(vec![f64::INFINITY], None, &s).is_err());
        assert!(UnsaturatedSpec::new(vec![f64::INFINITY, -1.0], None, &s).is_err());
        assert!(UnsaturatedSpec::new(vec![f64::INFINITY, 1.0], Some(1.0), &s).is_err());
    }
}
