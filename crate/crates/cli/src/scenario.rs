//! Evaluation of each scenario over the resolved sweep points.

use coexsim_core::coexistence::{heterogeneity_costs, predict, ChannelContext, ScheduledParams, Sensing};
use coexsim_core::csma::{idle_probability, StationSet};
use coexsim_core::fair::{
    assigned_airtime, mixed_fair_allocation, saturated_fair_config, saturated_fair_off_time, UnsaturatedSpec,
};
use coexsim_core::phy::FrameTimings;
use coexsim_core::sim::{run_ensemble, EnsembleReport, SimReport};
use coexsim_core::{CoexError, Nanos};

use crate::config::{ExperimentConfig, Point, Scenario};
use crate::error::CliError;
use crate::output::{Cell, Table};

/// Execution options that do not change the results.
#[derive(Debug, Clone, Copy, Default)]
pub struct RunOptions {
    /// Worker threads for ensembles; `None` uses every core.
    pub jobs: Option<usize>,
}

pub fn columns(cfg: &ExperimentConfig) -> Vec<String> {
    let mut cols: Vec<&str> = Vec::new();
    if let Some(axis) = cfg.sweep.axis {
        cols.push(axis.name());
    }
    cols.extend(["mode", "n", "n_agg", "status"]);
    cols.extend(match cfg.sim.scenario {
        Scenario::AnalyticOnly => &[
            "p_idle",
            "p_tx_a",
            "c1",
            "c2",
            "eff_off",
            "s_csma",
            "s_sched",
            "fair_t_off",
        ][..],
        Scenario::PIdleSweep => &["p_idle", "sim_p_idle_mean", "sim_p_idle_std"][..],
        Scenario::FairThroughputSweep => &[
            "fair_t_off",
            "pred_s_csma",
            "sim_s_csma_mean",
            "sim_s_csma_std",
            "pred_s_sched",
            "sim_s_sched_mean",
            "sim_s_sched_std",
            "pred_c1",
            "sim_c1",
            "pred_c2",
            "sim_c2",
            "pred_p_tx_a",
            "sim_p_tx_a",
        ][..],
        Scenario::DelayCdf => &[
            "sim_s_csma_mean",
            "delay_samples",
            "mean_delay_ms",
            "frac_below_threshold",
            "delay_p50_ms",
            "delay_p90_ms",
            "delay_p99_ms",
        ][..],
        Scenario::UnsaturatedAirtime => &[
            "t_off_star",
            "n_eq",
            "lambdas",
            "assigned_sched",
            "assigned_per_saturated",
            "sim_airtime_sched",
            "sim_airtime_csma_success",
            "sim_s_csma",
        ][..],
        Scenario::ImperfectSensingSweep => &[
            "pred_s_sched_perfect",
            "pred_s_sched_explicit",
            "pred_ratio",
            "sim_s_sched_perfect",
            "sim_s_sched_explicit",
            "sim_ratio",
            "pred_s_csma_explicit",
            "sim_s_csma_explicit",
        ][..],
    });
    cols.into_iter().map(String::from).collect()
}

pub fn run_scenario(cfg: &ExperimentConfig, opts: RunOptions) -> Result<Table, CliError> {
    let columns = columns(cfg);
    let width = columns.len();
    let mut rows = Vec::new();
    let mut infeasible = 0;
    for point in cfg.points()? {
        let mut row: Vec<Cell> = Vec::with_capacity(width);
        if let Some(v) = point.sweep_value {
            row.push(v.into());
        }
        row.push(format!("{:?}", point.mode).into());
        row.push((point.stations.n() as f64).into());
        row.push(f64::from(point.n_agg).into());
        match evaluate(cfg, &point, opts) {
            Ok(values) => {
                row.push("ok".into());
                row.extend(values);
            }
            Err(EvalError::Point(e)) => {
                log::warn!("point {:?} {:?}: {e}", point.sweep_value, point.mode);
                infeasible += 1;
                row.push(format!("infeasible: {e}").into());
                row.resize(width, Cell::Text(String::new()));
            }
            Err(EvalError::Fatal(e)) => return Err(e),
        }
        debug_assert_eq!(row.len(), width);
        rows.push(row);
    }
    Ok(Table {
        columns,
        rows,
        infeasible,
    })
}

enum EvalError {
    /// The model has no answer at this point; the row is flagged.
    Point(CoexError),
    Fatal(CliError),
}

impl From<CoexError> for EvalError {
    fn from(e: CoexError) -> Self {
        EvalError::Point(e)
    }
}

impl From<CliError> for EvalError {
    fn from(e: CliError) -> Self {
        EvalError::Fatal(e)
    }
}

fn sched_of(point: &Point) -> Result<ScheduledParams, EvalError> {
    point
        .sched
        .ok_or_else(|| CliError::field("scheduled.enabled", "this scenario needs the scheduled transmitter").into())
}

fn ensemble(
    cfg: &ExperimentConfig,
    point: &Point,
    stations: Option<StationSet>,
    sched: Option<ScheduledParams>,
    opts: RunOptions,
) -> Result<EnsembleReport, EvalError> {
    let mut p = point.clone();
    if let Some(st) = stations {
        p.stations = st;
    }
    let sim = cfg.sim_config(&p, sched)?;
    Ok(run_ensemble(&sim, cfg.sim.runs, cfg.sim.seed, opts.jobs)?)
}

fn context(point: &Point) -> Result<ChannelContext, CoexError> {
    ChannelContext::new(&point.phy, &point.mcs, &point.stations, point.n_agg)
}

fn p_idle(ctx: &ChannelContext) -> Result<f64, CoexError> {
    idle_probability(&ctx.probs, ctx.timings.t_b, ctx.timings.t_fra, ctx.mean_slot)
}

fn joined(values: impl IntoIterator<Item = f64>) -> Cell {
    values
        .into_iter()
        .map(|v| v.to_string())
        .collect::<Vec<_>>()
        .join(";")
        .into()
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let rank = (q * sorted.len() as f64).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}

fn evaluate(cfg: &ExperimentConfig, point: &Point, opts: RunOptions) -> Result<Vec<Cell>, EvalError> {
    let ctx = context(point)?;
    let cells: Vec<Cell> = match cfg.sim.scenario {
        Scenario::AnalyticOnly => {
            let mut out = vec![p_idle(&ctx)?.into()];
            match point.sched {
                Some(s) => {
                    let p = predict(&point.stations, &s, &ctx)?;
                    let fair = saturated_fair_off_time(point.stations.n(), s.t_on.secs(), p.costs.c1)?;
                    out.extend(
                        [
                            p.costs.p_tx_a,
                            p.costs.c1,
                            p.costs.c2,
                            p.eff_off,
                            p.s_csma.iter().sum(),
                            p.s_sched,
                            fair.t_off_star,
                        ]
                        .map(Cell::from),
                    );
                }
                None => out.resize(8, Cell::Text(String::new())),
            }
            out
        }
        Scenario::PIdleSweep => {
            let e = ensemble(cfg, point, None, None, opts)?;
            let sim = e.stat(|r| r.p_idle_emp);
            vec![p_idle(&ctx)?.into(), sim.mean.into(), sim.std.into()]
        }
        Scenario::FairThroughputSweep => {
            let (s, alloc, pred) = saturated_fair_config(&point.stations, &sched_of(point)?, &ctx)?;
            let e = ensemble(cfg, point, None, Some(s), opts)?;
            let csma = e.stat(SimReport::total_csma);
            let sched = e.stat(|r| r.s_sched_emp);
            [
                alloc.t_off_star,
                pred.s_csma.iter().sum(),
                csma.mean,
                csma.std,
                pred.s_sched,
                sched.mean,
                sched.std,
                pred.costs.c1,
                e.stat(|r| r.c1_emp).mean,
                pred.costs.c2,
                e.stat(|r| r.c2_emp).mean,
                pred.costs.p_tx_a,
                e.stat(|r| r.on_start_collision_frac).mean,
            ]
            .map(Cell::from)
            .to_vec()
        }
        Scenario::DelayCdf => {
            let e = ensemble(cfg, point, None, Some(sched_of(point)?), opts)?;
            let mut d: Vec<f64> = e.pooled_delays().iter().map(|x| x.secs() * 1e3).collect();
            d.sort_by(f64::total_cmp);
            let count = d.len() as f64;
            let mean = if d.is_empty() {
                f64::NAN
            } else {
                d.iter().sum::<f64>() / count
            };
            let below = d.iter().filter(|&&x| x < cfg.sim.delay_threshold_ms).count() as f64;
            [
                e.stat(SimReport::total_csma).mean,
                count,
                mean,
                if d.is_empty() { f64::NAN } else { below / count },
                quantile(&d, 0.5),
                quantile(&d, 0.9),
                quantile(&d, 0.99),
            ]
            .map(Cell::from)
            .to_vec()
        }
        Scenario::UnsaturatedAirtime => {
            let s = sched_of(point)?;
            let c1 = heterogeneity_costs(&s, &ctx)?.c1;
            let spec = UnsaturatedSpec::new(point.loads.clone(), cfg.stations.p_e_bar, &point.stations)?;
            let timings = FrameTimings::new(&point.phy, &point.mcs, point.n_agg)?;
            let (alloc, factors) =
                mixed_fair_allocation(&point.stations, &spec, s.t_on.secs(), c1, &point.phy, &timings)?;
            let (a_sched, a_station) = assigned_airtime(&alloc, &factors);
            let stations = StationSet::new(factors.taus(), point.stations.payloads.clone())?;
            let fair = s.with_mean_t_off(Nanos::from_secs_f64(alloc.t_off_star));
            let e = ensemble(cfg, point, Some(stations), Some(fair), opts)?;
            let sched_air = e.stat(|r| {
                let a = &r.airtime;
                a.sched_data + a.sched_reservation + a.inter_tech_collision + a.partial_slot
            });
            let n = point.stations.n();
            vec![
                alloc.t_off_star.into(),
                factors.n_eq.into(),
                joined(factors.lambdas.iter().copied()),
                a_sched.into(),
                a_station.into(),
                sched_air.mean.into(),
                e.stat(|r| r.airtime.csma_success).mean.into(),
                joined((0..n).map(|j| e.stat(|r| r.s_csma_emp[j]).mean)),
            ]
        }
        Scenario::ImperfectSensingSweep => {
            let s = sched_of(point)?;
            let perfect = s.with_sensing(Sensing::Perfect);
            let explicit = s.with_sensing(Sensing::ExplicitSignal);
            let pp = predict(&point.stations, &perfect, &ctx)?;
            let pe = predict(&point.stations, &explicit, &ctx)?;
            let ep = ensemble(cfg, point, None, Some(perfect), opts)?;
            let ee = ensemble(cfg, point, None, Some(explicit), opts)?;
            let (sp, se) = (ep.stat(|r| r.s_sched_emp).mean, ee.stat(|r| r.s_sched_emp).mean);
            [
                pp.s_sched,
                pe.s_sched,
                pe.s_sched / pp.s_sched,
                sp,
                se,
                se / sp,
                pe.s_csma.iter().sum(),
                ee.stat(SimReport::total_csma).mean,
            ]
            .map(Cell::from)
            .to_vec()
        }
    };
    Ok(cells)
}

/// Fair allocation at every point: the closed form when every station is
/// saturated, the rate-capped solution otherwise.
pub fn allocate(cfg: &ExperimentConfig) -> Result<Table, CliError> {
    let mut columns: Vec<String> = cfg.sweep.axis.map(|a| a.name().to_string()).into_iter().collect();
    columns.extend(
        [
            "mode",
            "n",
            "status",
            "c1",
            "t_off_star",
            "frac_sched",
            "frac_csma",
            "n_eq",
            "lambdas",
            "taus",
        ]
        .map(String::from),
    );
    let width = columns.len();
    let mut rows = Vec::new();
    let mut infeasible = 0;
    for point in cfg.points()? {
        let mut row: Vec<Cell> = point.sweep_value.map(Cell::from).into_iter().collect();
        row.push(format!("{:?}", point.mode).into());
        row.push((point.stations.n() as f64).into());
        let s = point
            .sched
            .ok_or_else(|| CliError::field("scheduled.enabled", "allocation needs the scheduled transmitter"))?;
        let result = (|| -> Result<Vec<Cell>, CoexError> {
            let ctx = context(&point)?;
            let c1 = heterogeneity_costs(&s, &ctx)?.c1;
            let spec = UnsaturatedSpec::new(point.loads.clone(), cfg.stations.p_e_bar, &point.stations)?;
            let timings = FrameTimings::new(&point.phy, &point.mcs, point.n_agg)?;
            let (alloc, f) = mixed_fair_allocation(&point.stations, &spec, s.t_on.secs(), c1, &point.phy, &timings)?;
            Ok(vec![
                "ok".into(),
                c1.into(),
                alloc.t_off_star.into(),
                alloc.frac_sched.into(),
                alloc.frac_csma.into(),
                f.n_eq.into(),
                joined(f.lambdas.iter().copied()),
                joined(f.taus()),
            ])
        })();
        match result {
            Ok(cells) => row.extend(cells),
            Err(e) => {
                infeasible += 1;
                row.push(format!("infeasible: {e}").into());
                row.resize(width, Cell::Text(String::new()));
            }
        }
        rows.push(row);
    }
    Ok(Table {
        columns,
        rows,
        infeasible,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nearest_rank_quantiles() {
        let v: Vec<f64> = (1..=10).map(f64::from).collect();
        assert_eq!(quantile(&v, 0.5), 5.0);
        assert_eq!(quantile(&v, 0.9), 9.0);
        assert_eq!(quantile(&v, 0.99), 10.0);
        assert_eq!(quantile(&v, 0.0), 1.0);
        assert!(quantile(&[], 0.5).is_nan());
    }

    #[test]
    fn analytic_rows_have_every_column() {
        let cfg = ExperimentConfig::parse(
            "[sweep]\naxis = \"n\"\nvalues = [1, 3]\nmodes = [\"Preemptive\", \"Opportunistic\"]\n",
        )
        .unwrap();
        let t = run_scenario(&cfg, RunOptions::default()).unwrap();
        assert_eq!(t.rows.len(), 4);
        assert!(t.rows.iter().all(|r| r.len() == t.columns.len()));
        assert_eq!(t.infeasible, 0);
        assert_eq!(t.num(0, "n"), Some(1.0));
    }

    #[test]
    fn impossible_off_time_is_flagged() {
        let cfg = ExperimentConfig::parse("[stations]\nn_agg = 64\n[scheduled]\nt_off_ms = 0.01\n").unwrap();
        let t = run_scenario(&cfg, RunOptions::default()).unwrap();
        assert_eq!(t.infeasible, 1);
        let status = t.column("status").unwrap();
        assert!(matches!(&t.rows[0][status], Cell::Text(s) if s.starts_with("infeasible")));
    }
}
