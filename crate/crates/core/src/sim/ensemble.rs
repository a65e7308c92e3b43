use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::report::SimReport;
use super::{run, SimConfig};
use crate::error::{CoexError, Result};
use crate::units::Nanos;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    /// Sample standard deviation; zero for a single run.
    pub std: f64,
}

impl Stat {
    pub fn of(values: impl IntoIterator<Item = f64>) -> Stat {
        let v: Vec<f64> = values.into_iter().collect();
        let n = v.len() as f64;
        if v.is_empty() {
            return Stat {
                mean: f64::NAN,
                std: f64::NAN,
            };
        }
        let mean = v.iter().sum::<f64>() / n;
        let std = if v.len() > 1 {
            (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        Stat { mean, std }
    }
}

/// Independent runs seeded `base_seed, base_seed + 1, ...`, kept in seed order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleReport {
    pub base_seed: u64,
    pub reports: Vec<SimReport>,
}

impl EnsembleReport {
    pub fn runs(&self) -> usize {
        self.reports.len()
    }

    pub fn stat(&self, metric: impl Fn(&SimReport) -> f64) -> Stat {
        Stat::of(self.reports.iter().map(metric))
    }

    pub fn pooled_delays(&self) -> Vec<Nanos> {
        self.reports
            .iter()
            .flat_map(|r| r.delay_samples.iter().copied())
            .collect()
    }
}

/// Runs `runs` seeds of `config` on a pool of `jobs` threads (`None` uses
/// every core). The result does not depend on `jobs`.
pub fn run_ensemble(config: &SimConfig, runs: usize, base_seed: u64, jobs: Option<usize>) -> Result<EnsembleReport> {
    if runs == 0 {
        return Err(CoexError::invalid("runs", "at least one run"));
    }
    config.validate()?;
    let one = |i: usize| {
        let mut cfg = config.clone();
        cfg.seed = base_seed.wrapping_add(i as u64);
        run(&cfg)
    };
    let reports = match jobs {
        Some(1) => (0..runs).map(one).collect::<Result<Vec<_>>>()?,
        _ => {
            let mut builder = rayon::ThreadPoolBuilder::new();
            if let Some(j) = jobs {
                builder = builder.num_threads(j);
            }
            let pool = builder.build().map_err(|e| CoexError::invalid("jobs", e.to_string()))?;
            pool.install(|| (0..runs).into_par_iter().map(one).collect::<Result<Vec<_>>>())?
        }
    };
    Ok(EnsembleReport { base_seed, reports })
}
