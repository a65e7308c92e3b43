use std::path::Path;
use std::process::{Command, Output};

use coexsim::config::{Axis, Scenario};
use coexsim::{run_scenario, CliError, ExperimentConfig, RunOptions};
use coexsim_core::coexistence::AccessMode;
use coexsim_core::phy::PhyParams;
use coexsim_core::Nanos;

fn coexsim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_coexsim")).args(args).output().unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn empty_config_is_the_default() {
    let cfg = ExperimentConfig::parse("").unwrap();
    assert_eq!(cfg, ExperimentConfig::default());
    assert_eq!(cfg.sim.scenario, Scenario::AnalyticOnly);
    let p = &cfg.points().unwrap()[0];
    assert_eq!(p.phy, PhyParams::default());
    assert_eq!(p.stations.taus, vec![1.0 / 16.0]);
    let s = p.sched.unwrap();
    assert_eq!(s.mode, AccessMode::Preemptive);
    assert_eq!(
        (s.t_on, s.mean_t_off, s.slot_delta),
        (Nanos::from_millis(10), Nanos::from_millis(10), Nanos::from_millis(1))
    );
}

#[test]
fn default_difs_written_out_changes_nothing() {
    let a = ExperimentConfig::parse("").unwrap();
    let b = ExperimentConfig::parse("[phy]\ndifs_us = 34\n").unwrap();
    assert_eq!(a, b);
    let c = ExperimentConfig::parse("[phy]\ndifs_us = 50\n").unwrap();
    assert_eq!(c.phy().unwrap().difs, Nanos::from_micros(50));
}

#[test]
fn resolved_config_round_trips() {
    let text = "[stations]\nn = 3\ntau = [0.05, 0.1, 0.0625]\noffered_load_mbps = [inf, 2, 3]\n[sweep]\naxis = \"t_on_ms\"\nfrom = 5\nto = 20\nstep = 5\n";
    let cfg = ExperimentConfig::parse(text).unwrap();
    assert_eq!(ExperimentConfig::parse(&cfg.to_toml()).unwrap(), cfg);
    assert_eq!(cfg.sweep.axis, Some(Axis::TOnMs));
    assert_eq!(
        cfg.sweep_values().unwrap(),
        vec![Some(5.0), Some(10.0), Some(15.0), Some(20.0)]
    );
}

#[test]
fn semantic_errors_name_the_field() {
    let field = |text: &str| match ExperimentConfig::parse(text) {
        Err(CliError::Field { field, .. }) => field,
        other => panic!("{text:?} gave {other:?}"),
    };
    assert_eq!(field("[stations]\ntau = 1.0\n"), "stations.tau");
    assert_eq!(field("[stations]\nn = 2\ntau = [0.1, 0.2, 0.3]\n"), "stations.tau");
    assert_eq!(field("[sim]\nruns = 0\n"), "sim.runs");
    assert_eq!(field("[sweep]\naxis = \"n\"\nvalues = [1.5]\n"), "sweep.values");
    assert!(field("[scheduled]\nt_on_ms = -1\n").starts_with("scheduled."));
    assert_eq!(
        field("[scheduled]\nenabled = false\n[sim]\nscenario = \"DelayCdf\"\n"),
        "scheduled.enabled"
    );
}

#[test]
fn parse_errors_carry_a_position() {
    let e = ExperimentConfig::parse("[phy]\nslot_us = \"nine\"\n").unwrap_err();
    assert!(matches!(e, CliError::Parse(_)));
    assert!(e.to_string().contains("line 2"), "{e}");
    let e = ExperimentConfig::parse("[phy]\nslot = 9\n").unwrap_err();
    assert!(e.to_string().contains("slot"), "{e}");
    assert_eq!(e.exit_code(), 1);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let ok = write(dir.path(), "ok.toml", "");
    let bad = write(dir.path(), "bad.toml", "[stations]\ntau = 1.0\n");
    let infeasible = write(
        dir.path(),
        "inf.toml",
        "[stations]\nn_agg = 64\n[scheduled]\nt_off_ms = 0.01\n",
    );

    let out = coexsim(&["validate", &ok]);
    assert_eq!(out.status.code(), Some(0));
    let out = coexsim(&["validate", &bad]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("stations.tau"));
    assert_eq!(coexsim(&["run", &bad]).status.code(), Some(1));
    assert_eq!(coexsim(&["run", "/nonexistent/config.toml"]).status.code(), Some(1));

    let out = coexsim(&["run", &infeasible]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stdout).contains("infeasible"));
}

#[test]
fn analytic_only_runs_no_simulation() {
    let cfg = ExperimentConfig::parse("[sim]\nruns = 1\nhorizon_s = 0.000001\n").unwrap();
    // A horizon this short would be rejected by the simulator.
    let t = run_scenario(&cfg, RunOptions::default()).unwrap();
    assert_eq!(t.rows.len(), 1);
    assert!(t.columns.iter().all(|c| !c.starts_with("sim_")));
}

#[test]
fn output_does_not_depend_on_jobs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "fair.toml",
        "[stations]\nn = 3\nn_agg = 8\n[sim]\nscenario = \"FairThroughputSweep\"\nruns = 6\nhorizon_s = 1\nseed = 11\n[sweep]\nmodes = [\"Preemptive\", \"Opportunistic\"]\n",
    );
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    for (path, jobs) in [(&a, "1"), (&b, "4")] {
        let out = coexsim(&["run", &cfg, "--jobs", jobs, "--out", path.to_str().unwrap()]);
        assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    }
    let (a, b) = (std::fs::read(a).unwrap(), std::fs::read(b).unwrap());
    assert_eq!(a, b);
    assert!(String::from_utf8(a).unwrap().contains("# seed = 11"));
}

#[test]
fn seed_and_runs_flags_override_the_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "p.toml",
        "[sim]\nscenario = \"PIdleSweep\"\nruns = 2\nhorizon_s = 0.5\n",
    );
    let out = coexsim(&["run", &cfg, "--seed", "99", "--runs", "3", "--format", "json"]);
    assert_eq!(out.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["seed"], 99);
    assert!(v["config"].as_str().unwrap().contains("runs = 3"));
    let idle = v["rows"][0][5].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&idle));
}

#[test]
fn every_scenario_produces_complete_rows() {
    for scenario in [
        "PIdleSweep",
        "FairThroughputSweep",
        "DelayCdf",
        "UnsaturatedAirtime",
        "ImperfectSensingSweep",
    ] {
        let text = format!(
            "[stations]\nn = 2\noffered_load_mbps = [inf, 1]\nbuffer = 50\n[sim]\nscenario = \"{scenario}\"\nruns = 2\nhorizon_s = 0.5\n"
        );
        let cfg = ExperimentConfig::parse(&text).unwrap();
        let t = run_scenario(&cfg, RunOptions { jobs: Some(2) }).unwrap();
        assert_eq!(t.infeasible, 0, "{scenario}: {:?}", t.rows);
        assert!(t.rows.iter().all(|r| r.len() == t.columns.len()), "{scenario}");
    }
}

#[test]
fn allocate_reports_lambdas() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "a.toml",
        "[stations]\nn = 3\noffered_load_mbps = [inf, inf, 0.5]\n",
    );
    let out = coexsim(&["allocate", &cfg]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    let mut rows = text.lines().filter(|l| !l.starts_with('#'));
    assert!(rows.next().unwrap().contains("lambdas"));
    let row = rows.next().unwrap();
    let lambdas: Vec<f64> = row
        .split(',')
        .nth(8)
        .unwrap()
        .split(';')
        .map(|x| x.parse().unwrap())
        .collect();
    assert_eq!(&lambdas[..2], &[1.0, 1.0]);
    assert!(lambdas[2] < 1.0);
}

#[test]
fn shipped_configs_are_valid() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut count = 0;
    for entry in std::fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "toml") {
            ExperimentConfig::load(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
            count += 1;
        }
    }
    assert!(count >= 5);
}
