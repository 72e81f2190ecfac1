//! Optimisation, sweeps and breakdown scans on small ensembles.

use contmeas_core::analysis::*;
use contmeas_core::measurement::{run_ensemble, EnsembleConfig, Scheme, SchemeKind};
use contmeas_core::model::minimal_ensemble_xbar_spread;
use contmeas_core::{MeterParams, SystemParams};
use std::f64::consts::PI;

fn linear_config(duration: f64, samples: usize) -> EnsembleConfig {
    let meter = MeterParams::new(1.0, duration, 0.5).unwrap();
    let mut c = EnsembleConfig::new(SystemParams::linear(1.0), meter, samples, 21);
    c.steps = Some(40);
    c
}

#[test]
fn naive_optimum_follows_the_ensemble_law() {
    for duration in [0.5, 1.0, 2.0 * PI] {
        let config = linear_config(duration, 20_000);
        let scheme = Scheme::new(SchemeKind::Naive);
        let opt = optimize_delta_p(&scheme, &config, &SearchRange::new(1e-3, 1e2), Objective::Spread).unwrap();
        let law = minimal_ensemble_xbar_spread(duration, 1.0);
        assert!((opt.value / law - 1.0).abs() < 0.03, "T = {duration}: {} vs {law}", opt.value);
        assert!(!opt.at_boundary);
    }
}

#[test]
fn naive_optimum_is_a_local_minimum() {
    let config = linear_config(1.0, 10_000);
    let scheme = Scheme::new(SchemeKind::Naive);
    let opt = optimize_delta_p(&scheme, &config, &SearchRange::new(1e-3, 1e2), Objective::Spread).unwrap();
    for factor in [1.5, 1.0 / 1.5] {
        let mut c = config.clone();
        c.meter = c.meter.with_delta_p(opt.delta_p * factor);
        let r = run_ensemble(&scheme, &c).unwrap();
        assert!(r.spread > opt.value + 2.0 * opt.std_error, "{factor}");
    }
}

#[test]
fn spring_has_no_interior_minimum() {
    let config = linear_config(1.0, 1_000);
    let range = SearchRange::new(1e-3, 1e1);
    let opt = optimize_delta_p(&Scheme::new(SchemeKind::SpringCompensated), &config, &range, Objective::Spread).unwrap();
    assert!(opt.at_boundary);
    assert!(opt.delta_p < 1.01e-3);
    assert!((opt.value / (opt.delta_p / 1.0) - 1.0).abs() < 0.1);
}

#[test]
fn sweep_validation_rejects_bad_grids() {
    let base = linear_config(1.0, 200);
    let spec = |grid: Vec<f64>| SweepSpec {
        parameter: SweepParameter::DeltaP,
        grid,
        base: base.clone(),
        scheme: Scheme::new(SchemeKind::Naive),
        seeding: Seeding::Common,
    };
    assert!(spec(vec![0.1, 0.2]).validate().is_err());
    assert!(spec(vec![0.1, 0.3, 0.2]).validate().is_err());
    assert!(spec(vec![0.1, 0.1, 0.2]).validate().is_err());
    assert!(spec(vec![0.3, 0.2, -0.1]).validate().is_err());
    assert!(spec(vec![0.3, 0.2, 0.1]).validate().is_ok());
}

#[test]
fn sweep_seeding_modes() {
    let base = linear_config(1.0, 200);
    let mut spec = SweepSpec {
        parameter: SweepParameter::Duration,
        grid: vec![0.5, 1.0, 2.0],
        base,
        scheme: Scheme::new(SchemeKind::Naive),
        seeding: Seeding::Common,
    };
    spec.base.steps = None;
    let common = run_sweep(&spec).unwrap();
    assert!(common.iter().all(|p| p.seed == 21));
    spec.seeding = Seeding::Split;
    let split = run_sweep(&spec).unwrap();
    assert_ne!(split[0].seed, split[1].seed);
    assert_eq!(split[2].seed, split_seed(21, 2));
    let again = run_sweep(&spec).unwrap();
    for (a, b) in split.iter().zip(&again) {
        assert_eq!(a.result.spread.to_bits(), b.result.spread.to_bits());
    }
}

#[test]
fn linear_breakdown_scan_reaches_every_target() {
    let config = linear_config(1.0, 500);
    let rows = breakdown_scan(&config, 1e-3, &[0.5, 1.0, 2.0], &SearchRange::new(1e-6, 1e0)).unwrap();
    for r in &rows {
        assert_eq!(r.chi, 0.0);
        assert!(r.reachable, "{r:?}");
    }
}

#[test]
fn breakdown_accuracy_does_not_improve_with_duration() {
    let meter = MeterParams::new(1.0, 1.0, 0.5).unwrap();
    let mut config = EnsembleConfig::new(SystemParams::new(1.0, 0.1, 3).unwrap(), meter, 2_000, 5);
    config.steps = Some(40);
    let durations = log_grid(0.2, 1.0, 4);
    let rows = breakdown_scan(&config, 1e-3, &durations, &SearchRange::new(1e-7, 1e1)).unwrap();
    for w in rows.windows(2) {
        assert!(w[1].accuracy >= w[0].accuracy - 2.0 * w[0].accuracy_std_error, "{w:?}");
        assert!(w[1].chi > w[0].chi);
    }
}
