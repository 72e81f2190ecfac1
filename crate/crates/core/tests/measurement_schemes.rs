//! Scheme-level checks: single deterministic runs and ensembles.

use contmeas_core::dynamics::TimeGrid;
use contmeas_core::measurement::*;
use contmeas_core::model::{ensemble_xbar_spread, spring_k_effective, window_factor, xbar_uncertainty};
use contmeas_core::{MeterParams, SystemParams};
use std::f64::consts::PI;

fn experiment(kind: SchemeKind, lambda: f64, g0: f64, t: f64) -> Experiment {
    let system = SystemParams::new(1.0, lambda, 3).unwrap();
    let meter = MeterParams::new(g0, t, 0.5).unwrap();
    Experiment::new(&Scheme::new(kind), system, meter, TimeGrid::for_window(t, 1.0)).unwrap()
}

#[test]
fn naive_without_back_reaction_reads_the_true_average() {
    let e = experiment(SchemeKind::Naive, 0.0, 1.0, 2.0);
    let run = e.run_single(0.7, -0.2, 0.0).unwrap();
    assert!((e.estimate(run.readout, 0.0) - run.xbar_true).abs() < 1e-8);
}

#[test]
fn naive_pure_back_reaction_at_half_period() {
    let e = experiment(SchemeKind::Naive, 0.0, 1.0, PI);
    let run = e.run_single(0.0, 0.0, 1.0).unwrap();
    assert!((run.readout - PI).abs() < 1e-8);
}

#[test]
fn naive_bias_is_linear_in_q_with_window_factor_slope() {
    let e = experiment(SchemeKind::Naive, 0.0, 0.8, 1.7);
    let mut reg = contmeas_core::stats::Regression::new();
    for q in [-2.0, -0.5, 0.0, 1.0, 3.0] {
        let run = e.run_single(1.0, 0.0, q).unwrap();
        reg.push(q, e.estimate(run.readout, q) - run.xbar_true);
    }
    let fit = reg.fit().unwrap();
    assert!((fit.slope - 0.8 * window_factor(1.7)).abs() < 1e-8);
    assert!(fit.slope_std_error < 1e-8);
}

#[test]
fn spring_and_unruh_remove_the_q_dependence() {
    for kind in [SchemeKind::SpringCompensated, SchemeKind::UnruhReadout] {
        let e = experiment(kind, 0.0, 1.0, 2.0);
        for q in [-3.0, 0.4, 2.5] {
            let run = e.run_single(0.7, -0.2, q).unwrap();
            assert!((e.estimate(run.readout, q) - run.xbar_true).abs() < 1e-8, "{kind:?}");
        }
    }
}

#[test]
fn tampered_spring_constant_breaks_decorrelation() {
    use contmeas_core::schedule::{CompensationSchedule, ScheduleTerm, WindowTable};
    let t = 2.0;
    let system = SystemParams::linear(1.0);
    let meter = MeterParams::new(1.0, t, 0.5).unwrap();
    let grid = TimeGrid::for_window(t, 1.0);
    // the printed constant carries a spurious factor T
    let k = spring_k_effective(&meter, 1.0) * t;
    let bad = CompensationSchedule::new(
        0,
        "tampered",
        vec![ScheduleTerm::new(2, 0, 0, WindowTable::tabulate(t, grid.steps(), |_| 0.5 * k))],
    );
    let scheme = Scheme::new(SchemeKind::SpringCompensated).with_schedules(vec![bad]);
    let e = Experiment::new(&scheme, system, meter, grid).unwrap();
    let run = e.run_single(0.7, -0.2, 1.0).unwrap();
    assert!((e.estimate(run.readout, 1.0) - run.xbar_true).abs() > 1e-2);
}

#[test]
fn spring_ensemble_has_no_q_correlation() {
    let system = SystemParams::linear(1.0);
    let meter = MeterParams::new(1.0, 2.0, 0.5).unwrap();
    let mut config = EnsembleConfig::new(system, meter, 2000, 11);
    config.readout_noise = false;
    let r = run_ensemble(&Scheme::new(SchemeKind::SpringCompensated), &config).unwrap();
    assert!(r.q_slope.abs() < 1e-8, "{}", r.q_slope);
}

#[test]
fn linear_constant_of_motion_is_undisturbed() {
    for g0 in [0.05, 0.5, 5.0] {
        let e = experiment(SchemeKind::ConstantOfMotionLinear, 0.0, g0, 2.0);
        for q in [-2.0, 1.5] {
            assert!(e.observable_drift(0.7, -0.2, q).unwrap() <= 1e-7);
            let run = e.run_single(0.7, -0.2, q).unwrap();
            assert!((e.estimate(run.readout, q) - run.xbar_true).abs() <= 1e-7, "g0 = {g0}");
        }
    }
}

#[test]
fn exact_constant_of_motion_is_undisturbed() {
    let system = SystemParams::new(1.0, 0.02, 3).unwrap();
    let meter = MeterParams::new(1.0, 1.5, 0.5).unwrap();
    let grid = TimeGrid::new(1.5, 60).unwrap();
    let e = Experiment::new(&Scheme::new(SchemeKind::ConstantOfMotionExact), system, meter, grid).unwrap();
    for q in [-1.0, 0.0, 2.0] {
        assert!(e.observable_drift(1.0, 0.0, q).unwrap() <= 1e-6);
        let run = e.run_single(1.0, 0.0, q).unwrap();
        assert!((e.estimate(run.readout, q) - run.xbar_true).abs() <= 1e-6);
    }
}

#[test]
fn first_order_compensated_bias_is_even_in_lambda() {
    let bias = |lambda: f64| {
        let e = experiment(SchemeKind::PerturbativeCompensated { order: 1 }, lambda, 1.0, 1.0);
        let run = e.run_single(1.0, 0.0, 0.8).unwrap();
        e.estimate(run.readout, 0.8) - run.xbar_true
    };
    let l = 1e-3;
    let odd = (bias(l) - bias(-l)) / (2.0 * l);
    assert!(odd.abs() <= 1e-6, "{odd}");
    let spring_only = |lambda: f64| {
        let e = experiment(SchemeKind::PerturbativeCompensated { order: 0 }, lambda, 1.0, 1.0);
        let run = e.run_single(1.0, 0.0, 0.8).unwrap();
        e.estimate(run.readout, 0.8) - run.xbar_true
    };
    assert!(((spring_only(l) - spring_only(-l)) / (2.0 * l)).abs() > 1e-3);
}

#[test]
fn weak_coupling_bias_follows_power_counting() {
    let bias = |g0: f64| {
        let e = experiment(SchemeKind::Naive, 0.0, g0, 1.0);
        let run = e.run_single(1.0, 0.0, 1.0).unwrap();
        e.estimate(run.readout, 1.0) - run.xbar_true
    };
    let ratio = bias(1e-2) / bias(1e-3);
    assert!((ratio - 10.0).abs() < 1e-6, "{ratio}");
    let nonlinear = |g0: f64| {
        let e = experiment(SchemeKind::SpringCompensated, 0.05, g0, 1.0);
        let run = e.run_single(1.0, 0.0, 1.0).unwrap();
        e.estimate(run.readout, 1.0) - run.xbar_true
    };
    // the leading surviving channel is the O(λ) Q·x₀ error: g₀² in the
    // pointer shift, g₀ after dividing by g₀T
    let ratio = nonlinear(1e-2) / nonlinear(1e-3);
    assert!((ratio - 10.0).abs() < 0.1, "{ratio}");
}

#[test]
fn naive_ensemble_spread_is_the_quadrature_sum() {
    let system = SystemParams::linear(1.0);
    let meter = MeterParams::new(1.0, 1.0, 0.5).unwrap();
    let mut config = EnsembleConfig::new(system, meter, 20_000, 5);
    config.steps = Some(40);
    let r = run_ensemble(&Scheme::new(SchemeKind::Naive), &config).unwrap();
    let law = ensemble_xbar_spread(0.5, &meter, 1.0);
    assert!((r.spread / law - 1.0).abs() < 0.03, "{} vs {law}", r.spread);
    // the linear two-term sum overestimates the ensemble spread here
    assert!(xbar_uncertainty(0.5, &meter, 1.0) / r.spread > 1.2);
}

#[test]
fn escapes_are_counted_and_fail_the_run() {
    let system = SystemParams::new(1.0, 5.0, 3).unwrap();
    let meter = MeterParams::new(1.0, 3.0, 0.01).unwrap();
    let mut config = EnsembleConfig::new(system, meter, 200, 1);
    config.steps = Some(60);
    match run_ensemble(&Scheme::new(SchemeKind::Naive), &config) {
        Err(contmeas_core::Error::EscapeFraction { escaped, total }) => {
            assert!(escaped > 2 && total == 200);
        }
        other => panic!("expected an escape failure, got {other:?}"),
    }
}
