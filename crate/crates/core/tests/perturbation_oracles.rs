//! The perturbation series against direct RK4 integration of the full
//! equations of motion.

use contmeas_core::dynamics::{integrate, EscapeGuard, ForceModel, TimeGrid, TrajectoryRecord};
use contmeas_core::perturbation::*;
use contmeas_core::{MeterParams, PhaseState, SystemParams};

const X: f64 = 0.7;
const P: f64 = -0.4;

fn meter(g0: f64, t: f64) -> MeterParams {
    MeterParams::new(g0, t, 0.5).unwrap()
}

fn run(
    lambda: f64,
    meter: &MeterParams,
    q: f64,
    (x, p): (f64, f64),
    schedules: &[contmeas_core::schedule::CompensationSchedule],
    steps: usize,
) -> TrajectoryRecord {
    let system = SystemParams::new(1.0, lambda, 3).unwrap();
    let mut force = ForceModel::coupled(system, meter).with_guard(EscapeGuard::Off);
    for s in schedules {
        force = force.with_schedule(s);
    }
    integrate(&force, PhaseState::new(x, p, 0.0, q), TimeGrid::new(meter.duration, steps).unwrap())
}

fn readout(lambda: f64, meter: &MeterParams, q: f64, xp: (f64, f64), schedules: &[contmeas_core::schedule::CompensationSchedule]) -> f64 {
    run(lambda, meter, q, xp, schedules, 1000).readout()
}

/// `d/dλ` at 0 by fourth-order central differences.
fn first_derivative(f: impl Fn(f64) -> f64, h: f64) -> f64 {
    (8.0 * (f(h) - f(-h)) - (f(2.0 * h) - f(-2.0 * h))) / (12.0 * h)
}

/// `½ d²/dλ²` at 0 by fourth-order central differences.
fn half_second_derivative(f: impl Fn(f64) -> f64, h: f64) -> f64 {
    let f0 = f(0.0);
    (16.0 * (f(h) + f(-h) - 2.0 * f0) - (f(2.0 * h) + f(-2.0 * h) - 2.0 * f0)) / (24.0 * h * h)
}

#[test]
fn zeroth_order_matches_linear_integration() {
    let m = meter(1.0, 2.0);
    let grid = TimeGrid::new(2.0, 400).unwrap();
    let system = SystemParams::linear(1.0);
    let x0 = series_x0(&system, &m, grid, &[]).unwrap();
    let series = x0.eval(0.8, X, P);
    let traj = run(0.0, &m, 0.8, (X, P), &[], 400);
    for (s, state) in series.iter().zip(&traj.states) {
        assert!((s - state.x).abs() < 1e-8);
    }
    let free = series_x0(&system, &meter(0.0, 2.0), grid, &[]).unwrap();
    assert!(free.disturbance().monomials().all(|mm| free.disturbance().coefficient(mm).unwrap().iter().all(|v| *v == 0.0)));
}

#[test]
fn first_order_matches_lambda_derivative_of_uncoupled_motion() {
    let m = meter(0.0, 3.0);
    let grid = TimeGrid::new(3.0, 600).unwrap();
    let system = SystemParams::new(1.0, 0.0, 3).unwrap();
    let x0 = series_x0(&system, &m, grid, &[]).unwrap();
    let x1 = series_x1(&system, &x0, &[]).unwrap().eval(0.0, 1.2, 0.0);
    for i in [100usize, 350, 600] {
        let d = first_derivative(|l| run(l, &m, 0.0, (1.2, 0.0), &[], 600).states[i].x, 1e-3);
        assert!((x1[i] - d).abs() < 1e-6, "i = {i}: {} vs {d}", x1[i]);
    }
}

#[test]
fn second_order_matches_lambda_second_derivative() {
    let m = meter(0.0, 2.5);
    let grid = TimeGrid::new(2.5, 1000).unwrap();
    let system = SystemParams::new(1.0, 0.0, 3).unwrap();
    let [_, _, x2] = series_up_to_second(&system, &m, grid, &[]).unwrap();
    let x2 = x2.eval(0.0, X, P);
    for i in [250usize, 1000] {
        let d = half_second_derivative(|l| run(l, &m, 0.0, (X, P), &[], 1000).states[i].x, 1e-2);
        assert!((x2[i] - d).abs() < 1e-5, "i = {i}: {} vs {d}", x2[i]);
    }
}

#[test]
fn series_remainder_is_cubic_in_lambda() {
    let m = meter(1.0, 1.0);
    let grid = TimeGrid::new(1.0, 2000).unwrap();
    let system = SystemParams::new(1.0, 0.0, 3).unwrap();
    let [x0, x1, x2] = series_up_to_second(&system, &m, grid, &[]).unwrap();
    let q = 0.6;
    let (a, b, c) = (x0.eval(q, X, P), x1.eval(q, X, P), x2.eval(q, X, P));
    let scaled: Vec<f64> = [1e-2, 5e-3, 2.5e-3]
        .iter()
        .map(|&l| {
            let traj = run(l, &m, q, (X, P), &[], 2000);
            (0..=2000)
                .map(|i| (a[i] + l * b[i] + l * l * c[i] - traj.states[i].x).abs())
                .fold(0.0, f64::max)
                / (l * l * l)
        })
        .collect();
    for w in scaled.windows(2) {
        let r = w[0] / w[1];
        assert!((0.8..=1.25).contains(&r), "{scaled:?}");
    }
}

#[test]
fn first_order_readout_error_matches_oracle() {
    let m = meter(1.0, 1.5);
    let grid = TimeGrid::new(1.5, 1000).unwrap();
    let err = delta_p_first_order(&m, 1.0, grid).unwrap();
    for &(q, x, p) in &[(0.5, X, P), (-1.1, 0.3, 0.9), (0.8, 0.0, 0.0)] {
        let oracle = first_derivative(
            |l| readout(l, &m, q, (x, p), &[]) - readout(l, &m, 0.0, (x, p), &[]),
            1e-3,
        );
        assert!((err.eval(q, x, p) - oracle).abs() < 1e-6, "{} vs {oracle}", err.eval(q, x, p));
    }
}

#[test]
fn first_order_error_integral_and_schedule_forms_agree() {
    let m = meter(0.8, 2.2);
    let grid = TimeGrid::new(2.2, 800).unwrap();
    let system = SystemParams::new(1.0, 0.0, 3).unwrap();
    let closed = delta_p_first_order(&m, 1.0, grid).unwrap().polynomial();
    let s = series_up_to_second(&system, &m, grid, &[]).unwrap();
    let series = readout_series(&m, &s[..2], &[]).unwrap()[1].q_dependent();
    for (mono, c) in closed.terms() {
        assert!((series.coefficient(mono) - c).abs() < 1e-9, "{mono:?}");
    }
    // with ΔH⁽¹⁾ alone only the β readout shift `g₀ ∫ β dt · Q²` survives
    let comp = [comp_first_order(&m, 1.0, grid)];
    let s = series_up_to_second(&system, &m, grid, &comp).unwrap();
    let with = readout_series(&m, &s[..2], &comp).unwrap()[1].q_dependent();
    let beta_readout = 0.8 * contmeas_core::quadrature::simpson(beta_table(&m, 1.0, grid).values(), grid.step());
    assert!(with.coefficient(Monomial::new(1, 1, 0)).abs() < 1e-10);
    assert!(with.coefficient(Monomial::new(1, 0, 1)).abs() < 1e-10);
    assert!((with.coefficient(Monomial::new(2, 0, 0)) - beta_readout).abs() < 1e-10);
}

#[test]
fn short_pointer_only_error_is_quadrature_of_weight_times_alpha_squared() {
    let m = meter(1.3, 0.9);
    let grid = TimeGrid::new(0.9, 900).unwrap();
    let err = delta_p_first_order(&m, 1.0, grid).unwrap();
    let n = 20000;
    let h = 0.9 / n as f64;
    let direct: f64 = (0..=n)
        .map(|i| {
            let t = i as f64 * h;
            let w = if i == 0 || i == n { 1.0 } else if i % 2 == 1 { 4.0 } else { 2.0 };
            let a = contmeas_core::model::alpha(t, &m, 1.0);
            w * 1.3 * (1.0 - (0.9 - t).cos()) * a * a
        })
        .sum::<f64>()
        * h
        / 3.0;
    assert!((err.q2 - direct).abs() < 1e-9);
    let scaled = |g0: f64| delta_p_first_order(&meter(g0, 0.9), 1.0, grid).unwrap().q2 / g0.powi(3);
    assert!((scaled(1e-2) - scaled(1e-3)).abs() < 1e-12 * scaled(1e-2).abs().max(1e-12));
}

#[test]
fn beta_matches_quadratic_response_with_first_order_compensation() {
    let m = meter(1.0, 1.0);
    let grid = TimeGrid::new(1.0, 1000).unwrap();
    let comp = comp_first_order(&m, 1.0, grid);
    let b = beta(1.0, &m, 1.0, grid);
    // λQ² part of x(T): compare against a uncompensated run and divide out Q²
    let q = 0.9;
    let with = |l: f64| run(l, &m, q, (0.0, 0.0), std::slice::from_ref(&comp), 1000).final_state().x;
    let without = |l: f64| run(l, &m, q, (0.0, 0.0), &[], 1000).final_state().x;
    let fitted = first_derivative(|l| with(l) - without(l), 1e-3) / (q * q);
    assert!((fitted - b).abs() < 1e-6, "{fitted} vs {b}");
    assert!(b < 0.0);
    // one power of g₀ from the coupling, one from α
    let g2 = |g0: f64| beta(1.0, &meter(g0, 1.0), 1.0, grid) / (g0 * g0);
    assert!((g2(0.5) - g2(2.0)).abs() < 1e-12 * g2(1.0).abs());
}

#[test]
fn full_first_order_compensation_cancels_linear_lambda_channel() {
    let m = meter(0.6, 1.2);
    let grid = TimeGrid::new(1.2, 1000).unwrap();
    let schedules = first_order_compensation(&m, 1.0, grid);
    for &(q, x, p) in &[(0.7, X, P), (-1.3, 0.2, 0.5), (1.0, 0.0, 0.0)] {
        let err = |l: f64| readout(l, &m, q, (x, p), &schedules) - readout(l, &m, 0.0, (x, p), &schedules);
        let d = first_derivative(err, 1e-3);
        assert!(d.abs() < 1e-7, "q = {q}: {d}");
    }
}

#[test]
fn second_order_error_matches_oracle() {
    let m = meter(1.0, 1.5);
    let grid = TimeGrid::new(1.5, 1000).unwrap();
    let system = SystemParams::new(1.0, 0.0, 3).unwrap();
    let schedules = first_order_compensation(&m, 1.0, grid);
    let err = delta_p_second_order(&system, &m, grid, &schedules).unwrap();
    for &(q, x, p) in &[(0.7, X, P), (-1.3, 0.2, 0.5), (1.0, 0.0, 0.0)] {
        let oracle = half_second_derivative(
            |l| readout(l, &m, q, (x, p), &schedules) - readout(l, &m, 0.0, (x, p), &schedules),
            2e-3,
        );
        assert!((err.eval(q, x, p) - oracle).abs() < 1e-5, "{} vs {oracle}", err.eval(q, x, p));
    }
}

#[test]
fn second_order_error_without_system_motion_is_pure_pointer() {
    let m = meter(1.0, 2.0);
    let grid = TimeGrid::new(2.0, 400).unwrap();
    let system = SystemParams::new(1.0, 0.0, 3).unwrap();
    let err = delta_p_second_order(&system, &m, grid, &first_order_compensation(&m, 1.0, grid)).unwrap();
    let at_rest: Vec<_> = err.terms().filter(|(mono, _)| mono.x == 0 && mono.p == 0).collect();
    assert!(at_rest.iter().all(|(mono, _)| mono.q == 3));
    assert!(err.terms().all(|(mono, _)| mono.degree() == 3 && mono.q >= 1));
}

#[test]
fn second_order_error_vanishes_fast_for_short_windows() {
    let system = SystemParams::new(1.0, 0.0, 3).unwrap();
    let size = |t: f64| {
        let m = meter(1.0, t);
        let grid = TimeGrid::new(t, 200).unwrap();
        delta_p_second_order(&system, &m, grid, &first_order_compensation(&m, 1.0, grid))
            .unwrap()
            .norm()
    };
    let (a, b, c) = (size(0.1), size(0.05), size(0.025));
    let slope1 = (a / b).log2();
    let slope2 = (b / c).log2();
    assert!(slope1 >= 3.0 && slope2 >= 3.0, "{slope1} {slope2}");
}
