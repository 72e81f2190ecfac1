//! Self-checks behind `contmeas verify`.
//!
//! Every check is deterministic for a given [`Budget`]: seeds are fixed and
//! no timings reach the report, so two runs print the same bytes.

use std::fmt::Write as _;
use std::time::{Duration, Instant};

use contmeas_core::analysis::{breakdown_scan, fit_scaling, log_grid, optimize_delta_p, run_sweep, Objective, SearchRange};
use contmeas_core::analysis::{Seeding, SweepParameter, SweepSpec};
use contmeas_core::dynamics::{integrate, EscapeGuard, ForceModel, TimeGrid};
use contmeas_core::measurement::{compile, run_ensemble, EnsembleConfig, Experiment, InitialState};
use contmeas_core::measurement::{Scheme, SchemeKind};
use contmeas_core::model::{minimal_ensemble_xbar_spread, minimal_xbar_uncertainty, spring_k_effective};
use contmeas_core::perturbation::{delta_p_second_order, first_order_compensation, series_up_to_second, Monomial, SECOND_ORDER_BASIS};
use contmeas_core::schedule::{CompensationSchedule, ScheduleTerm, WindowTable};
use contmeas_core::{MeterParams, PhaseState, SystemParams};

/// Ensemble sizes. `ensemble` is for linear schemes, `nonlinear` for RK4
/// ensembles of the perturbative scheme, `exact` for the nonlinear
/// constant-of-motion scheme.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Budget {
    pub ensemble: usize,
    pub nonlinear: usize,
    pub exact: usize,
}

impl Budget {
    pub const FULL: Budget = Budget {
        ensemble: 100_000,
        nonlinear: 20_000,
        exact: 10_000,
    };
    pub const QUICK: Budget = Budget {
        ensemble: 10_000,
        nonlinear: 10_000,
        exact: 10_000,
    };
}

#[derive(Debug, Clone)]
pub struct Check {
    pub id: &'static str,
    pub name: &'static str,
    pub tolerance: &'static str,
    pub passed: bool,
    pub lines: Vec<String>,
    /// Wall time; kept out of [`render`].
    pub elapsed: Duration,
}

struct Builder {
    passed: bool,
    lines: Vec<String>,
}

impl Builder {
    fn new() -> Self {
        Builder {
            passed: true,
            lines: Vec::new(),
        }
    }

    /// Record one measurement; any failed item fails the check.
    fn item(&mut self, ok: bool, line: String) {
        self.passed &= ok;
        self.lines.push(format!("{} {line}", if ok { "ok  " } else { "FAIL" }));
    }

    fn note(&mut self, line: String) {
        self.lines.push(format!("     {line}"));
    }
}

type Body = fn(&Budget, &mut Builder) -> contmeas_core::Result<()>;

const CHECKS: [(&str, &str, &str, Body); 10] = [
    ("C1", "minimal-uncertainty law", "5% rel, < 60 s per point", minimal_uncertainty),
    ("C2", "small-window limit", "1e-6 rel", small_window),
    ("C3", "exact linear compensation", "3 SE slope, 1e-8 fixed Q, 2% spread", linear_compensation),
    ("C3m", "tampered spring constant is detected", "slope > 3 SE", tampered_spring),
    ("C4", "linear constant of motion", "1e-7", linear_constant_of_motion),
    ("C5", "exact nonlinear constant of motion", "1e-6, 2% spread", exact_constant_of_motion),
    ("C6", "perturbation series remainder", "ratio in [0.8, 1.25]", series_remainder),
    ("C7", "first-order compensation scaling", "2.0 ± 0.1, 1.0 ± 0.05", first_order_scaling),
    ("C8", "breakdown scaling", "5 ± 1, chi in [0.1, 10]", breakdown_scaling),
    ("C9", "second-order error structure", "1e-5 of norm", second_order_structure),
];

/// Identifiers of the available checks, in run order.
pub fn ids() -> impl Iterator<Item = &'static str> {
    CHECKS.iter().map(|c| c.0)
}

pub fn run(id: &str, budget: &Budget) -> Option<Check> {
    let &(id, name, tolerance, body) = CHECKS.iter().find(|c| c.0 == id)?;
    let start = Instant::now();
    let mut b = Builder::new();
    if let Err(e) = body(budget, &mut b) {
        b.item(false, format!("error: {e}"));
    }
    Some(Check {
        id,
        name,
        tolerance,
        passed: b.passed,
        lines: b.lines,
        elapsed: start.elapsed(),
    })
}

pub fn run_all(budget: &Budget) -> Vec<Check> {
    ids().filter_map(|id| run(id, budget)).collect()
}

pub fn render(checks: &[Check]) -> String {
    let mut out = String::new();
    for c in checks {
        let verdict = if c.passed { "PASS" } else { "FAIL" };
        let _ = writeln!(out, "{verdict} {:<4} {:<40} [{}]", c.id, c.name, c.tolerance);
        for line in &c.lines {
            let _ = writeln!(out, "       {line}");
        }
    }
    let failed: Vec<&str> = checks.iter().filter(|c| !c.passed).map(|c| c.id).collect();
    if failed.is_empty() {
        let _ = writeln!(out, "all {} checks passed", checks.len());
    } else {
        let _ = writeln!(out, "{} of {} checks failed: {}", failed.len(), checks.len(), failed.join(", "));
    }
    out
}

fn rel(a: f64, b: f64) -> f64 {
    (a / b - 1.0).abs()
}

fn linear_config(omega: f64, meter: MeterParams, samples: usize, seed: u64) -> EnsembleConfig {
    EnsembleConfig::new(SystemParams::linear(omega), meter, samples, seed)
}

fn minimal_uncertainty(budget: &Budget, b: &mut Builder) -> contmeas_core::Result<()> {
    for (omega, duration) in [(1.0, 0.5), (1.0, 1.0), (2.0, 3.0)] {
        let start = Instant::now();
        let config = linear_config(omega, MeterParams::new(1.0, duration, 0.5)?, budget.ensemble, 17);
        let opt = optimize_delta_p(&Scheme::new(SchemeKind::Naive), &config, &SearchRange::new(1e-3, 1e2), Objective::Spread)?;
        let law = minimal_xbar_uncertainty(duration, omega);
        let fast = start.elapsed() < Duration::from_secs(60);
        b.item(
            rel(opt.value, law) <= 0.05 && fast,
            format!(
                "Omega={omega} T={duration}: MC minimum {:.5e} at dP={:.4e}, (2/Omega)sqrt(s) = {law:.5e}, ratio {:.4}",
                opt.value,
                opt.delta_p,
                opt.value / law
            ),
        );
        b.note(format!(
            "ensemble law sqrt(s)/(Omega sqrt(T)) = {:.5e}, ratio {:.4}",
            minimal_ensemble_xbar_spread(duration, omega),
            opt.value / minimal_ensemble_xbar_spread(duration, omega)
        ));
    }
    Ok(())
}

fn small_window(_: &Budget, b: &mut Builder) -> contmeas_core::Result<()> {
    let t = 1e-4;
    let ratio = minimal_xbar_uncertainty(t, 1.0) / t;
    let limit = (2.0f64 / 3.0).sqrt();
    b.item(rel(ratio, limit) <= 1e-6, format!("T=1e-4: ratio {ratio:.10}, limit {limit:.10}, rel {:.2e}", rel(ratio, limit)));
    Ok(())
}

fn deterministic_error(e: &Experiment, x: f64, p: f64, q: f64) -> contmeas_core::Result<f64> {
    let run = e.run_single(x, p, q)?;
    Ok((e.estimate(run.readout, q) - run.xbar_true).abs())
}

fn linear_compensation(budget: &Budget, b: &mut Builder) -> contmeas_core::Result<()> {
    let meter = MeterParams::new(1.0, 2.0, 0.5)?;
    let floor = meter.delta_p / (meter.g0 * meter.duration);
    for kind in [SchemeKind::SpringCompensated, SchemeKind::UnruhReadout] {
        let scheme = Scheme::new(kind);
        let mut config = linear_config(1.0, meter, budget.ensemble, 23);
        config.initial = InitialState::Gaussian {
            mean_x: 1.0,
            mean_p: 0.0,
            sigma_x: 0.5,
            sigma_p: 0.5,
        };
        let e = compile(&scheme, &config)?;
        b.note(format!("{}: linear fast path {}", kind.name(), if e.force_model().is_linear() { "on" } else { "off" }));
        let worst = [(-3.0, 0.7, -0.2), (0.4, -1.0, 0.3), (2.5, 0.0, 1.0)]
            .iter()
            .map(|&(q, x, p)| deterministic_error(&e, x, p, q))
            .collect::<contmeas_core::Result<Vec<f64>>>()?
            .into_iter()
            .fold(0.0, f64::max);
        b.item(worst < 1e-8, format!("{}: fixed-Q max |error| {worst:.2e}", kind.name()));
        let r = run_ensemble(&scheme, &config)?;
        b.item(
            r.q_slope.abs() < 3.0 * r.q_slope_std_error,
            format!("{}: Q slope {:.3e} ± {:.3e}", kind.name(), r.q_slope, r.q_slope_std_error),
        );
        b.item(
            rel(r.spread, floor) <= 0.02,
            format!("{}: spread {:.5e}, dP/(g0 T) = {floor:.5e}, rel {:.2e}", kind.name(), r.spread, rel(r.spread, floor)),
        );
    }
    Ok(())
}

/// The spring constant with the spurious factor `T` must show up as a `Q`
/// correlation.
fn tampered_spring(budget: &Budget, b: &mut Builder) -> contmeas_core::Result<()> {
    let duration = 2.0;
    let meter = MeterParams::new(1.0, duration, 0.5)?;
    let config = linear_config(1.0, meter, budget.ensemble.min(10_000), 29);
    let grid = config.grid()?;
    let k = spring_k_effective(&meter, 1.0) * duration;
    let bad = CompensationSchedule::new(
        0,
        "tampered",
        vec![ScheduleTerm::new(2, 0, 0, WindowTable::tabulate(duration, grid.steps(), |_| 0.5 * k))],
    );
    let scheme = Scheme::new(SchemeKind::SpringCompensated).with_schedules(vec![bad]);
    let r = run_ensemble(&scheme, &config)?;
    b.item(
        r.q_slope.abs() > 3.0 * r.q_slope_std_error,
        format!("k_eff x T: Q slope {:.3e} ± {:.3e}", r.q_slope, r.q_slope_std_error),
    );
    Ok(())
}

fn linear_constant_of_motion(budget: &Budget, b: &mut Builder) -> contmeas_core::Result<()> {
    let scheme = Scheme::new(SchemeKind::ConstantOfMotionLinear);
    for g0 in [0.05, 0.5, 5.0] {
        let meter = MeterParams::new(g0, 2.0, 0.5)?;
        let mut config = linear_config(1.0, meter, budget.exact.min(1_000), 31);
        config.readout_noise = false;
        config.initial = InitialState::Gaussian {
            mean_x: 0.0,
            mean_p: 0.0,
            sigma_x: 1.0,
            sigma_p: 1.0,
        };
        let e = compile(&scheme, &config)?;
        let drift = [(-2.0, 0.7, -0.2), (1.5, -0.3, 0.9)]
            .iter()
            .map(|&(q, x, p)| e.observable_drift(x, p, q))
            .collect::<contmeas_core::Result<Vec<f64>>>()?
            .into_iter()
            .fold(0.0, f64::max);
        let r = run_ensemble(&scheme, &config)?;
        let worst = r.samples.iter().map(|s| s.error().abs()).fold(0.0, f64::max);
        b.item(drift <= 1e-7, format!("g0={g0}: conserved-average drift {drift:.2e}"));
        b.item(
            worst <= 1e-7 && r.bias.abs() <= 1e-7,
            format!("g0={g0}: bias {:.2e}, max |error| {worst:.2e} over {} samples", r.bias, r.samples.len()),
        );
    }
    Ok(())
}

fn exact_constant_of_motion(budget: &Budget, b: &mut Builder) -> contmeas_core::Result<()> {
    let system = SystemParams::new(1.0, 0.02, 3)?;
    let meter = MeterParams::new(1.0, 1.5, 0.5)?;
    let scheme = Scheme::new(SchemeKind::ConstantOfMotionExact);
    let mut config = EnsembleConfig::new(system, meter, 200, 37);
    config.steps = Some(60);
    config.readout_noise = false;
    config.initial = InitialState::Gaussian {
        mean_x: 1.0,
        mean_p: 0.0,
        sigma_x: 0.5,
        sigma_p: 0.5,
    };
    let e = compile(&scheme, &config)?;
    let drift = [(-1.0, 1.0, 0.0), (0.0, 0.5, -0.5), (2.0, 1.2, 0.4)]
        .iter()
        .map(|&(q, x, p)| e.observable_drift(x, p, q))
        .collect::<contmeas_core::Result<Vec<f64>>>()?
        .into_iter()
        .fold(0.0, f64::max);
    b.item(drift <= 1e-6, format!("phi drift {drift:.2e}"));
    let r = run_ensemble(&scheme, &config)?;
    let worst = r.samples.iter().map(|s| s.error().abs()).fold(0.0, f64::max);
    b.item(
        worst <= 1e-6 && r.bias.abs() <= 1e-6,
        format!("bias {:.2e}, max |error| {worst:.2e} over {} samples", r.bias, r.samples.len()),
    );
    config.readout_noise = true;
    config.samples = budget.exact;
    let r = run_ensemble(&scheme, &config)?;
    let floor = meter.delta_p / (meter.g0 * meter.duration);
    b.item(
        rel(r.spread, floor) <= 0.02,
        format!("spread {:.5e} over {} samples, dP/(g0 T) = {floor:.5e}", r.spread, r.samples.len()),
    );
    Ok(())
}

fn series_remainder(_: &Budget, b: &mut Builder) -> contmeas_core::Result<()> {
    let (x, p, q, steps) = (0.7, -0.4, 0.6, 2000);
    let meter = MeterParams::new(1.0, 1.0, 0.5)?;
    let grid = TimeGrid::new(1.0, steps)?;
    let [x0, x1, x2] = series_up_to_second(&SystemParams::new(1.0, 0.0, 3)?, &meter, grid, &[])?;
    let (a, c1, c2) = (x0.eval(q, x, p), x1.eval(q, x, p), x2.eval(q, x, p));
    let mut scaled = Vec::new();
    for lambda in [1e-2, 5e-3, 2.5e-3] {
        let force = ForceModel::coupled(SystemParams::new(1.0, lambda, 3)?, &meter).with_guard(EscapeGuard::Off);
        let traj = integrate(&force, PhaseState::new(x, p, 0.0, q), grid);
        let sup = (0..=steps)
            .map(|i| (a[i] + lambda * c1[i] + lambda * lambda * c2[i] - traj.states[i].x).abs())
            .fold(0.0, f64::max);
        scaled.push(sup / lambda.powi(3));
        b.note(format!("lambda={lambda:.2e}: sup remainder / lambda^3 = {:.6e}", sup / lambda.powi(3)));
    }
    for w in scaled.windows(2) {
        let r = w[0] / w[1];
        b.item((0.8..=1.25).contains(&r), format!("successive ratio {r:.5}"));
    }
    Ok(())
}

fn first_order_scaling(budget: &Budget, b: &mut Builder) -> contmeas_core::Result<()> {
    let meter = MeterParams::new(1.0, 1.0, 0.5)?;
    let grid = log_grid(1e-4, 1e-2, 5);
    for (order, target, tolerance) in [(1u32, 2.0, 0.1), (0, 1.0, 0.05)] {
        let mut base = EnsembleConfig::new(SystemParams::new(1.0, grid[0], 3)?, meter, budget.nonlinear.min(10_000), 3);
        base.readout_noise = false;
        let spec = SweepSpec {
            parameter: SweepParameter::Lambda,
            grid: grid.clone(),
            base,
            scheme: Scheme::new(SchemeKind::PerturbativeCompensated { order }),
            seeding: Seeding::Common,
        };
        let biases: Vec<f64> = run_sweep(&spec)?.iter().map(|p| p.result.bias.abs()).collect();
        let fit = fit_scaling(&grid, &biases)?;
        let label = if order == 1 { "compensated" } else { "spring only" };
        b.item(
            (fit.exponent - target).abs() <= tolerance,
            format!("{label}: |bias| ∝ lambda^{:.4} ± {:.1e} (expected {target})", fit.exponent, fit.exponent_std_error),
        );
    }
    Ok(())
}

fn breakdown_scaling(budget: &Budget, b: &mut Builder) -> contmeas_core::Result<()> {
    let target = 1e-3;
    let meter = MeterParams::new(1.0, 1.0, 0.5)?;
    let mut config = EnsembleConfig::new(SystemParams::new(1.0, 0.1, 3)?, meter, budget.nonlinear, 5);
    config.steps = Some(40);
    let durations = log_grid(0.1, 1.0, 6);
    let rows = breakdown_scan(&config, target, &durations, &SearchRange::new(1e-7, 1e1))?;
    for r in &rows {
        b.note(format!(
            "T={:.4}: best accuracy {:.4e} at dP={:.3e}, chi={:.3e}, {}",
            r.duration,
            r.accuracy,
            r.delta_p,
            r.chi,
            if r.reachable { "reachable" } else { "unreachable" }
        ));
    }
    let accuracy: Vec<f64> = rows.iter().map(|r| r.accuracy).collect();
    let fit = fit_scaling(&durations, &accuracy)?;
    b.item(
        (fit.exponent - 5.0).abs() <= 1.0,
        format!("accuracy ∝ T^{:.3} ± {:.1e}", fit.exponent, fit.exponent_std_error),
    );
    match rows.windows(2).find(|w| w[0].reachable != w[1].reachable) {
        Some(w) => {
            let chi = (w[0].chi * w[1].chi).sqrt();
            b.item((0.1..=10.0).contains(&chi), format!("transition at chi ≈ {chi:.3e}"));
        }
        None => b.item(false, "no reachable/unreachable transition in the scanned durations".into()),
    }
    Ok(())
}

/// `½ d²/dλ²` at 0 by fourth-order central differences.
fn half_second_derivative(f: impl Fn(f64) -> f64, h: f64) -> f64 {
    let f0 = f(0.0);
    (16.0 * (f(h) + f(-h) - 2.0 * f0) - (f(2.0 * h) + f(-2.0 * h) - 2.0 * f0)) / (24.0 * h * h)
}

/// Least squares `min ‖A c − y‖` by modified Gram-Schmidt; returns the
/// coefficients and the residual norm.
fn least_squares(columns: &[Vec<f64>], y: &[f64]) -> (Vec<f64>, f64) {
    let k = columns.len();
    let mut q: Vec<Vec<f64>> = columns.to_vec();
    let mut r = vec![vec![0.0; k]; k];
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    for j in 0..k {
        for i in 0..j {
            r[i][j] = dot(&q[i], &q[j]);
            let qi = q[i].clone();
            q[j].iter_mut().zip(&qi).for_each(|(v, u)| *v -= r[i][j] * u);
        }
        r[j][j] = dot(&q[j], &q[j]).sqrt();
        let norm = r[j][j];
        q[j].iter_mut().for_each(|v| *v /= norm);
    }
    let mut rhs: Vec<f64> = q.iter().map(|qi| dot(qi, y)).collect();
    let mut residual = y.to_vec();
    for (qi, c) in q.iter().zip(&rhs) {
        residual.iter_mut().zip(qi).for_each(|(v, u)| *v -= c * u);
    }
    for j in (0..k).rev() {
        for i in j + 1..k {
            rhs[j] -= r[j][i] * rhs[i];
        }
        rhs[j] /= r[j][j];
    }
    (rhs, dot(&residual, &residual).sqrt())
}

fn second_order_structure(_: &Budget, b: &mut Builder) -> contmeas_core::Result<()> {
    let steps = 1000;
    let meter = MeterParams::new(1.0, 1.5, 0.5)?;
    let grid = TimeGrid::new(1.5, steps)?;
    let schedules = first_order_compensation(&meter, 1.0, grid);
    let readout = |lambda: f64, q: f64, x: f64, p: f64| {
        let system = SystemParams::new(1.0, lambda, 3).expect("finite lambda");
        let mut force = ForceModel::coupled(system, &meter).with_guard(EscapeGuard::Off);
        for s in &schedules {
            force = force.with_schedule(s);
        }
        integrate(&force, PhaseState::new(x, p, 0.0, q), grid).readout()
    };
    let mut points = Vec::new();
    for q in [-1.1, -0.4, 0.7, 1.3] {
        for (x, p) in [(0.8, 0.0), (-0.5, 0.6), (0.2, -0.9), (1.1, 0.7)] {
            points.push((q, x, p));
        }
    }
    let extracted: Vec<f64> = points
        .iter()
        .map(|&(q, x, p)| half_second_derivative(|l| readout(l, q, x, p) - readout(l, 0.0, x, p), 1e-2))
        .collect();
    let norm = extracted.iter().map(|v| v * v).sum::<f64>().sqrt();
    let column = |m: &Monomial| points.iter().map(|&(q, x, p)| m.eval(q, x, p)).collect::<Vec<f64>>();
    let columns: Vec<Vec<f64>> = SECOND_ORDER_BASIS.iter().map(|(m, _)| column(m)).collect();
    let (coefficients, residual) = least_squares(&columns, &extracted);
    b.item(
        residual <= 1e-5 * norm,
        format!("{} samples: residual / norm = {:.2e} on the readout images of the five Hamiltonian monomials", points.len(), residual / norm),
    );
    for ((_, label), c) in SECOND_ORDER_BASIS.iter().zip(&coefficients) {
        b.note(format!("{label:<20} {c:+.6e}"));
    }
    let without = &columns[..2].iter().chain(&columns[3..]).cloned().collect::<Vec<_>>();
    let (_, reduced) = least_squares(without, &extracted);
    b.note(format!("without the Q P^2 readout monomial: residual / norm = {:.2e}", reduced / norm));
    let series = delta_p_second_order(&SystemParams::new(1.0, 0.0, 3)?, &meter, grid, &schedules)?;
    let gap = SECOND_ORDER_BASIS
        .iter()
        .zip(&coefficients)
        .map(|((m, _), c)| (series.coefficient(*m) - c).abs())
        .fold(0.0, f64::max);
    b.note(format!("max coefficient gap to the kernel series: {gap:.2e}"));
    Ok(())
}
