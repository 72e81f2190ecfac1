//! Coupled oscillator–pointer dynamics, free flow maps and the window
//! average of the nonlinear motion as a constant of motion.
//!
//! Everything is integrated with classical fixed-step RK4. The pointer
//! coordinate `Q` is a parameter of the right-hand side, never a state
//! component, so it cannot drift.

use alloc::vec::Vec;


use crate::model::{conserved_xbar_linear_gradient, in_window, MeterParams, PhaseState, SystemParams};
use crate::quadrature::simpson;
use crate::rk4;
use crate::schedule::{monomial_gradient, CompensationSchedule, WindowTable};
#[allow(unused_imports)] // inherent methods shadow it whenever std is linked
use num_traits::Float;

use crate::{Error, Result};

/// Uniform grid `t_i = i·T/steps` on `[0, T]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    duration: f64,
    steps: usize,
}

impl TimeGrid {
    pub fn new(duration: f64, steps: usize) -> Result<Self> {
        if !(duration.is_finite() && duration > 0.0) {
            return Err(Error::param("T", "must be finite and > 0"));
        }
        if steps == 0 {
            return Err(Error::param("steps", "must be >= 1"));
        }
        Ok(TimeGrid { duration, steps })
    }

    /// Grid with step `h`; `T/h` has to be an integer.
    pub fn with_step(duration: f64, h: f64) -> Result<Self> {
        if !(h.is_finite() && h > 0.0) {
            return Err(Error::param("h", "must be finite and > 0"));
        }
        let ratio = duration / h;
        let steps = ratio.round();
        if steps < 1.0 || (ratio - steps).abs() > 1e-9 * ratio.max(1.0) {
            return Err(Error::param("h", "T/h must be an integer >= 1"));
        }
        TimeGrid::new(duration, steps as usize)
    }

    /// Default resolution: `h ≤ min(T, 2π/Ω)/200`, rounded to an even step
    /// count so Simpson's rule applies on the grid.
    pub fn for_window(duration: f64, omega: f64) -> Self {
        let period = 2.0 * core::f64::consts::PI / omega;
        let steps = (200.0 * duration / duration.min(period)).ceil() as usize;
        TimeGrid {
            duration,
            steps: steps + steps % 2,
        }
    }

    pub fn duration(&self) -> f64 {
        self.duration
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn step(&self) -> f64 {
        self.duration / self.steps as f64
    }

    pub fn time(&self, i: usize) -> f64 {
        if i == self.steps {
            self.duration
        } else {
            i as f64 * self.step()
        }
    }

    /// Same interval with `factor` times as many steps.
    pub fn refined(&self, factor: usize) -> Self {
        TimeGrid {
            duration: self.duration,
            steps: self.steps * factor.max(1),
        }
    }
}

/// Time dependence of a Hamiltonian term.
#[derive(Debug, Clone, PartialEq)]
pub enum Coefficient {
    /// Constant on `[0, end]`, zero elsewhere.
    Window { value: f64, end: f64 },
    Table(WindowTable),
}

impl Coefficient {
    #[inline]
    pub fn eval(&self, t: f64) -> f64 {
        match self {
            Coefficient::Window { value, end } => {
                if in_window(t, *end) {
                    *value
                } else {
                    0.0
                }
            }
            Coefficient::Table(table) => table.eval(t),
        }
    }
}

/// Interaction term `c(t) Qᵃ xᵇ pᶜ`.
#[derive(Debug, Clone, PartialEq)]
pub struct HamiltonianTerm {
    pub q_pow: u8,
    pub x_pow: u8,
    pub p_pow: u8,
    pub coefficient: Coefficient,
}

/// Pointer coupled to a constant of motion: `H_I = −g(t) Q F(x, p, t)`.
#[derive(Debug, Clone, PartialEq)]
pub enum ObservableCoupling {
    /// `F` is the linear window average written in instantaneous variables.
    LinearAverage { meter: MeterParams, omega: f64 },
    /// `F = φ`, the window average of the nonlinear free motion.
    ExactAverage {
        meter: MeterParams,
        average: WindowAverage,
    },
}

/// Divergence guard for the unbounded `xⁿ` potential.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EscapeGuard {
    /// `10·max(1, |x₀|, |p₀|/Ω, x_b)` when λ ≠ 0, where `x_b = (Ω²/|λ|)^(1/(n−2))`
    /// is the top of the potential barrier; no guard for the linear theory.
    Auto,
    Bound(f64),
    Off,
}

impl EscapeGuard {
    fn bound(&self, system: &SystemParams, x: f64, p: f64) -> Option<f64> {
        match *self {
            EscapeGuard::Auto if system.is_linear() => None,
            EscapeGuard::Auto => {
                let barrier = (system.omega * system.omega / system.lambda.abs()).powf(1.0 / f64::from(system.n - 2));
                Some(10.0 * 1.0f64.max(x.abs()).max(p.abs() / system.omega).max(barrier))
            }
            EscapeGuard::Bound(b) => Some(b),
            EscapeGuard::Off => None,
        }
    }
}

/// Everything that enters the equations of motion.
#[derive(Debug, Clone, PartialEq)]
pub struct ForceModel {
    pub system: SystemParams,
    pub terms: Vec<HamiltonianTerm>,
    pub observable: Option<ObservableCoupling>,
    pub guard: EscapeGuard,
}

impl ForceModel {
    /// Uncoupled oscillator.
    pub fn free(system: SystemParams) -> Self {
        ForceModel {
            system,
            terms: Vec::new(),
            observable: None,
            guard: EscapeGuard::Auto,
        }
    }

    /// Oscillator with the plain pointer coupling `−g(t) Q x`.
    pub fn coupled(system: SystemParams, meter: &MeterParams) -> Self {
        ForceModel::free(system).with_term(HamiltonianTerm {
            q_pow: 1,
            x_pow: 1,
            p_pow: 0,
            coefficient: Coefficient::Window {
                value: -meter.g0,
                end: meter.duration,
            },
        })
    }

    pub fn with_term(mut self, term: HamiltonianTerm) -> Self {
        self.terms.push(term);
        self
    }

    /// Add every term of `schedule`, scaled by `λ^order`.
    pub fn with_schedule(mut self, schedule: &CompensationSchedule) -> Self {
        let scale = self.system.lambda.powi(schedule.order as i32);
        if scale == 0.0 {
            return self;
        }
        for term in &schedule.terms {
            let table = term.coefficient.map(|_, v| v * scale);
            self.terms.push(HamiltonianTerm {
                q_pow: term.q_pow,
                x_pow: term.x_pow,
                p_pow: term.p_pow,
                coefficient: Coefficient::Table(table),
            });
        }
        self
    }

    pub fn with_observable(mut self, observable: ObservableCoupling) -> Self {
        self.observable = Some(observable);
        self
    }

    pub fn with_guard(mut self, guard: EscapeGuard) -> Self {
        self.guard = guard;
        self
    }

    /// The flow is linear in `(x, p, Q)` with no escape bound, so RK4 maps
    /// the initial data linearly onto the pointer shift.
    pub fn is_linear(&self) -> bool {
        let terms_quadratic = self
            .terms
            .iter()
            .all(|t| u32::from(t.q_pow) + u32::from(t.x_pow) + u32::from(t.p_pow) == 2);
        self.system.is_linear()
            && terms_quadratic
            && !matches!(self.observable, Some(ObservableCoupling::ExactAverage { .. }))
            && !matches!(self.guard, EscapeGuard::Bound(_))
    }

    /// `(ẋ, ṗ, Ṗ)`. A failure inside a nested flow is reported through
    /// `failure` and yields a zero derivative.
    fn rhs(&self, t: f64, y: &[f64; 3], q: f64, failure: &mut Option<Error>) -> [f64; 3] {
        let (x, p) = (y[0], y[1]);
        let mut dx = p;
        let mut dp = self.system.force(x);
        let mut dbig = 0.0;
        for term in &self.terms {
            let c = term.coefficient.eval(t);
            if c == 0.0 {
                continue;
            }
            let [hx, hp, hq] = monomial_gradient(c, term.q_pow, term.x_pow, term.p_pow, x, p, q);
            dx += hp;
            dp -= hx;
            dbig -= hq;
        }
        if let Some(obs) = &self.observable {
            let (g, value, grad) = match obs {
                ObservableCoupling::LinearAverage { meter, omega } => {
                    let g = meter.coupling(t);
                    let grad = conserved_xbar_linear_gradient(t, meter.duration, *omega);
                    (g, grad[0] * x + grad[1] * p, grad)
                }
                ObservableCoupling::ExactAverage { meter, average } => {
                    let g = meter.coupling(t);
                    if g == 0.0 {
                        (0.0, 0.0, [0.0; 2])
                    } else {
                        match average.value_and_gradient(x, p, t) {
                            Ok((v, grad)) => (g, v, grad),
                            Err(e) => {
                                *failure = Some(e);
                                return [0.0; 3];
                            }
                        }
                    }
                }
            };
            dx -= g * q * grad[1];
            dp += g * q * grad[0];
            dbig += g * value;
        }
        [dx, dp, dbig]
    }
}

/// States on the integration grid.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryRecord {
    pub grid: TimeGrid,
    /// `states[i]` at `grid.time(i)`; truncated after an escape.
    pub states: Vec<PhaseState>,
    pub escaped_at: Option<f64>,
}

impl TrajectoryRecord {
    pub fn escaped(&self) -> bool {
        self.escaped_at.is_some()
    }

    pub fn final_state(&self) -> &PhaseState {
        self.states.last().expect("trajectory holds the initial state")
    }

    /// Pointer shift `P(T) − P(0)`.
    pub fn readout(&self) -> f64 {
        self.final_state().big_p - self.states[0].big_p
    }

    /// `(1/T) ∫ x dt` by Simpson's rule on the grid.
    pub fn window_average(&self) -> f64 {
        let xs: Vec<f64> = self.states.iter().map(|s| s.x).collect();
        simpson(&xs, self.grid.step()) / self.grid.duration()
    }

    /// Largest deviation of `f(state, t)` from its initial value.
    pub fn max_drift(&self, f: impl Fn(&PhaseState, f64) -> f64) -> f64 {
        let first = f(&self.states[0], 0.0);
        self.states
            .iter()
            .enumerate()
            .map(|(i, s)| (f(s, self.grid.time(i)) - first).abs())
            .fold(0.0, f64::max)
    }

    pub fn energy_drift(&self, system: &SystemParams) -> f64 {
        self.max_drift(|s, _| system.energy(s.x, s.p))
    }
}

/// Integrate the coupled equations over `grid` with RK4.
pub fn integrate(force: &ForceModel, initial: PhaseState, grid: TimeGrid) -> TrajectoryRecord {
    let q = initial.big_q;
    let bound = force.guard.bound(&force.system, initial.x, initial.p);
    let h = grid.step();
    let mut y = [initial.x, initial.p, initial.big_p];
    let mut states = Vec::with_capacity(grid.steps() + 1);
    states.push(initial);
    let mut escaped_at = None;
    let mut failure = None;
    for i in 0..grid.steps() {
        let mut f = |t: f64, y: &[f64; 3]| force.rhs(t, y, q, &mut failure);
        y = rk4::step(&mut f, grid.time(i), &y, h);
        let out_of_bounds = bound.is_some_and(|b| y[0].abs() > b);
        if failure.is_some() || out_of_bounds || !y.iter().all(|v| v.is_finite()) {
            escaped_at = Some(grid.time(i + 1));
            break;
        }
        states.push(PhaseState::new(y[0], y[1], y[2], q));
    }
    TrajectoryRecord {
        grid,
        states,
        escaped_at,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Forward,
    Inverse,
}

/// Uncoupled evolution by `±duration` under the oscillator Hamiltonian.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlowMap {
    pub system: SystemParams,
    pub direction: Direction,
    pub duration: f64,
    pub steps: usize,
}

impl FlowMap {
    /// Flow with step at most `h` (the count is rounded up).
    pub fn new(system: SystemParams, direction: Direction, duration: f64, h: f64) -> Self {
        let steps = if duration == 0.0 {
            0
        } else {
            (duration.abs() / h).ceil().max(1.0) as usize
        };
        FlowMap {
            system,
            direction,
            duration: duration.abs(),
            steps,
        }
    }

    pub fn inverse(&self) -> Self {
        let direction = match self.direction {
            Direction::Forward => Direction::Inverse,
            Direction::Inverse => Direction::Forward,
        };
        FlowMap { direction, ..*self }
    }

    fn signed_step(&self) -> f64 {
        let h = self.duration / self.steps.max(1) as f64;
        match self.direction {
            Direction::Forward => h,
            Direction::Inverse => -h,
        }
    }
}

/// Evolve `(x, p)` along the free flow.
pub fn flow(map: &FlowMap, point: (f64, f64)) -> Result<(f64, f64)> {
    let (state, _) = flow_tangent(map, point, false)?;
    Ok(state)
}

/// Image point and the 2×2 Jacobian `∂(x, p)/∂(x₀, p₀)`.
pub type PointAndJacobian = ((f64, f64), [[f64; 2]; 2]);

/// Evolve `(x, p)` and the Jacobian `∂(x, p)/∂(x_start, p_start)`.
pub fn flow_with_jacobian(map: &FlowMap, point: (f64, f64)) -> Result<PointAndJacobian> {
    flow_tangent(map, point, true)
}

fn flow_tangent(
    map: &FlowMap,
    point: (f64, f64),
    with_tangent: bool,
) -> Result<PointAndJacobian> {
    let system = map.system;
    let bound = EscapeGuard::Auto.bound(&system, point.0, point.1);
    let h = map.signed_step();
    let mut y = [point.0, point.1, 1.0, 0.0, 0.0, 1.0];
    for i in 0..map.steps {
        let t = i as f64 * h;
        y = if with_tangent {
            rk4::step(&mut |_t, y: &[f64; 6]| tangent_rhs(&system, y), t, &y, h)
        } else {
            let s = rk4::step(&mut |_t, y: &[f64; 2]| [y[1], system.force(y[0])], t, &[y[0], y[1]], h);
            [s[0], s[1], 1.0, 0.0, 0.0, 1.0]
        };
        if bound.is_some_and(|b| y[0].abs() > b) || !y[0].is_finite() || !y[1].is_finite() {
            return Err(Error::Escaped { time: (i + 1) as f64 * h });
        }
    }
    Ok(((y[0], y[1]), [[y[2], y[3]], [y[4], y[5]]]))
}

/// Free equations plus their variational (tangent-linear) equations.
/// Layout: `[x, p, J_xx, J_xp, J_px, J_pp]`.
#[inline]
fn tangent_rhs(system: &SystemParams, y: &[f64; 6]) -> [f64; 6] {
    let k = system.force_derivative(y[0]);
    [y[1], system.force(y[0]), y[4], y[5], k * y[2], k * y[3]]
}

/// The window average `φ(x, p, t) = (1/T) ∫₀ᵀ ξ(x₀, p₀, t′) dt′`, where
/// `(x₀, p₀)` is `(x, p)` pulled back along the free flow by `t`.
///
/// Along any uncoupled trajectory φ does not depend on `t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WindowAverage {
    pub system: SystemParams,
    pub duration: f64,
    /// Simpson intervals over the window (even).
    pub steps: usize,
}

impl WindowAverage {
    pub fn new(system: SystemParams, duration: f64, h: f64) -> Result<Self> {
        if !(duration.is_finite() && duration > 0.0) {
            return Err(Error::param("T", "must be finite and > 0"));
        }
        if !(h.is_finite() && h > 0.0) {
            return Err(Error::param("h", "must be finite and > 0"));
        }
        let steps = (duration / h).round().max(2.0) as usize;
        Ok(WindowAverage {
            system,
            duration,
            steps: steps + steps % 2,
        })
    }

    fn step(&self) -> f64 {
        self.duration / self.steps as f64
    }

    pub fn value(&self, x: f64, p: f64, t: f64) -> Result<f64> {
        let start = self.pull_back(x, p, t, false)?.0;
        Ok(self.forward_average(start, false)?.0)
    }

    pub fn value_and_gradient(&self, x: f64, p: f64, t: f64) -> Result<(f64, [f64; 2])> {
        let (start, back) = self.pull_back(x, p, t, true)?;
        let (value, dstart) = self.forward_average(start, true)?;
        let grad = [
            dstart[0] * back[0][0] + dstart[1] * back[1][0],
            dstart[0] * back[0][1] + dstart[1] * back[1][1],
        ];
        Ok((value, grad))
    }

    fn pull_back(&self, x: f64, p: f64, t: f64, tangent: bool) -> Result<PointAndJacobian> {
        if t == 0.0 {
            return Ok(((x, p), [[1.0, 0.0], [0.0, 1.0]]));
        }
        let direction = if t > 0.0 {
            Direction::Inverse
        } else {
            Direction::Forward
        };
        let map = FlowMap::new(self.system, direction, t, self.step());
        flow_tangent(&map, (x, p), tangent)
    }

    /// Simpson average of `x` over the forward window and of the first row
    /// of the tangent map.
    fn forward_average(&self, start: (f64, f64), tangent: bool) -> Result<(f64, [f64; 2])> {
        let system = self.system;
        let bound = EscapeGuard::Auto.bound(&system, start.0, start.1);
        let h = self.step();
        let mut y = [start.0, start.1, 1.0, 0.0, 0.0, 1.0];
        let mut acc = [y[0], y[2], y[3]];
        for i in 1..=self.steps {
            y = if tangent {
                rk4::step(&mut |_t, y: &[f64; 6]| tangent_rhs(&system, y), 0.0, &y, h)
            } else {
                let s = rk4::step(&mut |_t, y: &[f64; 2]| [y[1], system.force(y[0])], 0.0, &[y[0], y[1]], h);
                [s[0], s[1], 0.0, 0.0, 0.0, 0.0]
            };
            if bound.is_some_and(|b| y[0].abs() > b) || !y[0].is_finite() {
                return Err(Error::Escaped { time: i as f64 * h });
            }
            let w = if i == self.steps {
                1.0
            } else if i % 2 == 1 {
                4.0
            } else {
                2.0
            };
            acc[0] += w * y[0];
            acc[1] += w * y[2];
            acc[2] += w * y[3];
        }
        let scale = h / (3.0 * self.duration);
        Ok((acc[0] * scale, [acc[1] * scale, acc[2] * scale]))
    }
}

/// `φ(x(t), p(t), t, T)` with integrator step `h`.
pub fn phi_constant(state: (f64, f64), t: f64, duration: f64, system: &SystemParams, h: f64) -> Result<f64> {
    WindowAverage::new(*system, duration, h)?.value(state.0, state.1, t)
}

/// `(∂φ/∂x, ∂φ/∂p)` from the variational equations of the free flow.
pub fn phi_gradient(
    state: (f64, f64),
    t: f64,
    duration: f64,
    system: &SystemParams,
    h: f64,
) -> Result<[f64; 2]> {
    Ok(WindowAverage::new(*system, duration, h)?
        .value_and_gradient(state.0, state.1, t)?
        .1)
}
