//! Kernel-integral perturbation series in λ and order-by-order compensation.
//!
//! Every quantity is a polynomial in the pointer coordinate `Q` and the free
//! initial data `X = x(0)`, `P = p(0)` whose coefficients are tabulated on a
//! uniform grid over the coupling window. The series obeys
//!
//! ```text
//! x⁽ᵐ⁾(t) = ∫₀ᵗ S⁽ᵐ⁾(t′) D(t − t′) dt′,   D(t) = sin(Ωt)/Ω,
//! ```
//!
//! with `S⁽⁰⁾ = g Q` plus the free motion, `S⁽ᵐ⁾ = [x^(n−1)]⁽ᵐ⁻¹⁾` from the
//! anharmonic force, and the forces of any active compensation schedule.
//!
//! The first-order schedules carry the weight
//! `W(t) = ∫ₜᵀ D(s − t) ds = (1 − cos Ω(T − t))/Ω²`, the readout response to
//! a unit force applied at `t`.

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;

use crate::dynamics::TimeGrid;
use crate::model::{alpha, in_window, one_minus_cos, spring_k_effective, MeterParams, SystemParams};
use crate::quadrature::{kernel_convolution, simpson};
use crate::schedule::{CompensationSchedule, ScheduleTerm, WindowTable};
use crate::{Error, Result};

/// `Qᵃ Xᵇ Pᶜ` with `X`, `P` the free initial position and momentum.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Monomial {
    pub q: u8,
    pub x: u8,
    pub p: u8,
}

impl Monomial {
    pub const ONE: Monomial = Monomial::new(0, 0, 0);

    pub const fn new(q: u8, x: u8, p: u8) -> Self {
        Monomial { q, x, p }
    }

    pub fn degree(&self) -> u32 {
        u32::from(self.q) + u32::from(self.x) + u32::from(self.p)
    }

    pub fn times(&self, other: &Monomial) -> Monomial {
        Monomial::new(self.q + other.q, self.x + other.x, self.p + other.p)
    }

    pub fn eval(&self, q: f64, x: f64, p: f64) -> f64 {
        ipow(q, self.q) * ipow(x, self.x) * ipow(p, self.p)
    }
}

fn ipow(v: f64, k: u8) -> f64 {
    (0..k).fold(1.0, |acc, _| acc * v)
}

/// Polynomial in `(Q, X, P)` with constant coefficients.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Polynomial {
    terms: BTreeMap<Monomial, f64>,
}

impl Polynomial {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_terms(terms: impl IntoIterator<Item = (Monomial, f64)>) -> Self {
        let mut out = Polynomial::new();
        for (m, c) in terms {
            *out.terms.entry(m).or_insert(0.0) += c;
        }
        out
    }

    pub fn coefficient(&self, m: Monomial) -> f64 {
        self.terms.get(&m).copied().unwrap_or(0.0)
    }

    pub fn terms(&self) -> impl Iterator<Item = (Monomial, f64)> + '_ {
        self.terms.iter().map(|(m, c)| (*m, *c))
    }

    pub fn eval(&self, q: f64, x: f64, p: f64) -> f64 {
        self.terms.iter().map(|(m, c)| c * m.eval(q, x, p)).sum()
    }

    /// Terms that vanish at `Q = 0`.
    pub fn q_dependent(&self) -> Polynomial {
        Polynomial {
            terms: self
                .terms
                .iter()
                .filter(|(m, _)| m.q > 0)
                .map(|(m, c)| (*m, *c))
                .collect(),
        }
    }

    /// Euclidean norm of the coefficient vector.
    pub fn norm(&self) -> f64 {
        self.terms.values().map(|c| c * c).sum::<f64>().sqrt()
    }
}

/// Polynomial in `(Q, X, P)` whose coefficients are sampled on a time grid.
#[derive(Debug, Clone, PartialEq)]
pub struct PolyTable {
    len: usize,
    terms: BTreeMap<Monomial, Vec<f64>>,
}

impl PolyTable {
    pub fn zero(len: usize) -> Self {
        PolyTable {
            len,
            terms: BTreeMap::new(),
        }
    }

    /// The constant polynomial `1` on every node.
    pub fn one(len: usize) -> Self {
        let mut out = PolyTable::zero(len);
        out.add_term(Monomial::ONE, &vec![1.0; len], 1.0);
        out
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn monomials(&self) -> impl Iterator<Item = Monomial> + '_ {
        self.terms.keys().copied()
    }

    pub fn coefficient(&self, m: Monomial) -> Option<&[f64]> {
        self.terms.get(&m).map(Vec::as_slice)
    }

    /// `self += scale · values · m`.
    pub fn add_term(&mut self, m: Monomial, values: &[f64], scale: f64) {
        debug_assert_eq!(values.len(), self.len);
        let len = self.len;
        let slot = self.terms.entry(m).or_insert_with(|| vec![0.0; len]);
        for (s, v) in slot.iter_mut().zip(values) {
            *s += scale * v;
        }
    }

    pub fn add_scaled(&mut self, other: &PolyTable, scale: f64) {
        for (m, values) in &other.terms {
            self.add_term(*m, values, scale);
        }
    }

    /// Node-by-node product.
    pub fn mul(&self, other: &PolyTable) -> PolyTable {
        let mut out = PolyTable::zero(self.len);
        let mut buf = vec![0.0; self.len];
        for (ma, va) in &self.terms {
            for (mb, vb) in &other.terms {
                for ((b, a), c) in buf.iter_mut().zip(va).zip(vb) {
                    *b = a * c;
                }
                out.add_term(ma.times(mb), &buf, 1.0);
            }
        }
        out
    }

    /// Multiply by a time function `w` and the monomial `m`.
    pub fn weighted(&self, w: &[f64], m: Monomial) -> PolyTable {
        let mut out = PolyTable::zero(self.len);
        for (k, values) in &self.terms {
            let v: Vec<f64> = values.iter().zip(w).map(|(a, b)| a * b).collect();
            out.add_term(k.times(&m), &v, 1.0);
        }
        out
    }

    /// Apply the retarded kernel to every coefficient.
    pub fn convolve(&self, step: f64, omega: f64) -> PolyTable {
        PolyTable {
            len: self.len,
            terms: self
                .terms
                .iter()
                .map(|(m, v)| (*m, kernel_convolution(v, step, omega)))
                .collect(),
        }
    }

    /// `∫₀ᵀ` of every coefficient by Simpson's rule.
    pub fn integrate(&self, step: f64) -> Polynomial {
        Polynomial::from_terms(self.terms.iter().map(|(m, v)| (*m, simpson(v, step))))
    }

    /// Values on the grid at a given `(Q, X, P)`.
    pub fn eval(&self, q: f64, x: f64, p: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.len];
        for (m, values) in &self.terms {
            let w = m.eval(q, x, p);
            for (o, v) in out.iter_mut().zip(values) {
                *o += w * v;
            }
        }
        out
    }

    fn filtered(&self, keep: impl Fn(&Monomial) -> bool) -> PolyTable {
        PolyTable {
            len: self.len,
            terms: self
                .terms
                .iter()
                .filter(|(m, _)| keep(m))
                .map(|(m, v)| (*m, v.clone()))
                .collect(),
        }
    }
}

/// One order `x⁽ᵏ⁾(t)` of the series.
#[derive(Debug, Clone, PartialEq)]
pub struct SeriesSolution {
    pub order: u32,
    pub grid: TimeGrid,
    pub omega: f64,
    pub table: PolyTable,
}

impl SeriesSolution {
    /// `x⁽ᵏ⁾` on the grid for concrete `(Q, x(0), p(0))`.
    pub fn eval(&self, q: f64, x: f64, p: f64) -> Vec<f64> {
        self.table.eval(q, x, p)
    }

    /// The part that survives at `Q = 0`: the uncoupled motion `x₀⁽ᵏ⁾`.
    pub fn uncoupled(&self) -> PolyTable {
        self.table.filtered(|m| m.q == 0)
    }

    /// The measurement-induced part `Δx⁽ᵏ⁾`.
    pub fn disturbance(&self) -> PolyTable {
        self.table.filtered(|m| m.q > 0)
    }
}

fn check_window(meter: &MeterParams, grid: &TimeGrid) -> Result<()> {
    if (grid.duration() - meter.duration).abs() > 1e-12 * meter.duration {
        return Err(Error::GridMismatch);
    }
    Ok(())
}

fn node_values(grid: &TimeGrid, f: impl Fn(f64) -> f64) -> Vec<f64> {
    (0..=grid.steps()).map(|i| f(grid.time(i))).collect()
}

fn grid_table(grid: &TimeGrid, f: impl Fn(f64) -> f64) -> WindowTable {
    WindowTable::tabulate(grid.duration(), grid.steps(), f)
}

/// Coefficient of `λʲ` in `(Σᵢ λⁱ xs[i])ᵇ`.
fn power_coefficient(xs: &[&PolyTable], len: usize, b: u32, j: usize) -> Result<PolyTable> {
    if b == 0 {
        return Ok(if j == 0 {
            PolyTable::one(len)
        } else {
            PolyTable::zero(len)
        });
    }
    if j >= xs.len() {
        return Err(Error::InsufficientData {
            needed: j + 1,
            got: xs.len(),
        });
    }
    let mut out = PolyTable::zero(len);
    for (i, xi) in xs.iter().enumerate().take(j + 1) {
        let rest = power_coefficient(xs, len, b - 1, j - i)?;
        out.add_scaled(&xi.mul(&rest), 1.0);
    }
    Ok(out)
}

fn check_term(term: &ScheduleTerm) -> Result<()> {
    if term.p_pow > 0 {
        return Err(Error::UnsupportedTerm {
            q: term.q_pow,
            x: term.x_pow,
            p: term.p_pow,
        });
    }
    Ok(())
}

/// Order-`m` force `−∂H_C/∂x` of all schedules, expanded in λ.
fn schedule_force(
    grid: &TimeGrid,
    xs: &[&PolyTable],
    schedules: &[CompensationSchedule],
    m: usize,
) -> Result<PolyTable> {
    let len = grid.steps() + 1;
    let mut out = PolyTable::zero(len);
    for schedule in schedules.iter().filter(|s| s.order as usize <= m) {
        let j = m - schedule.order as usize;
        for term in &schedule.terms {
            check_term(term)?;
            if term.x_pow == 0 {
                continue;
            }
            let power = power_coefficient(xs, len, u32::from(term.x_pow) - 1, j).map_err(|_| {
                Error::UnsupportedTerm {
                    q: term.q_pow,
                    x: term.x_pow,
                    p: term.p_pow,
                }
            })?;
            let c = node_values(grid, |t| -f64::from(term.x_pow) * term.coefficient.eval(t));
            out.add_scaled(&power.weighted(&c, Monomial::new(term.q_pow, 0, 0)), 1.0);
        }
    }
    Ok(out)
}

/// Zeroth order: free motion plus the linear back-reaction `α(t) Q` and the
/// response to order-zero schedule forces.
pub fn series_x0(
    system: &SystemParams,
    meter: &MeterParams,
    grid: TimeGrid,
    schedules: &[CompensationSchedule],
) -> Result<SeriesSolution> {
    system.validate()?;
    check_window(meter, &grid)?;
    let omega = system.omega;
    let len = grid.steps() + 1;
    let mut table = schedule_force(&grid, &[], schedules, 0)?.convolve(grid.step(), omega);
    let (cos, sin): (Vec<f64>, Vec<f64>) = (0..len)
        .map(|i| {
            let (s, c) = (omega * grid.time(i)).sin_cos();
            (c, s / omega)
        })
        .unzip();
    table.add_term(Monomial::new(0, 1, 0), &cos, 1.0);
    table.add_term(Monomial::new(0, 0, 1), &sin, 1.0);
    table.add_term(
        Monomial::new(1, 0, 0),
        &node_values(&grid, |t| alpha(t, meter, omega)),
        1.0,
    );
    Ok(SeriesSolution {
        order: 0,
        grid,
        omega,
        table,
    })
}

fn next_order(
    system: &SystemParams,
    lower: &[&SeriesSolution],
    schedules: &[CompensationSchedule],
) -> Result<SeriesSolution> {
    let m = lower.len();
    let base = lower[0];
    for (k, s) in lower.iter().enumerate() {
        if s.order as usize != k {
            return Err(Error::param("series", "orders must be consecutive from 0"));
        }
        if s.grid != base.grid {
            return Err(Error::GridMismatch);
        }
    }
    let grid = base.grid;
    let len = grid.steps() + 1;
    let xs: Vec<&PolyTable> = lower.iter().map(|s| &s.table).collect();
    let mut source = power_coefficient(&xs, len, system.n - 1, m - 1)?;
    source.add_scaled(&schedule_force(&grid, &xs, schedules, m)?, 1.0);
    Ok(SeriesSolution {
        order: m as u32,
        grid,
        omega: base.omega,
        table: source.convolve(grid.step(), base.omega),
    })
}

/// First order: the kernel applied to `(x⁽⁰⁾)^(n−1)` plus order-one
/// schedule forces.
pub fn series_x1(
    system: &SystemParams,
    x0: &SeriesSolution,
    schedules: &[CompensationSchedule],
) -> Result<SeriesSolution> {
    next_order(system, &[x0], schedules)
}

/// Second order; for `n = 3` the anharmonic source is `2 x⁽⁰⁾ x⁽¹⁾`.
pub fn series_x2(
    system: &SystemParams,
    x0: &SeriesSolution,
    x1: &SeriesSolution,
    schedules: &[CompensationSchedule],
) -> Result<SeriesSolution> {
    next_order(system, &[x0, x1], schedules)
}

/// `[x⁽⁰⁾, x⁽¹⁾, x⁽²⁾]` in one call.
pub fn series_up_to_second(
    system: &SystemParams,
    meter: &MeterParams,
    grid: TimeGrid,
    schedules: &[CompensationSchedule],
) -> Result<[SeriesSolution; 3]> {
    let x0 = series_x0(system, meter, grid, schedules)?;
    let x1 = series_x1(system, &x0, schedules)?;
    let x2 = series_x2(system, &x0, &x1, schedules)?;
    Ok([x0, x1, x2])
}

/// Pointer shift `P(T) − P(0)` order by order in λ.
///
/// Order `m` collects `∫ g x⁽ᵐ⁾ dt` and the `−∂H_C/∂Q` contributions of the
/// schedules, expanded with the lower orders of the series.
pub fn readout_series(
    meter: &MeterParams,
    series: &[SeriesSolution],
    schedules: &[CompensationSchedule],
) -> Result<Vec<Polynomial>> {
    let Some(first) = series.first() else {
        return Ok(Vec::new());
    };
    let grid = first.grid;
    check_window(meter, &grid)?;
    let len = grid.steps() + 1;
    let xs: Vec<&PolyTable> = series.iter().map(|s| &s.table).collect();
    let g = node_values(&grid, |t| meter.coupling(t));
    let mut out = Vec::with_capacity(series.len());
    for (m, sm) in series.iter().enumerate() {
        let mut rate = sm.table.weighted(&g, Monomial::ONE);
        for schedule in schedules.iter().filter(|s| s.order as usize <= m) {
            let j = m - schedule.order as usize;
            for term in &schedule.terms {
                check_term(term)?;
                if term.q_pow == 0 {
                    continue;
                }
                let power = power_coefficient(&xs, len, u32::from(term.x_pow), j)?;
                let c = node_values(&grid, |t| -f64::from(term.q_pow) * term.coefficient.eval(t));
                rate.add_scaled(&power.weighted(&c, Monomial::new(term.q_pow - 1, 0, 0)), 1.0);
            }
        }
        out.push(rate.integrate(grid.step()));
    }
    Ok(out)
}

/// Readout response `W(t) = (1 − cos Ω(T − t))/Ω²` to a unit force at `t`.
pub fn window_weight(t: f64, meter: &MeterParams, omega: f64) -> f64 {
    if !in_window(t, meter.duration) {
        return 0.0;
    }
    one_minus_cos(omega * (meter.duration - t)) / (omega * omega)
}

/// The `O(λ)` readout error of the spring-compensated scheme,
/// `ΔP⁽¹⁾ = Q (q_x X + q_p P) + q2 Q²`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FirstOrderError {
    /// `2 g₀ ∫ W α cos Ωt dt`.
    pub q_x: f64,
    /// `2 g₀ ∫ W α sin(Ωt)/Ω dt`.
    pub q_p: f64,
    /// `g₀ ∫ W α² dt`.
    pub q2: f64,
}

impl FirstOrderError {
    pub fn eval(&self, q: f64, x: f64, p: f64) -> f64 {
        q * (self.q_x * x + self.q_p * p) + self.q2 * q * q
    }

    /// The same error as a polynomial in `(Q, X, P)`.
    pub fn polynomial(&self) -> Polynomial {
        Polynomial::from_terms([
            (Monomial::new(1, 1, 0), self.q_x),
            (Monomial::new(1, 0, 1), self.q_p),
            (Monomial::new(2, 0, 0), self.q2),
        ])
    }
}

/// `ΔP⁽¹⁾ = g₀ ∫₀ᵀ W(t) [2 α(t) Q x₀(t) + α²(t) Q²] dt` for `n = 3`.
pub fn delta_p_first_order(meter: &MeterParams, omega: f64, grid: TimeGrid) -> Result<FirstOrderError> {
    check_window(meter, &grid)?;
    let h = grid.step();
    let wa = |t: f64| meter.g0 * window_weight(t, meter, omega) * alpha(t, meter, omega);
    let q_x = simpson(&node_values(&grid, |t| 2.0 * wa(t) * (omega * t).cos()), h);
    let q_p = simpson(&node_values(&grid, |t| 2.0 * wa(t) * (omega * t).sin() / omega), h);
    let q2 = simpson(&node_values(&grid, |t| wa(t) * alpha(t, meter, omega)), h);
    Ok(FirstOrderError { q_x, q_p, q2 })
}

/// Spring `½ k Q²` with the constant that cancels the linear back-reaction.
pub fn comp_zeroth_order(meter: &MeterParams, omega: f64, grid: TimeGrid) -> CompensationSchedule {
    let half_k = 0.5 * spring_k_effective(meter, omega);
    CompensationSchedule::new(
        0,
        "spring: +1/2 k Q^2, k = g0^2/Omega^2 (1 - sin(Omega T)/(Omega T))",
        vec![ScheduleTerm::new(2, 0, 0, grid_table(&grid, |_| half_k))],
    )
}

/// `ΔH⁽¹⁾ = g W [α Q² x − ⅓ α² Q³]`, cancelling `ΔP⁽¹⁾` through `−∂H/∂Q`.
pub fn comp_first_order(meter: &MeterParams, omega: f64, grid: TimeGrid) -> CompensationSchedule {
    let gwa = |t: f64| meter.coupling(t) * window_weight(t, meter, omega) * alpha(t, meter, omega);
    CompensationSchedule::new(
        1,
        "first order: +g W alpha Q^2 x - (1/3) g W alpha^2 Q^3, W(t) = (1 - cos Omega(T-t))/Omega^2",
        vec![
            ScheduleTerm::new(2, 1, 0, grid_table(&grid, gwa)),
            ScheduleTerm::new(
                3,
                0,
                0,
                grid_table(&grid, |t| -gwa(t) * alpha(t, meter, omega) / 3.0),
            ),
        ],
    )
}

/// `β(t)` on the grid: the `λQ²` coefficient that the force `−g W α Q²` of
/// [`comp_first_order`] adds to `x(t)`, `β = −∫₀ᵗ g W α D(t − t′) dt′ ≤ 0`.
pub fn beta_table(meter: &MeterParams, omega: f64, grid: TimeGrid) -> WindowTable {
    let source = node_values(&grid, |t| {
        -meter.coupling(t) * window_weight(t, meter, omega) * alpha(t, meter, omega)
    });
    let values = kernel_convolution(&source, grid.step(), omega);
    WindowTable::new(grid.step(), values).expect("grid has at least two nodes")
}

/// `β(t)` interpolated from [`beta_table`].
pub fn beta(t: f64, meter: &MeterParams, omega: f64, grid: TimeGrid) -> f64 {
    beta_table(meter, omega, grid).eval(t)
}

/// `⅓ g β Q³`, cancelling the readout shift `g β Q²` that the β term of
/// `x(t)` produces.
pub fn comp_beta(meter: &MeterParams, omega: f64, grid: TimeGrid) -> CompensationSchedule {
    let b = beta_table(meter, omega, grid);
    let coefficient = b.map(|t, v| meter.coupling(t) * v / 3.0);
    CompensationSchedule::new(
        1,
        "beta: +(1/3) g beta Q^3, beta = -int g W alpha D <= 0",
        vec![ScheduleTerm::new(3, 0, 0, coefficient)],
    )
}

/// Spring, `ΔH⁽¹⁾` and the β term: the complete first-order compensation.
pub fn first_order_compensation(meter: &MeterParams, omega: f64, grid: TimeGrid) -> Vec<CompensationSchedule> {
    vec![
        comp_zeroth_order(meter, omega, grid),
        comp_first_order(meter, omega, grid),
        comp_beta(meter, omega, grid),
    ]
}

/// Tables `c₁`, `c₂` with `∫₀ᵗ p₀ dt′ = c₁(t) x₀(t) + c₂(t) p₀(t)` for every
/// free harmonic motion: `c₁ = 1 − cos Ωt`, `c₂ = sin(Ωt)/Ω`.
pub fn reduce_free_integral(grid: TimeGrid, omega: f64) -> (WindowTable, WindowTable) {
    (
        grid_table(&grid, |t| one_minus_cos(omega * t)),
        grid_table(&grid, |t| (omega * t).sin() / omega),
    )
}

/// Readout-level monomials of the second-order error, each paired with the
/// Hamiltonian monomial whose `−∂/∂Q` produces it.
///
/// With time-dependent coefficients the two quadratic terms `Q²x²` and
/// `Q²{x,p}` reach every quadratic form in `(X, P)`, so `QP²` belongs to them.
pub const SECOND_ORDER_BASIS: [(Monomial, &str); 6] = [
    (Monomial::new(1, 2, 0), "Q^2 x^2"),
    (Monomial::new(1, 1, 1), "Q^2 {x,p}"),
    (Monomial::new(1, 0, 2), "Q^2 x^2, Q^2 {x,p}"),
    (Monomial::new(2, 1, 0), "Q^3 x"),
    (Monomial::new(2, 0, 1), "Q^3 p"),
    (Monomial::new(3, 0, 0), "Q^4"),
];

/// The `Q`-dependent part of the `O(λ²)` readout with `schedules` active.
pub fn delta_p_second_order(
    system: &SystemParams,
    meter: &MeterParams,
    grid: TimeGrid,
    schedules: &[CompensationSchedule],
) -> Result<Polynomial> {
    let series = series_up_to_second(system, meter, grid, schedules)?;
    let readout = readout_series(meter, &series, schedules)?;
    Ok(readout[2].q_dependent())
}
