//! Tabulated time coefficients and monomial compensation schedules.
//!
//! A schedule is a list of Hamiltonian terms `c(t) Qᵃ xᵇ pᶜ` whose
//! coefficients are sampled on a uniform grid covering the coupling window.
//! The same representation holds the spring term, the first-order terms and
//! the β correction.

use alloc::string::String;
use alloc::vec::Vec;


#[allow(unused_imports)] // inherent methods shadow it whenever std is linked
use num_traits::Float;

use crate::model::ipow;
use crate::{Error, Result};

/// Relative distance to a node below which a lookup is treated as exact.
const NODE_SNAP: f64 = 1e-9;

/// Function sampled on `t_i = i·step`, `i = 0..len`; zero outside the grid.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowTable {
    step: f64,
    values: Vec<f64>,
}

impl WindowTable {
    pub fn new(step: f64, values: Vec<f64>) -> Result<Self> {
        if !(step.is_finite() && step > 0.0) {
            return Err(Error::param("step", "must be finite and > 0"));
        }
        if values.len() < 2 {
            return Err(Error::param("values", "need at least two nodes"));
        }
        Ok(WindowTable { step, values })
    }

    /// Tabulate `f` on `steps + 1` nodes over `[0, end]`.
    pub fn tabulate(end: f64, steps: usize, f: impl Fn(f64) -> f64) -> Self {
        let step = end / steps as f64;
        let values = (0..=steps)
            .map(|i| f(if i == steps { end } else { i as f64 * step }))
            .collect();
        WindowTable { step, values }
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn end(&self) -> f64 {
        self.step * (self.values.len() - 1) as f64
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn node_time(&self, i: usize) -> f64 {
        i as f64 * self.step
    }

    pub fn map(&self, f: impl Fn(f64, f64) -> f64) -> Self {
        let values = self
            .values
            .iter()
            .enumerate()
            .map(|(i, v)| f(self.node_time(i), *v))
            .collect();
        WindowTable {
            step: self.step,
            values,
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Value at `t`; exact on nodes, cubic Lagrange interpolation between.
    pub fn eval(&self, t: f64) -> f64 {
        let last = self.values.len() - 1;
        let s = t / self.step;
        if s < -NODE_SNAP || s > last as f64 + NODE_SNAP {
            return 0.0;
        }
        // s > −1/2 here, so truncating casts act as round and floor
        let nearest = (s + 0.5) as usize;
        if (s - nearest as f64).abs() < NODE_SNAP {
            return self.values[nearest.min(last)];
        }
        let floor = s.max(0.0) as usize;
        if last < 3 {
            let i = floor.min(last - 1);
            let u = s - i as f64;
            return self.values[i] * (1.0 - u) + self.values[i + 1] * u;
        }
        let base = floor.clamp(1, last - 2) - 1;
        let u = s - base as f64;
        let v = &self.values[base..base + 4];
        // Lagrange weights for nodes 0, 1, 2, 3
        let w0 = -(u - 1.0) * (u - 2.0) * (u - 3.0) / 6.0;
        let w1 = u * (u - 2.0) * (u - 3.0) / 2.0;
        let w2 = -u * (u - 1.0) * (u - 3.0) / 2.0;
        let w3 = u * (u - 1.0) * (u - 2.0) / 6.0;
        w0 * v[0] + w1 * v[1] + w2 * v[2] + w3 * v[3]
    }
}

/// One Hamiltonian monomial `c(t) Qᵃ xᵇ pᶜ`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScheduleTerm {
    pub q_pow: u8,
    pub x_pow: u8,
    pub p_pow: u8,
    pub coefficient: WindowTable,
}

impl ScheduleTerm {
    pub fn new(q_pow: u8, x_pow: u8, p_pow: u8, coefficient: WindowTable) -> Self {
        ScheduleTerm {
            q_pow,
            x_pow,
            p_pow,
            coefficient,
        }
    }

    /// `(∂H/∂x, ∂H/∂p, ∂H/∂Q)` at time `t`.
    #[inline]
    pub fn gradient(&self, t: f64, x: f64, p: f64, q: f64) -> [f64; 3] {
        let c = self.coefficient.eval(t);
        if c == 0.0 {
            return [0.0; 3];
        }
        monomial_gradient(c, self.q_pow, self.x_pow, self.p_pow, x, p, q)
    }
}

/// Gradient of `c Qᵃ xᵇ pᶜ` with respect to `(x, p, Q)`.
#[inline]
pub fn monomial_gradient(c: f64, a: u8, b: u8, cp: u8, x: f64, p: f64, q: f64) -> [f64; 3] {
    let pw = |v: f64, k: u8| ipow(v, u32::from(k));
    let dpw = |v: f64, k: u8| {
        if k == 0 {
            0.0
        } else {
            f64::from(k) * pw(v, k - 1)
        }
    };
    let (qa, xb, pc) = (pw(q, a), pw(x, b), pw(p, cp));
    [
        c * qa * dpw(x, b) * pc,
        c * qa * xb * dpw(p, cp),
        c * dpw(q, a) * xb * pc,
    ]
}

/// A set of compensation terms that together cancel the readout error of
/// one order in λ.
#[derive(Debug, Clone, PartialEq)]
pub struct CompensationSchedule {
    /// Power of λ multiplying every term.
    pub order: u32,
    /// Free-form provenance, e.g. the sign convention used.
    pub note: String,
    pub terms: Vec<ScheduleTerm>,
}

/// One row of the schedule CSV: `t, a, b, c, coefficient`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScheduleRow {
    pub t: f64,
    pub a: u8,
    pub b: u8,
    pub c: u8,
    pub coefficient: f64,
}

impl CompensationSchedule {
    pub fn new(order: u32, note: impl Into<String>, terms: Vec<ScheduleTerm>) -> Self {
        CompensationSchedule {
            order,
            note: note.into(),
            terms,
        }
    }

    /// Largest coefficient magnitude over all terms and nodes.
    pub fn max_abs(&self) -> f64 {
        self.terms
            .iter()
            .fold(0.0, |m, t| m.max(t.coefficient.max_abs()))
    }

    pub fn rows(&self) -> Vec<ScheduleRow> {
        let mut rows = Vec::new();
        for term in &self.terms {
            for (i, v) in term.coefficient.values().iter().enumerate() {
                rows.push(ScheduleRow {
                    t: term.coefficient.node_time(i),
                    a: term.q_pow,
                    b: term.x_pow,
                    c: term.p_pow,
                    coefficient: *v,
                });
            }
        }
        rows
    }

    /// Rebuild a schedule from rows. Rows of one monomial must be sorted in
    /// time, start at `t = 0` and be uniformly spaced.
    pub fn from_rows(order: u32, note: impl Into<String>, rows: &[ScheduleRow]) -> Result<Self> {
        // (powers, [(t, coefficient)])
        type Samples = Vec<(f64, f64)>;
        let mut terms: Vec<((u8, u8, u8), Samples)> = Vec::new();
        for r in rows {
            let key = (r.a, r.b, r.c);
            match terms.iter_mut().find(|(k, _)| *k == key) {
                Some((_, pts)) => pts.push((r.t, r.coefficient)),
                None => terms.push((key, alloc::vec![(r.t, r.coefficient)])),
            }
        }
        let mut out = Vec::with_capacity(terms.len());
        for ((a, b, c), pts) in terms {
            if pts.len() < 2 || pts[0].0.abs() > 1e-12 {
                return Err(Error::param("schedule", "each term needs >= 2 rows starting at t = 0"));
            }
            let step = pts[1].0 - pts[0].0;
            for (i, (t, _)) in pts.iter().enumerate() {
                if (t - i as f64 * step).abs() > 1e-9 * (1.0 + t.abs()) {
                    return Err(Error::param("schedule", "rows must be on a uniform time grid"));
                }
            }
            let table = WindowTable::new(step, pts.iter().map(|p| p.1).collect())?;
            out.push(ScheduleTerm::new(a, b, c, table));
        }
        Ok(CompensationSchedule::new(order, note, out))
    }
}
