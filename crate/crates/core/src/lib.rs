//! Numerics for continuous (finite-duration) measurement of a harmonic
//! oscillator with a polynomial anharmonicity
//!
//! ```text
//! H = (p² + Ω² x²)/2 − (λ/n) xⁿ,     H_I = −g(t) Q x  (+ compensation terms)
//! ```
//!
//! The pointer coordinate `Q` is frozen during the interaction and the
//! conjugate `P` accumulates `∫ g(t) x(t) dt`. The crate covers
//!
//! * closed-form linear back-reaction and compensation formulas ([`model`]),
//! * fixed-step RK4 dynamics, flow maps and the nonlinear window average as a
//!   constant of motion ([`dynamics`]),
//! * the kernel-integral perturbation series and its order-by-order
//!   compensation schedules ([`perturbation`], [`schedule`]),
//! * seeded Monte-Carlo measurement ensembles ([`measurement`]),
//! * golden-section optimisation, power-law fits and breakdown scans
//!   ([`analysis`]).
//!
//! The crate is `no_std` and only needs `alloc`.
#![no_std]

extern crate alloc;

pub mod analysis;
pub mod dynamics;
mod error;
pub mod measurement;
pub mod model;
pub mod perturbation;
pub mod quadrature;
pub mod rk4;
pub mod schedule;
pub mod stats;

pub use error::{Error, Result};
pub use model::{FreeSolution, MeterParams, PhaseState, SystemParams};
