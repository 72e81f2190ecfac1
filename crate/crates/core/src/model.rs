//! Parameter types and closed-form formulas for the linear measurement.
//!
//! Units are natural (ħ = 1, oscillator mass 1). The pointer is prepared in a
//! minimum-uncertainty state, so `ΔQ = 1 / (2 ΔP)`.


#[allow(unused_imports)] // inherent methods shadow it whenever std is linked
use num_traits::Float;

use crate::{Error, Result};

/// Below this value of `ΩT` the window factor switches to its Taylor series.
const SMALL_ANGLE: f64 = 1e-3;

/// Oscillator parameters: `H = (p² + Ω² x²)/2 − (λ/n) xⁿ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SystemParams {
    pub omega: f64,
    pub lambda: f64,
    pub n: u32,
}

impl SystemParams {
    pub fn new(omega: f64, lambda: f64, n: u32) -> Result<Self> {
        let params = SystemParams { omega, lambda, n };
        params.validate()?;
        Ok(params)
    }

    /// Purely harmonic oscillator (λ = 0, n = 3).
    pub fn linear(omega: f64) -> Self {
        SystemParams {
            omega,
            lambda: 0.0,
            n: 3,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.omega.is_finite() && self.omega > 0.0) {
            return Err(Error::param("omega", "must be finite and > 0"));
        }
        if !self.lambda.is_finite() {
            return Err(Error::param("lambda", "must be finite"));
        }
        if self.n < 3 {
            return Err(Error::param("n", "must be >= 3"));
        }
        Ok(())
    }

    pub fn is_linear(&self) -> bool {
        self.lambda == 0.0
    }

    /// Conservative force `−∂V/∂x = −Ω² x + λ x^(n−1)`.
    #[inline]
    pub fn force(&self, x: f64) -> f64 {
        -self.omega * self.omega * x + self.lambda * ipow(x, self.n - 1)
    }

    /// `∂(force)/∂x`, used by the variational equations.
    #[inline]
    pub fn force_derivative(&self, x: f64) -> f64 {
        -self.omega * self.omega + self.lambda * f64::from(self.n - 1) * ipow(x, self.n - 2)
    }

    pub fn energy(&self, x: f64, p: f64) -> f64 {
        0.5 * (p * p + self.omega * self.omega * x * x)
            - self.lambda / f64::from(self.n) * ipow(x, self.n)
    }
}

/// Pointer coupling: rectangular `g(t) = g₀` on `[0, T]`, readout resolution `ΔP`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeterParams {
    pub g0: f64,
    pub duration: f64,
    pub delta_p: f64,
}

impl MeterParams {
    pub fn new(g0: f64, duration: f64, delta_p: f64) -> Result<Self> {
        let meter = MeterParams {
            g0,
            duration,
            delta_p,
        };
        meter.validate()?;
        Ok(meter)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.g0.is_finite() {
            return Err(Error::param("g0", "must be finite"));
        }
        if !(self.duration.is_finite() && self.duration > 0.0) {
            return Err(Error::param("T", "must be finite and > 0"));
        }
        if !(self.delta_p.is_finite() && self.delta_p > 0.0) {
            return Err(Error::param("delta_p", "must be finite and > 0"));
        }
        Ok(())
    }

    /// Pointer coordinate spread of a minimum-uncertainty state.
    #[inline]
    pub fn delta_q(&self) -> f64 {
        0.5 / self.delta_p
    }

    /// `g(t)`; the window is closed so that the integration end points see `g₀`.
    #[inline]
    pub fn coupling(&self, t: f64) -> f64 {
        if in_window(t, self.duration) {
            self.g0
        } else {
            0.0
        }
    }

    pub fn with_delta_p(self, delta_p: f64) -> Self {
        MeterParams { delta_p, ..self }
    }
}

/// Instantaneous values of the oscillator and pointer variables.
///
/// `big_q` never changes during an evolution: the pointer is infinitely heavy.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PhaseState {
    pub x: f64,
    pub p: f64,
    pub big_p: f64,
    pub big_q: f64,
}

impl PhaseState {
    pub fn new(x: f64, p: f64, big_p: f64, big_q: f64) -> Self {
        PhaseState { x, p, big_p, big_q }
    }
}

/// Free harmonic solution `x₀(t) = x₀ cos Ωt + (p₀/Ω) sin Ωt`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct FreeSolution {
    pub x0: f64,
    pub p0: f64,
}

impl FreeSolution {
    pub fn new(x0: f64, p0: f64) -> Self {
        FreeSolution { x0, p0 }
    }

    pub fn at(&self, t: f64, omega: f64) -> (f64, f64) {
        let (s, c) = (omega * t).sin_cos();
        (
            self.x0 * c + self.p0 / omega * s,
            -omega * self.x0 * s + self.p0 * c,
        )
    }

    /// `∫₀ᵀ x₀(t) dt`.
    pub fn window_integral(&self, duration: f64, omega: f64) -> f64 {
        let u = omega * duration;
        self.x0 * duration * sinc(u) + self.p0 * one_minus_cos(u) / (omega * omega)
    }
}

/// `t ∈ [0, end]` up to rounding of accumulated step times.
#[inline]
pub fn in_window(t: f64, end: f64) -> bool {
    let slack = 1e-12 * end.abs().max(1.0);
    t >= -slack && t <= end + slack
}

/// `sin u / u` with the removable singularity filled in.
pub fn sinc(u: f64) -> f64 {
    if u.abs() < SMALL_ANGLE {
        let u2 = u * u;
        1.0 - u2 / 6.0 + u2 * u2 / 120.0
    } else {
        u.sin() / u
    }
}

/// `1 − cos u`, written as `2 sin²(u/2)` to avoid cancellation.
#[inline]
pub fn one_minus_cos(u: f64) -> f64 {
    let s = (0.5 * u).sin();
    2.0 * s * s
}

/// The window factor `1 − sin(ΩT)/(ΩT)`.
pub fn window_factor(omega_t: f64) -> f64 {
    if omega_t.abs() < SMALL_ANGLE {
        let u2 = omega_t * omega_t;
        u2 / 6.0 - u2 * u2 / 120.0 + u2 * u2 * u2 / 5040.0
    } else {
        1.0 - omega_t.sin() / omega_t
    }
}

/// Retarded response kernel `D(t) = sin(Ωt)/Ω`.
#[inline]
pub fn kernel_d(t: f64, omega: f64) -> f64 {
    (omega * t).sin() / omega
}

/// Linear back-reaction coefficient `α(t) = g₀ (1 − cos Ωt)/Ω²`:
/// the coupled solution is `x₀(t) + α(t) Q`.
#[inline]
pub fn alpha(t: f64, meter: &MeterParams, omega: f64) -> f64 {
    meter.g0 * one_minus_cos(omega * t) / (omega * omega)
}

/// Spring constant whose window integral cancels the `Q` term of the readout:
/// `k = g₀²/Ω² (1 − sin ΩT/(ΩT))`.
pub fn spring_k_effective(meter: &MeterParams, omega: f64) -> f64 {
    meter.g0 * meter.g0 / (omega * omega) * window_factor(omega * meter.duration)
}

/// Readout shift `δP = P(T) − P(0)` of the linear, uncompensated coupling.
pub fn delta_p_linear(free: &FreeSolution, meter: &MeterParams, omega: f64, q: f64) -> f64 {
    let t = meter.duration;
    meter.g0 * free.window_integral(t, omega)
        + q * meter.g0 * meter.g0 * t / (omega * omega) * window_factor(omega * t)
}

/// Two-term uncertainty of the naive estimate of `x̄`, added linearly:
/// `ΔP/(g₀T) + (g₀/Ω²)(1 − sinc)/ΔP`.
pub fn xbar_uncertainty(delta_p: f64, meter: &MeterParams, omega: f64) -> f64 {
    let t = meter.duration;
    delta_p / (meter.g0 * t) + meter.g0 / (omega * omega) * window_factor(omega * t) / delta_p
}

/// `(2/Ω) √(1 − sin ΩT/(ΩT))`, tending to `√(2/3) T` for short windows.
pub fn minimal_xbar_uncertainty(duration: f64, omega: f64) -> f64 {
    2.0 / omega * window_factor(omega * duration).sqrt()
}

/// Standard deviation of the naive estimator for a Gaussian pointer with
/// `ΔQ = 1/(2ΔP)` and Gaussian readout noise of width `ΔP`; the two
/// independent contributions add in quadrature.
pub fn ensemble_xbar_spread(delta_p: f64, meter: &MeterParams, omega: f64) -> f64 {
    let readout = delta_p / (meter.g0 * meter.duration);
    let back_reaction = meter.g0 / (omega * omega)
        * window_factor(omega * meter.duration)
        * (0.5 / delta_p);
    readout.hypot(back_reaction)
}

/// Minimum over `ΔP` of [`ensemble_xbar_spread`]: `√(1 − sinc) / (Ω √T)`.
pub fn minimal_ensemble_xbar_spread(duration: f64, omega: f64) -> f64 {
    (window_factor(omega * duration) / duration).sqrt() / omega
}

/// The window average `x̄` of the free linear motion written as a constant of
/// motion in the instantaneous `(x, p)`.
pub fn conserved_xbar_linear(state: &PhaseState, t: f64, duration: f64, omega: f64) -> f64 {
    let [gx, gp] = conserved_xbar_linear_gradient(t, duration, omega);
    gx * state.x + gp * state.p
}

/// `(∂/∂x, ∂/∂p)` of [`conserved_xbar_linear`]; independent of the state.
pub fn conserved_xbar_linear_gradient(t: f64, duration: f64, omega: f64) -> [f64; 2] {
    let prefactor = sinc(0.5 * omega * duration);
    let (s, c) = (omega * (0.5 * duration - t)).sin_cos();
    [prefactor * c, prefactor * s / omega]
}

/// `vᵏ` by repeated multiplication; the exponents here are small.
#[inline]
pub(crate) fn ipow(v: f64, k: u32) -> f64 {
    match k {
        0 => 1.0,
        1 => v,
        2 => v * v,
        3 => v * v * v,
        4 => (v * v) * (v * v),
        _ => v.powi(k as i32),
    }
}

/// Order-of-magnitude accuracy floor `λ g₀² T⁵` of the first-order
/// perturbative compensation.
pub fn breakdown_bound(system: &SystemParams, meter: &MeterParams) -> f64 {
    system.lambda * meter.g0 * meter.g0 * meter.duration.powi(5)
}

/// Validity parameter `χ = λ g₀² T⁵ / Δx`.
pub fn validity_parameter(system: &SystemParams, meter: &MeterParams, target: f64) -> f64 {
    breakdown_bound(system, meter) / target
}

#[cfg(test)]
mod tests {
    use super::*;
    use core::f64::consts::PI;

    fn meter(g0: f64, t: f64) -> MeterParams {
        MeterParams::new(g0, t, 0.5).unwrap()
    }

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn kernel_values() {
        assert_eq!(kernel_d(0.0, 1.0), 0.0);
        assert!(close(kernel_d(PI / 4.0, 2.0), 0.5, 1e-15));
        assert!(close(kernel_d(-0.3, 1.7), -kernel_d(0.3, 1.7), 1e-16));
    }

    #[test]
    fn kernel_solves_oscillator_equation() {
        let omega = 1.3;
        let h = 1e-3;
        for i in 1..50 {
            let t = 0.1 * i as f64;
            let dd = (kernel_d(t + h, omega) - 2.0 * kernel_d(t, omega) + kernel_d(t - h, omega))
                / (h * h);
            assert!(close(dd + omega * omega * kernel_d(t, omega), 0.0, 1e-6));
        }
        let slope = (kernel_d(h, omega) - kernel_d(-h, omega)) / (2.0 * h);
        assert!(close(slope, 1.0, 1e-6));
    }

    #[test]
    fn alpha_values_and_bounds() {
        let m = meter(1.0, 4.0);
        assert_eq!(alpha(0.0, &m, 1.0), 0.0);
        assert!(close(alpha(PI, &m, 1.0), 2.0, 1e-15));
        for i in 0..=40 {
            let a = alpha(0.1 * i as f64, &m, 1.0);
            assert!((0.0..=2.0 + 1e-15).contains(&a));
        }
    }

    #[test]
    fn spring_constant_limits() {
        let m = meter(1.0, PI);
        assert!(close(spring_k_effective(&m, 1.0), 1.0, 1e-15));

        let t = 1e-4;
        let m = MeterParams::new(1.0, t, 0.5).unwrap();
        let k = spring_k_effective(&m, 1.0);
        assert!(((k - t * t / 6.0) / (t * t / 6.0)).abs() < 1e-6);
    }

    #[test]
    fn window_factor_is_continuous_at_switch() {
        let below = window_factor(SMALL_ANGLE * (1.0 - 1e-9));
        let above = window_factor(SMALL_ANGLE * (1.0 + 1e-9));
        assert!(((below - above) / above).abs() < 1e-6);
    }

    #[test]
    fn delta_p_linear_values() {
        let m = meter(1.0, PI);
        let zero = FreeSolution::default();
        assert_eq!(delta_p_linear(&zero, &m, 1.0, 0.0), 0.0);
        assert!(close(delta_p_linear(&zero, &m, 1.0, 1.0), PI, 1e-14));
    }

    #[test]
    fn uncertainty_min_by_am_gm() {
        let (omega, t, g0) = (1.0, 1.0, 1.0);
        let m = meter(g0, t);
        let s = window_factor(omega * t);
        let dp_star = (g0 * g0 * t * s).sqrt() / omega;
        let at_star = xbar_uncertainty(dp_star, &m, omega);
        assert!(close(at_star, 2.0 / omega * (s / t).sqrt(), 1e-14));
        // the printed minimum coincides with the two-term law only for T = 1
        assert!(close(at_star, minimal_xbar_uncertainty(t, omega), 1e-14));
        assert!(xbar_uncertainty(2.0 * dp_star, &m, omega) > at_star);
        assert!(xbar_uncertainty(0.5 * dp_star, &m, omega) > at_star);
        // large ΔP: first term dominates
        let big = 1e8;
        assert!(close(xbar_uncertainty(big, &m, omega) / (big / (g0 * t)), 1.0, 1e-9));
    }

    #[test]
    fn minimal_uncertainty_limits() {
        let t = 0.01;
        let v = minimal_xbar_uncertainty(t, 1.0);
        assert!(((v - (2.0f64 / 3.0).sqrt() * t) / v).abs() < 1e-4);
        let v = minimal_xbar_uncertainty(1e-4, 1.0) / 1e-4;
        assert!(((v - (2.0f64 / 3.0).sqrt()) / v).abs() < 1e-6);
        assert!(close(minimal_xbar_uncertainty(2.0 * PI * 50.0, 1.0), 2.0, 1e-14));
        // depends on T only through ΩT
        let a = minimal_xbar_uncertainty(3.0, 2.0) * 2.0 / 2.0;
        let b = minimal_xbar_uncertainty(6.0, 1.0) * 1.0 / 2.0;
        assert!(close(a, b, 1e-15));
    }

    #[test]
    fn ensemble_spread_minimum() {
        let (omega, t) = (2.0, 3.0);
        let m = meter(0.7, t);
        let min = minimal_ensemble_xbar_spread(t, omega);
        // brute-force log grid
        let mut best = f64::INFINITY;
        for i in 0..20001 {
            let dp = 10f64.powf(-3.0 + 6.0 * i as f64 / 20000.0);
            best = best.min(ensemble_xbar_spread(dp, &m, omega));
        }
        assert!(((best - min) / min).abs() < 1e-6);
    }

    #[test]
    fn conserved_linear_special_points() {
        let (omega, t_win) = (1.3, 2.2);
        let s = PhaseState::new(0.4, -0.9, 0.0, 0.0);
        let mid = conserved_xbar_linear(&s, t_win / 2.0, t_win, omega);
        let expected = 2.0 / (omega * t_win) * (omega * t_win / 2.0).sin() * s.x;
        assert!(close(mid, expected, 1e-15));
        let tiny = conserved_xbar_linear(&s, 0.5e-9, 1e-9, omega);
        assert!(close(tiny, s.x, 1e-9));
    }

    #[test]
    fn conserved_linear_is_invariant_on_free_motion() {
        let (omega, t_win) = (0.8, 3.0);
        let free = FreeSolution::new(0.7, -0.2);
        let reference = free.window_integral(t_win, omega) / t_win;
        for i in 0..=30 {
            let t = t_win * i as f64 / 30.0;
            let (x, p) = free.at(t, omega);
            let v = conserved_xbar_linear(&PhaseState::new(x, p, 0.0, 0.0), t, t_win, omega);
            assert!(close(v, reference, 1e-14));
        }
    }

    #[test]
    fn breakdown_bound_scaling() {
        let sys = SystemParams::new(1.0, 1e-3, 3).unwrap();
        assert!(close(breakdown_bound(&sys, &meter(1.0, 1.0)), 1e-3, 1e-18));
        let r = breakdown_bound(&sys, &meter(1.0, 2.6)) / breakdown_bound(&sys, &meter(1.0, 1.3));
        assert!(close(r, 32.0, 1e-12));
        assert_eq!(breakdown_bound(&SystemParams::linear(1.0), &meter(1.0, 1.0)), 0.0);
    }

    #[test]
    fn validation() {
        assert!(SystemParams::new(0.0, 0.0, 3).is_err());
        assert!(SystemParams::new(1.0, 0.0, 2).is_err());
        assert!(MeterParams::new(1.0, 0.0, 1.0).is_err());
        assert!(MeterParams::new(1.0, 1.0, -1.0).is_err());
        let m = MeterParams::new(1.0, 1.0, 0.25).unwrap();
        assert_eq!(m.delta_q() * m.delta_p, 0.5);
    }
}
