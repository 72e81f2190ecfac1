use contmeas_core::analysis::{fit_scaling, golden_section_log, log_grid, SearchRange};
use contmeas_core::dynamics::{EscapeGuard, TimeGrid};
use contmeas_core::measurement::{Experiment, Scheme, SchemeKind};
use contmeas_core::model::{conserved_xbar_linear, window_factor};
use contmeas_core::perturbation::{first_order_compensation, reduce_free_integral};
use contmeas_core::schedule::CompensationSchedule;
use contmeas_core::stats::Welford;
use contmeas_core::{FreeSolution, MeterParams, PhaseState, SystemParams};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn free_integral_reduces_to_instantaneous_variables(
        x0 in -3.0..3.0f64, p0 in -3.0..3.0f64, omega in 0.2..4.0f64, i in 0usize..=64,
    ) {
        let grid = TimeGrid::new(2.0, 64).unwrap();
        let (c1, c2) = reduce_free_integral(grid, omega);
        let t = grid.time(i);
        let free = FreeSolution::new(x0, p0);
        let (x, p) = free.at(t, omega);
        // ∫₀ᵗ p₀ = x₀(t) − x₀(0)
        let lhs = x - x0;
        let rhs = c1.values()[i] * x + c2.values()[i] * p;
        prop_assert!((lhs - rhs).abs() < 1e-12 * (1.0 + x0.abs() + p0.abs()));
    }

    #[test]
    fn linear_window_average_is_conserved_by_free_motion(
        x0 in -3.0..3.0f64, p0 in -3.0..3.0f64, omega in 0.2..4.0f64,
        duration in 0.1..6.0f64, frac in 0.0..1.0f64,
    ) {
        let free = FreeSolution::new(x0, p0);
        let start = conserved_xbar_linear(&PhaseState::new(x0, p0, 0.0, 0.0), 0.0, duration, omega);
        let t = frac * duration;
        let (x, p) = free.at(t, omega);
        let later = conserved_xbar_linear(&PhaseState::new(x, p, 0.0, 0.0), t, duration, omega);
        prop_assert!((start - later).abs() < 1e-12 * (1.0 + x0.abs() + p0.abs() / omega));
        let mean = free.window_integral(duration, omega) / duration;
        prop_assert!((start - mean).abs() < 1e-12 * (1.0 + x0.abs() + p0.abs() / omega));
    }

    #[test]
    fn window_factor_is_bounded(u in 1e-6..200.0f64) {
        let s = window_factor(u);
        prop_assert!((0.0..1.218).contains(&s));
    }

    #[test]
    fn welford_merge_is_grouping_independent(
        data in proptest::collection::vec(-1e3..1e3f64, 2..60), cut in 0usize..60,
    ) {
        let cut = cut.min(data.len());
        let mut whole = Welford::new();
        data.iter().for_each(|v| whole.push(*v));
        let (mut a, mut b) = (Welford::new(), Welford::new());
        data[..cut].iter().for_each(|v| a.push(*v));
        data[cut..].iter().for_each(|v| b.push(*v));
        b.merge(&a);
        prop_assert_eq!(b.count(), whole.count());
        prop_assert!((b.mean() - whole.mean()).abs() <= 1e-9 * (1.0 + whole.mean().abs()));
        prop_assert!((b.variance() - whole.variance()).abs() <= 1e-8 * (1.0 + whole.variance()));
    }

    #[test]
    fn power_law_fit_ignores_common_rescaling(
        exponent in -6.0..6.0f64, scale in 1e-6..1e6f64, wiggle in 0.0..0.2f64,
    ) {
        let xs = log_grid(0.1, 10.0, 9);
        let ys: Vec<f64> = xs
            .iter()
            .enumerate()
            .map(|(i, x)| x.powf(exponent) * (1.0 + wiggle * ((i * 7 % 5) as f64 - 2.0) / 4.0))
            .collect();
        let scaled: Vec<f64> = ys.iter().map(|y| y * scale).collect();
        let (a, b) = (fit_scaling(&xs, &ys).unwrap(), fit_scaling(&xs, &scaled).unwrap());
        prop_assert!((a.exponent - b.exponent).abs() < 1e-9);
        prop_assert!((b.prefactor / a.prefactor / scale - 1.0).abs() < 1e-9);
    }

    #[test]
    fn golden_section_lands_on_interior_minima(centre in -3.0..3.0f64) {
        let target = 10f64.powf(centre);
        let range = SearchRange::new(1e-4, 1e4);
        let opt = golden_section_log(&range, |x| Ok(((x / target).ln().powi(2), 0.0))).unwrap();
        prop_assert!((opt.delta_p / target).ln().abs() < 2e-3);
        prop_assert!(!opt.at_boundary);
    }

    #[test]
    fn spring_estimate_is_independent_of_q_at_lambda_zero(
        x0 in -2.0..2.0f64, p0 in -2.0..2.0f64, q in -5.0..5.0f64,
        g0 in 0.05..3.0f64, duration in 0.2..5.0f64,
    ) {
        let meter = MeterParams::new(g0, duration, 0.5).unwrap();
        let e = Experiment::new(
            &Scheme::new(SchemeKind::SpringCompensated),
            SystemParams::linear(1.0),
            meter,
            TimeGrid::for_window(duration, 1.0),
        ).unwrap();
        let run = e.run_single(x0, p0, q).unwrap();
        // the RK4 residual scales with the cancelled back-reaction g₀ s Q/Ω²
        let cancelled = g0 * window_factor(duration) * q.abs();
        prop_assert!((e.estimate(run.readout, q) - run.xbar_true).abs() < 1e-8 * (1.0 + cancelled));
    }

    #[test]
    fn linear_response_matches_direct_integration(
        x0 in -2.0..2.0f64, p0 in -2.0..2.0f64, q in -5.0..5.0f64, naive in any::<bool>(),
    ) {
        let kind = if naive { SchemeKind::Naive } else { SchemeKind::SpringCompensated };
        let meter = MeterParams::new(0.7, 1.3, 0.5).unwrap();
        let grid = TimeGrid::for_window(1.3, 1.0);
        let fast = Experiment::new(&Scheme::new(kind), SystemParams::linear(1.0), meter, grid).unwrap();
        // a finite bound disables the precomputed linear response
        let direct = fast.clone().with_guard(EscapeGuard::Bound(1e12));
        let (a, b) = (fast.readout(x0, p0, q).unwrap(), direct.readout(x0, p0, q).unwrap());
        prop_assert!((a - b).abs() < 1e-12 * (1.0 + a.abs()));
        let (ta, tb) = (fast.xbar_true(x0, p0).unwrap(), direct.xbar_true(x0, p0).unwrap());
        prop_assert!((ta - tb).abs() < 1e-12 * (1.0 + ta.abs()));
    }

    #[test]
    fn schedules_round_trip_through_rows(g0 in 0.1..2.0f64, duration in 0.2..3.0f64) {
        let meter = MeterParams::new(g0, duration, 0.5).unwrap();
        for s in first_order_compensation(&meter, 1.0, TimeGrid::new(duration, 24).unwrap()) {
            let back = CompensationSchedule::from_rows(s.order, s.note.clone(), &s.rows()).unwrap();
            prop_assert_eq!(back, s);
        }
    }

    #[test]
    fn first_order_schedules_vanish_for_short_windows(g0 in 0.1..2.0f64, duration in 1e-3..1e-2f64) {
        let meter = MeterParams::new(g0, duration, 0.5).unwrap();
        let grid = TimeGrid::new(duration, 16).unwrap();
        for s in first_order_compensation(&meter, 1.0, grid) {
            // spring ∝ T², ΔH⁽¹⁾ ∝ T⁴, β term ∝ T⁶
            prop_assert!(s.max_abs() <= g0 * g0 * duration * duration);
        }
    }
}
