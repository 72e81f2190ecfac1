//! Studies built on top of ensembles: optimising `ΔP`, power-law fits,
//! parameter sweeps and the breakdown scan of the first-order compensation.

use alloc::vec::Vec;

#[allow(unused_imports)] // inherent methods shadow it whenever std is linked
use num_traits::Float;

use crate::measurement::{compile, run_ensemble, run_experiment, EnsembleConfig, EnsembleResult, Scheme, SchemeKind};
use crate::model::validity_parameter;
use crate::stats::Regression;
use crate::{Error, Result};

/// Quantity minimised over `ΔP`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Objective {
    /// Standard deviation of the estimator error.
    Spread,
    /// `√(bias² + spread²)`; differs from `Spread` once a residual bias
    /// survives compensation.
    RmsError,
}

impl Objective {
    fn value(self, r: &EnsembleResult) -> (f64, f64) {
        match self {
            Objective::Spread => (r.spread, r.spread_std_error),
            Objective::RmsError => {
                let rms = r.rms_error();
                let se = if rms > 0.0 {
                    (r.bias * r.bias_std_error).hypot(r.spread * r.spread_std_error) / rms
                } else {
                    0.0
                };
                (rms, se)
            }
        }
    }
}

/// Log-spaced search interval for `ΔP`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SearchRange {
    pub lo: f64,
    pub hi: f64,
    /// Final bracket width as a relative factor, e.g. `1e-3`.
    pub tolerance: f64,
}

impl SearchRange {
    pub fn new(lo: f64, hi: f64) -> Self {
        SearchRange { lo, hi, tolerance: 1e-3 }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lo > 0.0 && self.hi.is_finite() && self.hi >= 100.0 * self.lo) {
            return Err(Error::param("search range", "must be positive and span at least two decades"));
        }
        if !(self.tolerance > 0.0 && self.tolerance < 1.0) {
            return Err(Error::param("search tolerance", "must lie in (0, 1)"));
        }
        Ok(())
    }
}

/// Result of a one-dimensional minimisation over `ΔP`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Optimum {
    pub delta_p: f64,
    pub value: f64,
    pub std_error: f64,
    /// The minimiser sits at an end of the range; the true minimum may lie
    /// outside it.
    pub at_boundary: bool,
    pub evaluations: usize,
}

const INV_PHI: f64 = 0.618_033_988_749_894_8;

/// Golden-section minimisation of `f` over `ln x ∈ [ln lo, ln hi]`.
///
/// `f` returns `(value, std_error)`; non-finite values count as `+∞`.
pub fn golden_section_log<F>(range: &SearchRange, mut f: F) -> Result<Optimum>
where
    F: FnMut(f64) -> Result<(f64, f64)>,
{
    range.validate()?;
    let (lo, hi) = (range.lo.ln(), range.hi.ln());
    let tol = range.tolerance.ln_1p();
    let mut evaluations = 0;
    let mut eval = |u: f64| -> Result<(f64, f64)> {
        evaluations += 1;
        let (v, se) = f(u.exp())?;
        Ok((if v.is_finite() { v } else { f64::INFINITY }, se))
    };
    let (mut a, mut b) = (lo, hi);
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = eval(c)?;
    let mut fd = eval(d)?;
    while b - a > tol {
        if fc.0 <= fd.0 {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = eval(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = eval(d)?;
        }
    }
    let (u, best) = if fc.0 <= fd.0 { (c, fc) } else { (d, fd) };
    if !best.0.is_finite() {
        return Err(Error::param("objective", "infinite over the whole search range"));
    }
    let at_boundary = u - lo < 2.0 * tol || hi - u < 2.0 * tol;
    Ok(Optimum {
        delta_p: u.exp(),
        value: best.0,
        std_error: best.1,
        at_boundary,
        evaluations,
    })
}

/// Minimise the ensemble objective over the pointer resolution `ΔP`.
///
/// Every evaluation reuses `config.seed`, so the objective is a smooth
/// function of `ΔP` (common random numbers). A run that fails on escapes
/// scores `+∞`.
pub fn optimize_delta_p(
    scheme: &Scheme,
    config: &EnsembleConfig,
    range: &SearchRange,
    objective: Objective,
) -> Result<Optimum> {
    let experiment = compile(scheme, config)?;
    let mut trial = config.clone();
    golden_section_log(range, |delta_p| {
        trial.meter = config.meter.with_delta_p(delta_p);
        match run_experiment(&experiment, &trial) {
            Ok(r) => Ok(objective.value(&r)),
            Err(Error::EscapeFraction { .. }) => Ok((f64::INFINITY, 0.0)),
            Err(e) => Err(e),
        }
    })
}

/// Power law `y = prefactor · x^exponent` fitted in log-log space.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalingFit {
    pub exponent: f64,
    pub exponent_std_error: f64,
    pub prefactor: f64,
    pub r_squared: f64,
    /// `ln y − ln ŷ` per input point; NaN where the point was rejected.
    pub residuals: Vec<f64>,
    /// Indices of points with non-positive or non-finite data.
    pub rejected: Vec<usize>,
}

pub fn fit_scaling(xs: &[f64], ys: &[f64]) -> Result<ScalingFit> {
    if xs.len() != ys.len() {
        return Err(Error::GridMismatch);
    }
    let usable = |x: f64, y: f64| x > 0.0 && y > 0.0 && x.is_finite() && y.is_finite();
    let mut reg = Regression::new();
    let mut rejected = Vec::new();
    for (i, (&x, &y)) in xs.iter().zip(ys).enumerate() {
        if usable(x, y) {
            reg.push(x.ln(), y.ln());
        } else {
            rejected.push(i);
        }
    }
    let line = reg.fit()?;
    let residuals = xs
        .iter()
        .zip(ys)
        .map(|(&x, &y)| {
            if usable(x, y) {
                y.ln() - (line.intercept + line.slope * x.ln())
            } else {
                f64::NAN
            }
        })
        .collect();
    Ok(ScalingFit {
        exponent: line.slope,
        exponent_std_error: line.slope_std_error,
        prefactor: line.intercept.exp(),
        r_squared: line.r_squared,
        residuals,
        rejected,
    })
}

/// Parameter varied by a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepParameter {
    Lambda,
    Duration,
    DeltaP,
    G0,
}

impl SweepParameter {
    pub fn name(self) -> &'static str {
        match self {
            SweepParameter::Lambda => "lambda",
            SweepParameter::Duration => "duration",
            SweepParameter::DeltaP => "delta_p",
            SweepParameter::G0 => "g0",
        }
    }

    pub fn apply(self, config: &mut EnsembleConfig, value: f64) {
        match self {
            SweepParameter::Lambda => config.system.lambda = value,
            SweepParameter::Duration => config.meter.duration = value,
            SweepParameter::DeltaP => config.meter.delta_p = value,
            SweepParameter::G0 => config.meter.g0 = value,
        }
    }
}

/// How sweep points get their seeds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Seeding {
    /// Every point uses the base seed (common random numbers).
    Common,
    /// Point `i` uses `split_seed(seed, i)`.
    Split,
}

/// SplitMix64 output for counter `index + 1` of the stream started at `seed`.
pub fn split_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed.wrapping_add(index.wrapping_add(1).wrapping_mul(0x9e37_79b9_7f4a_7c15));
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn log_grid(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    let (a, b) = (lo.ln(), hi.ln());
    let last = points.saturating_sub(1).max(1) as f64;
    (0..points).map(|i| (a + (b - a) * i as f64 / last).exp()).collect()
}

pub fn linear_grid(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    let last = points.saturating_sub(1).max(1) as f64;
    (0..points).map(|i| lo + (hi - lo) * i as f64 / last).collect()
}

#[derive(Debug, Clone)]
pub struct SweepSpec {
    pub parameter: SweepParameter,
    pub grid: Vec<f64>,
    pub base: EnsembleConfig,
    pub scheme: Scheme,
    pub seeding: Seeding,
}

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        if self.grid.len() < 3 {
            return Err(Error::param("grid", "needs at least 3 points"));
        }
        let increasing = self.grid.windows(2).all(|w| w[1] > w[0]);
        let decreasing = self.grid.windows(2).all(|w| w[1] < w[0]);
        if !(increasing || decreasing) {
            return Err(Error::param("grid", "must be strictly monotone"));
        }
        for i in 0..self.grid.len() {
            self.point_config(i)?.validate()?;
        }
        Ok(())
    }

    pub fn point_config(&self, index: usize) -> Result<EnsembleConfig> {
        let value = *self.grid.get(index).ok_or(Error::GridMismatch)?;
        let mut config = self.base.clone();
        self.parameter.apply(&mut config, value);
        if let Seeding::Split = self.seeding {
            config.seed = split_seed(self.base.seed, index as u64);
        }
        Ok(config)
    }
}

#[derive(Debug, Clone)]
pub struct SweepPoint {
    pub index: usize,
    pub value: f64,
    pub seed: u64,
    pub result: EnsembleResult,
}

/// Run every grid point in order.
pub fn run_sweep(spec: &SweepSpec) -> Result<Vec<SweepPoint>> {
    spec.validate()?;
    let mut points = Vec::with_capacity(spec.grid.len());
    for (index, &value) in spec.grid.iter().enumerate() {
        let config = spec.point_config(index)?;
        let result = run_ensemble(&spec.scheme, &config)?;
        points.push(SweepPoint {
            index,
            value,
            seed: config.seed,
            result,
        });
    }
    Ok(points)
}

/// One duration of a breakdown scan.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BreakdownRow {
    pub duration: f64,
    pub delta_p: f64,
    /// Best root-mean-square estimator error over `ΔP`.
    pub accuracy: f64,
    pub accuracy_std_error: f64,
    /// `λ g₀² T⁵ / Δx` for the target `Δx`.
    pub chi: f64,
    pub reachable: bool,
    pub at_boundary: bool,
}

/// Best accuracy of the first-order compensated scheme for each duration.
///
/// A duration is reachable when the optimised root-mean-square error does
/// not exceed `target`.
pub fn breakdown_scan(
    config: &EnsembleConfig,
    target: f64,
    durations: &[f64],
    range: &SearchRange,
) -> Result<Vec<BreakdownRow>> {
    if !(target > 0.0 && target.is_finite()) {
        return Err(Error::param("target", "must be positive"));
    }
    if durations.is_empty() {
        return Err(Error::InsufficientData { needed: 1, got: 0 });
    }
    let scheme = Scheme::new(SchemeKind::PerturbativeCompensated { order: 1 });
    let mut rows = Vec::with_capacity(durations.len());
    for &duration in durations {
        let mut c = config.clone();
        c.meter.duration = duration;
        let best = optimize_delta_p(&scheme, &c, range, Objective::RmsError)?;
        rows.push(BreakdownRow {
            duration,
            delta_p: best.delta_p,
            accuracy: best.value,
            accuracy_std_error: best.std_error,
            chi: validity_parameter(&c.system, &c.meter, target),
            reachable: best.value <= target,
            at_boundary: best.at_boundary,
        });
    }
    Ok(rows)
}
