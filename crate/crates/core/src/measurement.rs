//! Complete measurement experiments and their Monte-Carlo ensembles.
//!
//! A sample draws the pointer coordinate `Q ~ N(0, ΔQ)`, optionally a readout
//! error `~ N(0, ΔP)`, and optionally the initial oscillator state, then
//! integrates the coupled motion over the window and converts the pointer
//! shift into an estimate of `x̄`.
//!
//! Per-sample randomness comes from `ChaCha8(seed)` on stream `index`, drawn
//! in the fixed order `z_Q, z_noise, z_x, z_p`. All four are drawn whether or
//! not they are used, so changing one option never reshuffles the others.

use alloc::vec::Vec;

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::dynamics::{
    integrate, EscapeGuard, ForceModel, ObservableCoupling, TimeGrid, TrajectoryRecord, WindowAverage,
};
use crate::model::{conserved_xbar_linear, window_factor, MeterParams, PhaseState, SystemParams};
use crate::perturbation::{comp_zeroth_order, first_order_compensation};
use crate::schedule::CompensationSchedule;
use crate::stats::{Regression, Welford};
use crate::{Error, Result};

/// The measurement protocols.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SchemeKind {
    /// `H_I = −g Q x`.
    Naive,
    /// Naive coupling plus the spring `½ k Q²`.
    SpringCompensated,
    /// Naive dynamics; the estimator subtracts the known `Q` shift.
    UnruhReadout,
    /// `H_I = −g Q x̄(x, p, t)` with the linear conserved average.
    ConstantOfMotionLinear,
    /// `H_I = −g Q φ(x, p, t)` with the nonlinear window average.
    ConstantOfMotionExact,
    /// Naive coupling plus compensation through order `λ^order` (0 or 1).
    PerturbativeCompensated { order: u32 },
}

impl SchemeKind {
    pub fn name(&self) -> &'static str {
        match self {
            SchemeKind::Naive => "naive",
            SchemeKind::SpringCompensated => "spring",
            SchemeKind::UnruhReadout => "unruh",
            SchemeKind::ConstantOfMotionLinear => "com_linear",
            SchemeKind::ConstantOfMotionExact => "com_exact",
            SchemeKind::PerturbativeCompensated { .. } => "perturbative",
        }
    }
}

/// A scheme with optional replacement schedules.
#[derive(Debug, Clone, PartialEq)]
pub struct Scheme {
    pub kind: SchemeKind,
    /// Replaces the built-in compensation of the spring and perturbative
    /// schemes; added on top of the coupling for the others.
    pub schedules: Option<Vec<CompensationSchedule>>,
}

impl Scheme {
    pub fn new(kind: SchemeKind) -> Self {
        Scheme { kind, schedules: None }
    }

    pub fn with_schedules(mut self, schedules: Vec<CompensationSchedule>) -> Self {
        self.schedules = Some(schedules);
        self
    }

    /// Schedules the scheme adds to the Hamiltonian on `grid`.
    pub fn compensation(&self, meter: &MeterParams, omega: f64, grid: TimeGrid) -> Result<Vec<CompensationSchedule>> {
        if let Some(s) = &self.schedules {
            return Ok(s.clone());
        }
        Ok(match self.kind {
            SchemeKind::SpringCompensated | SchemeKind::PerturbativeCompensated { order: 0 } => {
                alloc::vec![comp_zeroth_order(meter, omega, grid)]
            }
            SchemeKind::PerturbativeCompensated { order: 1 } => first_order_compensation(meter, omega, grid),
            SchemeKind::PerturbativeCompensated { .. } => {
                return Err(Error::param("order", "compensation is available for orders 0 and 1"))
            }
            _ => Vec::new(),
        })
    }
}

/// Initial oscillator state of each sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InitialState {
    Fixed { x: f64, p: f64 },
    Gaussian { mean_x: f64, mean_p: f64, sigma_x: f64, sigma_p: f64 },
}

/// How the pointer coordinate of each sample is chosen.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PointerModel {
    /// `Q ~ N(0, ΔQ)`.
    Gaussian,
    /// The same `Q` for every sample.
    Fixed(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleConfig {
    pub samples: usize,
    pub seed: u64,
    pub system: SystemParams,
    pub meter: MeterParams,
    pub initial: InitialState,
    pub pointer: PointerModel,
    /// Add `N(0, ΔP)` to the pointer shift before estimating.
    pub readout_noise: bool,
    /// Integration steps over the window; `None` picks the default grid.
    pub steps: Option<usize>,
    /// Integration steps of the free flow inside φ; `None` uses `steps`.
    pub phi_steps: Option<usize>,
    pub guard: EscapeGuard,
}

impl EnsembleConfig {
    /// Defaults: `(x₀, p₀) = (1, 0)`, Gaussian pointer, readout noise on.
    pub fn new(system: SystemParams, meter: MeterParams, samples: usize, seed: u64) -> Self {
        EnsembleConfig {
            samples,
            seed,
            system,
            meter,
            initial: InitialState::Fixed { x: 1.0, p: 0.0 },
            pointer: PointerModel::Gaussian,
            readout_noise: true,
            steps: None,
            phi_steps: None,
            guard: EscapeGuard::Auto,
        }
    }

    pub fn grid(&self) -> Result<TimeGrid> {
        match self.steps {
            Some(n) => TimeGrid::new(self.meter.duration, n),
            None => Ok(TimeGrid::for_window(self.meter.duration, self.system.omega)),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.system.validate()?;
        self.meter.validate()?;
        if self.meter.g0 == 0.0 {
            return Err(Error::param("g0", "a measurement needs g0 != 0"));
        }
        if self.samples < 100 {
            return Err(Error::param("samples", "must be >= 100"));
        }
        if let InitialState::Gaussian { sigma_x, sigma_p, .. } = self.initial {
            if !(sigma_x >= 0.0 && sigma_p >= 0.0) {
                return Err(Error::param("initial", "spreads must be >= 0"));
            }
        }
        if let PointerModel::Fixed(q) = self.pointer {
            if !q.is_finite() {
                return Err(Error::param("pointer", "fixed Q must be finite"));
            }
        }
        self.grid()?;
        Ok(())
    }
}

/// Raw normal deviates of one sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampleDraw {
    pub z_q: f64,
    pub z_noise: f64,
    pub z_x: f64,
    pub z_p: f64,
}

impl SampleDraw {
    pub fn generate(seed: u64, index: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(index);
        let mut z = || -> f64 { StandardNormal.sample(&mut rng) };
        SampleDraw {
            z_q: z(),
            z_noise: z(),
            z_x: z(),
            z_p: z(),
        }
    }
}

/// A scheme compiled for one set of parameters.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub kind: SchemeKind,
    pub system: SystemParams,
    pub meter: MeterParams,
    pub grid: TimeGrid,
    force: ForceModel,
    truth: ForceModel,
    observable: Option<ObservableCoupling>,
    /// Pointer shift per unit `x₀`, `p₀`, `Q` when the flow is linear.
    response: Option<[f64; 3]>,
    truth_response: Option<[f64; 2]>,
}

/// One completed run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SingleRun {
    /// `P(T) − P(0)` before any readout noise.
    pub readout: f64,
    pub xbar_true: f64,
}

impl Experiment {
    pub fn new(scheme: &Scheme, system: SystemParams, meter: MeterParams, grid: TimeGrid) -> Result<Self> {
        Self::with_phi_step(scheme, system, meter, grid, grid.step())
    }

    /// Like [`Experiment::new`], with an explicit step for the flows inside φ.
    pub fn with_phi_step(
        scheme: &Scheme,
        system: SystemParams,
        meter: MeterParams,
        grid: TimeGrid,
        phi_step: f64,
    ) -> Result<Self> {
        system.validate()?;
        meter.validate()?;
        if meter.g0 == 0.0 {
            return Err(Error::param("g0", "a measurement needs g0 != 0"));
        }
        if (grid.duration() - meter.duration).abs() > 1e-12 * meter.duration {
            return Err(Error::GridMismatch);
        }
        let omega = system.omega;
        let observable = match scheme.kind {
            SchemeKind::ConstantOfMotionLinear => Some(ObservableCoupling::LinearAverage { meter, omega }),
            SchemeKind::ConstantOfMotionExact => Some(ObservableCoupling::ExactAverage {
                meter,
                average: WindowAverage::new(system, meter.duration, phi_step)?,
            }),
            _ => None,
        };
        let mut force = match &observable {
            Some(obs) => ForceModel::free(system).with_observable(obs.clone()),
            None => ForceModel::coupled(system, &meter),
        };
        // half-step tables: every RK4 stage lands on a node
        for s in scheme.compensation(&meter, omega, grid.refined(2))? {
            force = force.with_schedule(&s);
        }
        let mut experiment = Experiment {
            kind: scheme.kind,
            system,
            meter,
            grid,
            force,
            truth: ForceModel::coupled(system, &meter),
            observable,
            response: None,
            truth_response: None,
        };
        experiment.update_response();
        Ok(experiment)
    }

    pub fn with_guard(mut self, guard: EscapeGuard) -> Self {
        self.force = self.force.with_guard(guard);
        self.truth = self.truth.with_guard(guard);
        self.update_response();
        self
    }

    fn update_response(&mut self) {
        self.response = None;
        self.truth_response = None;
        if self.force.is_linear() {
            let unit = |x, p, q| self.trajectory(x, p, q).readout();
            self.response = Some([unit(1.0, 0.0, 0.0), unit(0.0, 1.0, 0.0), unit(0.0, 0.0, 1.0)]);
        }
        if self.truth.is_linear() {
            let scale = self.meter.g0 * self.meter.duration;
            let unit = |x, p| integrate(&self.truth, PhaseState::new(x, p, 0.0, 0.0), self.grid).readout() / scale;
            self.truth_response = Some([unit(1.0, 0.0), unit(0.0, 1.0)]);
        }
    }

    pub fn force_model(&self) -> &ForceModel {
        &self.force
    }

    pub fn trajectory(&self, x: f64, p: f64, q: f64) -> TrajectoryRecord {
        integrate(&self.force, PhaseState::new(x, p, 0.0, q), self.grid)
    }

    /// `x̄` of the uncoupled motion from `(x, p)`.
    ///
    /// Integrates `Ṗ = g x` along the free trajectory with the same
    /// integrator as the measurement, so the two share discretisation error.
    pub fn xbar_true(&self, x: f64, p: f64) -> Result<f64> {
        if let Some([rx, rp]) = self.truth_response {
            return Ok(rx * x + rp * p);
        }
        let traj = integrate(&self.truth, PhaseState::new(x, p, 0.0, 0.0), self.grid);
        if let Some(time) = traj.escaped_at {
            return Err(Error::Escaped { time });
        }
        Ok(traj.readout() / (self.meter.g0 * self.meter.duration))
    }

    /// Pointer shift for one `(x₀, p₀, Q)`.
    pub fn readout(&self, x: f64, p: f64, q: f64) -> Result<f64> {
        if let Some([rx, rp, rq]) = self.response {
            return Ok(rx * x + rp * p + rq * q);
        }
        let traj = self.trajectory(x, p, q);
        match traj.escaped_at {
            Some(time) => Err(Error::Escaped { time }),
            None => Ok(traj.readout()),
        }
    }

    pub fn run_single(&self, x: f64, p: f64, q: f64) -> Result<SingleRun> {
        Ok(SingleRun {
            readout: self.readout(x, p, q)?,
            xbar_true: self.xbar_true(x, p)?,
        })
    }

    pub fn estimate(&self, readout: f64, q: f64) -> f64 {
        estimator(self.kind, readout, q, &self.meter, self.system.omega)
    }

    /// Largest change of the coupled observable along the trajectory; zero
    /// for schemes that do not couple to a conserved quantity.
    pub fn observable_drift(&self, x: f64, p: f64, q: f64) -> Result<f64> {
        let traj = self.trajectory(x, p, q);
        if let Some(time) = traj.escaped_at {
            return Err(Error::Escaped { time });
        }
        let t_end = self.meter.duration;
        match &self.observable {
            None => Ok(0.0),
            Some(ObservableCoupling::LinearAverage { omega, .. }) => {
                Ok(traj.max_drift(|s, t| conserved_xbar_linear(s, t, t_end, *omega)))
            }
            Some(ObservableCoupling::ExactAverage { average, .. }) => {
                let first = average.value(x, p, 0.0)?;
                let mut worst: f64 = 0.0;
                for (i, s) in traj.states.iter().enumerate() {
                    let v = average.value(s.x, s.p, traj.grid.time(i))?;
                    worst = worst.max((v - first).abs());
                }
                Ok(worst)
            }
        }
    }
}

/// Estimate of `x̄` from the pointer shift.
///
/// Every scheme divides by `g₀T`; the Unruh readout also subtracts the linear
/// back-reaction `(g₀/Ω²)(1 − sin ΩT/(ΩT)) Q`.
pub fn estimator(kind: SchemeKind, readout: f64, q: f64, meter: &MeterParams, omega: f64) -> f64 {
    let naive = readout / (meter.g0 * meter.duration);
    match kind {
        SchemeKind::UnruhReadout => {
            naive - meter.g0 / (omega * omega) * window_factor(omega * meter.duration) * q
        }
        _ => naive,
    }
}

/// One row of the per-run output.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sample {
    pub index: u64,
    pub q: f64,
    /// Pointer shift including readout noise; NaN when escaped.
    pub readout: f64,
    pub estimate: f64,
    pub xbar_true: f64,
    pub escaped: bool,
}

impl Sample {
    pub fn error(&self) -> f64 {
        self.estimate - self.xbar_true
    }
}

/// Statistics of `estimate − x̄_true` over the non-escaped samples.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleResult {
    pub samples: Vec<Sample>,
    pub bias: f64,
    pub bias_std_error: f64,
    pub spread: f64,
    pub spread_std_error: f64,
    /// Regression slope of the estimator error on `Q`.
    pub q_slope: f64,
    pub q_slope_std_error: f64,
    pub escaped: usize,
    /// Mean of `x̄_true` over the samples.
    pub xbar_true_mean: f64,
}

impl EnsembleResult {
    /// Root-mean-square error `√(bias² + spread²)`.
    pub fn rms_error(&self) -> f64 {
        self.bias.hypot(self.spread)
    }

    pub fn used(&self) -> usize {
        self.samples.len() - self.escaped
    }

    /// Rebuild the statistics from sample rows.
    pub fn from_samples(samples: Vec<Sample>) -> Self {
        let mut err = Welford::new();
        let mut truth = Welford::new();
        let mut reg = Regression::new();
        let mut escaped = 0;
        for s in &samples {
            if s.escaped {
                escaped += 1;
                continue;
            }
            err.push(s.error());
            truth.push(s.xbar_true);
            reg.push(s.q, s.error());
        }
        let (q_slope, q_slope_std_error) = match reg.fit() {
            Ok(fit) => (fit.slope, fit.slope_std_error),
            Err(_) => (f64::NAN, f64::NAN),
        };
        EnsembleResult {
            samples,
            bias: err.mean(),
            bias_std_error: err.mean_std_error(),
            spread: err.std_dev(),
            spread_std_error: err.std_dev_std_error(),
            q_slope,
            q_slope_std_error,
            escaped,
            xbar_true_mean: truth.mean(),
        }
    }
}

/// Sample the ensemble for `scheme`.
///
/// Escaped trajectories are kept as rows but excluded from the statistics;
/// more than 1% of them is an error.
pub fn run_ensemble(scheme: &Scheme, config: &EnsembleConfig) -> Result<EnsembleResult> {
    let experiment = compile(scheme, config)?;
    run_experiment(&experiment, config)
}

/// Build the experiment `config` describes. Only `g₀`, `T` and the system
/// enter; `ΔP` may be changed afterwards without recompiling.
pub fn compile(scheme: &Scheme, config: &EnsembleConfig) -> Result<Experiment> {
    config.validate()?;
    let grid = config.grid()?;
    let phi_step = match config.phi_steps {
        Some(n) if n > 0 => config.meter.duration / n as f64,
        Some(_) => return Err(Error::param("phi_steps", "must be >= 1")),
        None => grid.step(),
    };
    Ok(Experiment::with_phi_step(scheme, config.system, config.meter, grid, phi_step)?.with_guard(config.guard))
}

/// Sample an already compiled experiment.
pub fn run_experiment(experiment: &Experiment, config: &EnsembleConfig) -> Result<EnsembleResult> {
    let meter = &config.meter;
    let fixed_truth = match config.initial {
        InitialState::Fixed { x, p } => Some(experiment.xbar_true(x, p)),
        InitialState::Gaussian { .. } => None,
    };
    let mut samples = Vec::with_capacity(config.samples);
    for index in 0..config.samples as u64 {
        let z = SampleDraw::generate(config.seed, index);
        let q = match config.pointer {
            PointerModel::Gaussian => meter.delta_q() * z.z_q,
            PointerModel::Fixed(q) => q,
        };
        let noise = if config.readout_noise {
            meter.delta_p * z.z_noise
        } else {
            0.0
        };
        let (x, p) = match config.initial {
            InitialState::Fixed { x, p } => (x, p),
            InitialState::Gaussian { mean_x, mean_p, sigma_x, sigma_p } => {
                (mean_x + sigma_x * z.z_x, mean_p + sigma_p * z.z_p)
            }
        };
        let truth = match &fixed_truth {
            Some(t) => t.clone(),
            None => experiment.xbar_true(x, p),
        };
        let row = match (experiment.readout(x, p, q), truth) {
            (Ok(r), Ok(xbar_true)) => {
                let readout = r + noise;
                Sample {
                    index,
                    q,
                    readout,
                    estimate: experiment.estimate(readout, q),
                    xbar_true,
                    escaped: false,
                }
            }
            (Err(Error::Escaped { .. }), _) | (_, Err(Error::Escaped { .. })) => Sample {
                index,
                q,
                readout: f64::NAN,
                estimate: f64::NAN,
                xbar_true: f64::NAN,
                escaped: true,
            },
            (Err(e), _) | (_, Err(e)) => return Err(e),
        };
        samples.push(row);
    }
    let result = EnsembleResult::from_samples(samples);
    if result.escaped * 100 > config.samples {
        return Err(Error::EscapeFraction {
            escaped: result.escaped,
            total: config.samples,
        });
    }
    Ok(result)
}
