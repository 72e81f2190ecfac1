//! TOML run configuration.
//!
//! A document always carries `spec_version = 1`; unknown keys anywhere are
//! rejected. Every optional field has a default that is written back out
//! in the summary JSON, so a summary fully describes its run.
//!
//! Randomness: sample `i` of an ensemble with seed `s` draws from
//! `ChaCha8(s)` on stream `i`. Sweep points either share the seed (`common`)
//! or use the SplitMix64 output for counter `k + 1` of seed `s` at point `k`
//! (`split`).

use std::path::{Path, PathBuf};

use contmeas_core::analysis::{self, SearchRange, Seeding, SweepParameter, SweepSpec};
use contmeas_core::dynamics::EscapeGuard;
use contmeas_core::measurement::{EnsembleConfig, InitialState, PointerModel, Scheme, SchemeKind};
use contmeas_core::schedule::CompensationSchedule;
use contmeas_core::{MeterParams, SystemParams};
use serde::{Deserialize, Serialize};

use crate::error::AppError;
use crate::output::read_schedule_csv;

pub const SPEC_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub spec_version: u32,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_samples")]
    pub samples: usize,
    pub system: SystemSection,
    pub meter: MeterSection,
    #[serde(default)]
    pub scheme: SchemeSection,
    #[serde(default)]
    pub initial: InitialSection,
    #[serde(default)]
    pub ensemble: EnsembleSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub breakdown: Option<BreakdownSection>,
}

fn default_seed() -> u64 {
    1
}

fn default_samples() -> usize {
    10_000
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemSection {
    pub omega: f64,
    #[serde(default)]
    pub lambda: f64,
    #[serde(default = "default_power")]
    pub n: u32,
}

fn default_power() -> u32 {
    3
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeterSection {
    pub g0: f64,
    pub duration: f64,
    pub delta_p: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SchemeName {
    Naive,
    Spring,
    Unruh,
    ComLinear,
    ComExact,
    Perturbative,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SchemeSection {
    pub kind: SchemeName,
    /// Compensation order of the perturbative scheme.
    #[serde(default = "default_order")]
    pub order: u32,
    /// Replacement schedules read from CSV files.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub schedule: Vec<ScheduleFile>,
}

fn default_order() -> u32 {
    1
}

impl Default for SchemeSection {
    fn default() -> Self {
        SchemeSection {
            kind: SchemeName::Naive,
            order: 1,
            schedule: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleFile {
    pub path: PathBuf,
    /// Power of λ multiplying the file's coefficients.
    pub order: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialSection {
    Fixed { x: f64, p: f64 },
    Gaussian { mean_x: f64, mean_p: f64, sigma_x: f64, sigma_p: f64 },
}

impl Default for InitialSection {
    fn default() -> Self {
        InitialSection::Fixed { x: 1.0, p: 0.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PointerSection {
    Gaussian,
    Fixed { q: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum GuardSection {
    Auto,
    Off,
    Bound { value: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleSection {
    #[serde(default = "default_pointer")]
    pub pointer: PointerSection,
    #[serde(default = "default_true")]
    pub readout_noise: bool,
    /// RK4 steps over the window; the default grid is resolved on load.
    #[serde(default)]
    pub steps: Option<usize>,
    #[serde(default)]
    pub phi_steps: Option<usize>,
    #[serde(default = "default_guard")]
    pub guard: GuardSection,
}

fn default_pointer() -> PointerSection {
    PointerSection::Gaussian
}

fn default_guard() -> GuardSection {
    GuardSection::Auto
}

fn default_true() -> bool {
    true
}

impl Default for EnsembleSection {
    fn default() -> Self {
        EnsembleSection {
            pointer: default_pointer(),
            readout_noise: true,
            steps: None,
            phi_steps: None,
            guard: default_guard(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Spacing {
    Linear,
    Log,
}

/// Either explicit `values` or `spacing` + `from` + `to` + `points`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub values: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spacing: Option<Spacing>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub from: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub to: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub points: Option<usize>,
}

impl GridSection {
    pub fn resolve(&self, field: &str) -> Result<Vec<f64>, AppError> {
        let range = (self.spacing, self.from, self.to, self.points);
        let grid = match (&self.values, range) {
            (Some(v), (None, None, None, None)) => v.clone(),
            (None, (Some(spacing), Some(from), Some(to), Some(points))) => {
                if spacing == Spacing::Log && !(from > 0.0 && to > 0.0) {
                    return Err(AppError::config(field, "log spacing needs positive ends"));
                }
                match spacing {
                    Spacing::Linear => analysis::linear_grid(from, to, points),
                    Spacing::Log => analysis::log_grid(from, to, points),
                }
            }
            _ => {
                return Err(AppError::config(
                    field,
                    "give either `values` or all of `spacing`, `from`, `to`, `points`",
                ))
            }
        };
        if grid.is_empty() {
            return Err(AppError::config(field, "grid is empty"));
        }
        if grid.len() < 3 {
            return Err(AppError::config(field, "grid needs at least 3 points"));
        }
        let up = grid.windows(2).all(|w| w[1] > w[0]);
        let down = grid.windows(2).all(|w| w[1] < w[0]);
        if !(up || down) || grid.iter().any(|v| !v.is_finite()) {
            return Err(AppError::config(field, "grid must be finite and strictly monotone"));
        }
        Ok(grid)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParameterName {
    Lambda,
    Duration,
    DeltaP,
    G0,
}

impl From<ParameterName> for SweepParameter {
    fn from(p: ParameterName) -> Self {
        match p {
            ParameterName::Lambda => SweepParameter::Lambda,
            ParameterName::Duration => SweepParameter::Duration,
            ParameterName::DeltaP => SweepParameter::DeltaP,
            ParameterName::G0 => SweepParameter::G0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepMode {
    /// One Monte-Carlo ensemble per grid point.
    Ensemble,
    /// Closed-form uncertainty laws only.
    ClosedForm,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SeedingName {
    Common,
    Split,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub parameter: ParameterName,
    pub grid: GridSection,
    #[serde(default = "default_mode")]
    pub mode: SweepMode,
    #[serde(default = "default_seeding")]
    pub seeding: SeedingName,
    /// Column of the sweep CSV to fit as a power law of the parameter.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fit: Option<String>,
}

fn default_mode() -> SweepMode {
    SweepMode::Ensemble
}

fn default_seeding() -> SeedingName {
    SeedingName::Common
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BreakdownSection {
    pub target: f64,
    pub durations: GridSection,
    #[serde(default = "default_dp_min")]
    pub delta_p_min: f64,
    #[serde(default = "default_dp_max")]
    pub delta_p_max: f64,
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
}

fn default_dp_min() -> f64 {
    1e-7
}

fn default_dp_max() -> f64 {
    10.0
}

fn default_tolerance() -> f64 {
    1e-3
}

impl BreakdownSection {
    pub fn range(&self) -> SearchRange {
        SearchRange {
            lo: self.delta_p_min,
            hi: self.delta_p_max,
            tolerance: self.tolerance,
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, AppError> {
        let config: RunConfig = toml::from_str(text).map_err(|e| AppError::Parse(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self, AppError> {
        let text = std::fs::read_to_string(path).map_err(|e| AppError::io(path, e))?;
        let mut config = Self::from_toml(&text)?;
        // schedule paths are relative to the config file
        if let Some(dir) = path.parent() {
            for s in &mut config.scheme.schedule {
                if s.path.is_relative() {
                    s.path = dir.join(&s.path);
                }
            }
        }
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), AppError> {
        if self.spec_version != SPEC_VERSION {
            return Err(AppError::config(
                "spec_version",
                format!("unsupported version {} (expected {SPEC_VERSION})", self.spec_version),
            ));
        }
        self.ensemble_config()?.validate().map_err(AppError::from_validation)?;
        if self.scheme.kind == SchemeName::Perturbative && self.scheme.order > 1 {
            return Err(AppError::config("scheme.order", "compensation exists for orders 0 and 1"));
        }
        if let GuardSection::Bound { value } = self.ensemble.guard {
            if !(value > 0.0 && value.is_finite()) {
                return Err(AppError::config("ensemble.guard.value", "must be positive"));
            }
        }
        if let Some(sweep) = &self.sweep {
            let grid = sweep.grid.resolve("sweep.grid")?;
            if sweep.mode == SweepMode::Ensemble {
                self.sweep_spec_with(sweep, grid)?.validate().map_err(AppError::from_validation)?;
            }
        }
        if let Some(b) = &self.breakdown {
            b.durations.resolve("breakdown.durations")?;
            if !(b.target > 0.0 && b.target.is_finite()) {
                return Err(AppError::config("breakdown.target", "must be positive"));
            }
            b.range().validate().map_err(AppError::from_validation)?;
            if self.system.lambda < 0.0 {
                return Err(AppError::config("system.lambda", "the breakdown scan needs lambda >= 0"));
            }
        }
        Ok(())
    }

    pub fn system(&self) -> Result<SystemParams, AppError> {
        SystemParams::new(self.system.omega, self.system.lambda, self.system.n).map_err(AppError::from_validation)
    }

    pub fn meter(&self) -> Result<MeterParams, AppError> {
        MeterParams::new(self.meter.g0, self.meter.duration, self.meter.delta_p).map_err(AppError::from_validation)
    }

    pub fn scheme_kind(&self) -> SchemeKind {
        match self.scheme.kind {
            SchemeName::Naive => SchemeKind::Naive,
            SchemeName::Spring => SchemeKind::SpringCompensated,
            SchemeName::Unruh => SchemeKind::UnruhReadout,
            SchemeName::ComLinear => SchemeKind::ConstantOfMotionLinear,
            SchemeName::ComExact => SchemeKind::ConstantOfMotionExact,
            SchemeName::Perturbative => SchemeKind::PerturbativeCompensated {
                order: self.scheme.order,
            },
        }
    }

    /// The scheme, with replacement schedules read from disk.
    pub fn scheme(&self) -> Result<Scheme, AppError> {
        let scheme = Scheme::new(self.scheme_kind());
        if self.scheme.schedule.is_empty() {
            return Ok(scheme);
        }
        let mut schedules = Vec::new();
        for file in &self.scheme.schedule {
            let rows = read_schedule_csv(&file.path)?;
            let note = file.path.display().to_string();
            let s = CompensationSchedule::from_rows(file.order, note, &rows).map_err(AppError::from_validation)?;
            schedules.push(s);
        }
        Ok(scheme.with_schedules(schedules))
    }

    pub fn ensemble_config(&self) -> Result<EnsembleConfig, AppError> {
        let mut c = EnsembleConfig::new(self.system()?, self.meter()?, self.samples, self.seed);
        c.initial = match self.initial {
            InitialSection::Fixed { x, p } => InitialState::Fixed { x, p },
            InitialSection::Gaussian { mean_x, mean_p, sigma_x, sigma_p } => InitialState::Gaussian {
                mean_x,
                mean_p,
                sigma_x,
                sigma_p,
            },
        };
        c.pointer = match self.ensemble.pointer {
            PointerSection::Gaussian => PointerModel::Gaussian,
            PointerSection::Fixed { q } => PointerModel::Fixed(q),
        };
        c.readout_noise = self.ensemble.readout_noise;
        c.steps = self.ensemble.steps;
        c.phi_steps = self.ensemble.phi_steps;
        c.guard = match self.ensemble.guard {
            GuardSection::Auto => EscapeGuard::Auto,
            GuardSection::Off => EscapeGuard::Off,
            GuardSection::Bound { value } => EscapeGuard::Bound(value),
        };
        Ok(c)
    }

    fn sweep_spec_with(&self, sweep: &SweepSection, grid: Vec<f64>) -> Result<SweepSpec, AppError> {
        Ok(SweepSpec {
            parameter: sweep.parameter.into(),
            grid,
            base: self.ensemble_config()?,
            scheme: self.scheme()?,
            seeding: match sweep.seeding {
                SeedingName::Common => Seeding::Common,
                SeedingName::Split => Seeding::Split,
            },
        })
    }

    pub fn sweep_spec(&self) -> Result<SweepSpec, AppError> {
        let sweep = self.sweep.as_ref().ok_or_else(|| AppError::config("sweep", "section missing"))?;
        self.sweep_spec_with(sweep, sweep.grid.resolve("sweep.grid")?)
    }

    /// Copy with `--seed` / `--samples` overrides applied and default steps
    /// written out.
    pub fn resolved(&self, seed: Option<u64>, samples: Option<usize>) -> Result<Self, AppError> {
        let mut c = self.clone();
        if let Some(seed) = seed {
            c.seed = seed;
        }
        if let Some(samples) = samples {
            c.samples = samples;
        }
        let duration_sweep = c.sweep.as_ref().is_some_and(|s| s.parameter == ParameterName::Duration);
        if c.ensemble.steps.is_none() && !duration_sweep && c.breakdown.is_none() {
            c.ensemble.steps = Some(c.ensemble_config()?.grid().map_err(AppError::from_validation)?.steps());
        }
        // φ uses the window grid unless told otherwise
        if c.ensemble.phi_steps.is_none() {
            c.ensemble.phi_steps = c.ensemble.steps;
        }
        c.validate()?;
        Ok(c)
    }
}
