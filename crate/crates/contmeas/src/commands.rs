//! The work behind each subcommand. Every function takes a resolved
//! configuration and an output directory and returns what it wrote.

use std::path::{Path, PathBuf};

use contmeas_core::analysis::{breakdown_scan, fit_scaling, run_sweep, ScalingFit};
use contmeas_core::measurement::run_ensemble;
use contmeas_core::model::{ensemble_xbar_spread, minimal_ensemble_xbar_spread, minimal_xbar_uncertainty, xbar_uncertainty};
use serde::Serialize;

use crate::config::{ParameterName, RunConfig, SweepMode, SPEC_VERSION};
use crate::error::AppError;
use crate::output::*;

#[derive(Debug, Serialize)]
pub struct References {
    /// `ΔP/(g₀T)`, the readout-noise floor.
    pub noise_floor: f64,
    /// Linear two-term uncertainty sum.
    pub xbar_uncertainty: f64,
    /// Quadrature sum matching the ensemble spread of the naive scheme.
    pub ensemble_xbar_spread: f64,
    pub minimal_xbar_uncertainty: f64,
    pub minimal_ensemble_xbar_spread: f64,
}

impl References {
    fn new(config: &RunConfig) -> Result<Self, AppError> {
        let meter = config.meter()?;
        let omega = config.system.omega;
        Ok(References {
            noise_floor: meter.delta_p / (meter.g0 * meter.duration),
            xbar_uncertainty: xbar_uncertainty(meter.delta_p, &meter, omega),
            ensemble_xbar_spread: ensemble_xbar_spread(meter.delta_p, &meter, omega),
            minimal_xbar_uncertainty: minimal_xbar_uncertainty(meter.duration, omega),
            minimal_ensemble_xbar_spread: minimal_ensemble_xbar_spread(meter.duration, omega),
        })
    }
}

#[derive(Debug, Serialize)]
pub struct Summary<'a> {
    pub spec_version: u32,
    pub command: &'static str,
    pub config: &'a RunConfig,
    pub statistics: Statistics,
    pub references: References,
}

#[derive(Debug, Serialize)]
pub struct FitRecord {
    pub x: String,
    pub y: String,
    pub exponent: f64,
    pub exponent_std_error: f64,
    pub prefactor: f64,
    pub r_squared: f64,
    pub residuals: Vec<Option<f64>>,
    pub rejected: Vec<usize>,
}

impl FitRecord {
    fn new(x: &str, y: &str, fit: ScalingFit) -> Self {
        FitRecord {
            x: x.to_string(),
            y: y.to_string(),
            exponent: fit.exponent,
            exponent_std_error: fit.exponent_std_error,
            prefactor: fit.prefactor,
            r_squared: fit.r_squared,
            residuals: fit.residuals.into_iter().map(finite).collect(),
            rejected: fit.rejected,
        }
    }
}

#[derive(Debug, Serialize)]
struct SweepSummary<'a> {
    spec_version: u32,
    command: &'static str,
    config: &'a RunConfig,
    points: usize,
    fit: Option<FitRecord>,
}

/// Paths written by a command.
#[derive(Debug, Default)]
pub struct Written {
    pub files: Vec<PathBuf>,
    /// Human-readable notes for the terminal.
    pub notes: Vec<String>,
}

impl Written {
    fn write(&mut self, path: PathBuf, bytes: &[u8]) -> Result<(), AppError> {
        write_atomic(&path, bytes)?;
        self.files.push(path);
        Ok(())
    }
}

pub fn simulate(config: &RunConfig, out: &Path) -> Result<Written, AppError> {
    let result = run_ensemble(&config.scheme()?, &config.ensemble_config()?)?;
    let mut written = Written::default();
    written.write(out.join("run.csv"), &csv_bytes(result.samples.iter().map(RunRow::from))?)?;
    let summary = Summary {
        spec_version: SPEC_VERSION,
        command: "simulate",
        config,
        statistics: Statistics::from(&result),
        references: References::new(config)?,
    };
    written.write(out.join("summary.json"), &json_bytes(&summary)?)?;
    written.notes.push(format!(
        "bias {:.6e} ± {:.2e}, spread {:.6e} ± {:.2e}, {} escaped",
        result.bias, result.bias_std_error, result.spread, result.spread_std_error, result.escaped
    ));
    Ok(written)
}

fn fit_column(
    grid: &[f64],
    name: &str,
    x_name: &str,
    column: impl Fn(usize, &str) -> Option<f64>,
) -> Result<FitRecord, AppError> {
    let ys = (0..grid.len())
        .map(|i| column(i, name).ok_or_else(|| AppError::config("sweep.fit", format!("unknown column `{name}`"))))
        .collect::<Result<Vec<f64>, AppError>>()?;
    let fit = fit_scaling(grid, &ys).map_err(AppError::Core)?;
    Ok(FitRecord::new(x_name, name, fit))
}

pub fn sweep(config: &RunConfig, out: &Path) -> Result<Written, AppError> {
    let section = config.sweep.as_ref().ok_or_else(|| AppError::config("sweep", "section missing"))?;
    let grid = section.grid.resolve("sweep.grid")?;
    let x_name = config_parameter_name(section.parameter);
    let mut written = Written::default();
    let fit = match section.mode {
        SweepMode::Ensemble => {
            let points = run_sweep(&config.sweep_spec()?)?;
            let rows: Vec<SweepRow> = points.iter().map(SweepRow::from).collect();
            written.write(out.join("sweep.csv"), &csv_bytes(&rows)?)?;
            match &section.fit {
                Some(name) => Some(fit_column(&grid, name, x_name, |i, n| rows[i].column(n))?),
                None => None,
            }
        }
        SweepMode::ClosedForm => {
            let rows = closed_form_rows(config, section.parameter, &grid)?;
            written.write(out.join("sweep.csv"), &csv_bytes(&rows)?)?;
            match &section.fit {
                Some(name) => Some(fit_column(&grid, name, x_name, |i, n| rows[i].column(n))?),
                None => None,
            }
        }
    };
    if let Some(f) = &fit {
        written.notes.push(format!(
            "{} ∝ {}^{:.4} (± {:.2e}, r² = {:.6})",
            f.y, f.x, f.exponent, f.exponent_std_error, f.r_squared
        ));
    }
    let summary = SweepSummary {
        spec_version: SPEC_VERSION,
        command: "sweep",
        config,
        points: grid.len(),
        fit,
    };
    written.write(out.join("fit.json"), &json_bytes(&summary)?)?;
    Ok(written)
}

fn config_parameter_name(p: ParameterName) -> &'static str {
    contmeas_core::analysis::SweepParameter::from(p).name()
}

fn closed_form_rows(config: &RunConfig, parameter: ParameterName, grid: &[f64]) -> Result<Vec<ClosedFormRow>, AppError> {
    let omega = config.system.omega;
    grid.iter()
        .enumerate()
        .map(|(index, &value)| {
            let mut c = config.clone();
            match parameter {
                ParameterName::Lambda => c.system.lambda = value,
                ParameterName::Duration => c.meter.duration = value,
                ParameterName::DeltaP => c.meter.delta_p = value,
                ParameterName::G0 => c.meter.g0 = value,
            }
            let meter = c.meter()?;
            Ok(ClosedFormRow {
                index,
                value,
                xbar_uncertainty: xbar_uncertainty(meter.delta_p, &meter, omega),
                minimal_xbar_uncertainty: minimal_xbar_uncertainty(meter.duration, omega),
                ensemble_xbar_spread: ensemble_xbar_spread(meter.delta_p, &meter, omega),
                minimal_ensemble_xbar_spread: minimal_ensemble_xbar_spread(meter.duration, omega),
            })
        })
        .collect()
}

#[derive(Debug, Serialize)]
struct BreakdownSummary<'a> {
    spec_version: u32,
    command: &'static str,
    config: &'a RunConfig,
    /// Power law of the best accuracy against `T`.
    fit: Option<FitRecord>,
    /// `χ` of the last reachable and first unreachable duration.
    transition: Option<[f64; 2]>,
}

pub fn scan_breakdown(config: &RunConfig, out: &Path) -> Result<Written, AppError> {
    let section = config
        .breakdown
        .as_ref()
        .ok_or_else(|| AppError::config("breakdown", "section missing"))?;
    let durations = section.durations.resolve("breakdown.durations")?;
    let rows = breakdown_scan(&config.ensemble_config()?, section.target, &durations, &section.range())?;
    let mut written = Written::default();
    written.write(out.join("breakdown.csv"), &csv_bytes(rows.iter().map(BreakdownRecord::from))?)?;
    let accuracy: Vec<f64> = rows.iter().map(|r| r.accuracy).collect();
    let fit = fit_scaling(&durations, &accuracy).ok().map(|f| FitRecord::new("duration", "accuracy", f));
    let transition = rows
        .windows(2)
        .find(|w| w[0].reachable != w[1].reachable)
        .map(|w| [w[0].chi, w[1].chi]);
    for r in rows.iter().filter(|r| r.at_boundary) {
        written.notes.push(format!(
            "warning: T = {}: best delta_p {:.3e} is at the end of the search range",
            r.duration, r.delta_p
        ));
    }
    if let Some(f) = &fit {
        written.notes.push(format!("accuracy ∝ T^{:.3} (± {:.2e})", f.exponent, f.exponent_std_error));
    }
    let summary = BreakdownSummary {
        spec_version: SPEC_VERSION,
        command: "scan-breakdown",
        config,
        fit,
        transition,
    };
    written.write(out.join("breakdown.json"), &json_bytes(&summary)?)?;
    Ok(written)
}

#[derive(Debug, Serialize)]
struct ScheduleEntry {
    file: String,
    order: u32,
    note: String,
}

#[derive(Debug, Serialize)]
struct ScheduleSummary<'a> {
    spec_version: u32,
    command: &'static str,
    config: &'a RunConfig,
    schedules: Vec<ScheduleEntry>,
}

/// Schedules of the configured scheme, one CSV per schedule. Coefficients
/// are per unit `λ^order`, tabulated on the half-step grid the integrator
/// reads, so re-importing them reproduces the built-in scheme exactly.
pub fn export_schedule(config: &RunConfig, out: &Path) -> Result<Written, AppError> {
    let ensemble = config.ensemble_config()?;
    let grid = ensemble.grid().map_err(AppError::from_validation)?;
    let schedules = config
        .scheme()?
        .compensation(&ensemble.meter, ensemble.system.omega, grid.refined(2))
        .map_err(AppError::from_validation)?;
    if schedules.is_empty() {
        return Err(AppError::config("scheme.kind", "this scheme has no compensation schedule"));
    }
    let mut written = Written::default();
    let mut entries = Vec::new();
    for (i, s) in schedules.iter().enumerate() {
        let file = format!("schedule_{i}.csv");
        written.write(out.join(&file), &csv_bytes(s.rows().into_iter().map(ScheduleRecord::from))?)?;
        entries.push(ScheduleEntry {
            file,
            order: s.order,
            note: s.note.clone(),
        });
    }
    let summary = ScheduleSummary {
        spec_version: SPEC_VERSION,
        command: "export-schedule",
        config,
        schedules: entries,
    };
    written.write(out.join("schedules.json"), &json_bytes(&summary)?)?;
    Ok(written)
}
