//! CSV and JSON outputs. Files are written to a temporary sibling and
//! renamed into place, so a reader never sees a partial file.

use std::io::Write;
use std::path::Path;

use contmeas_core::analysis::{BreakdownRow, SweepPoint};
use contmeas_core::measurement::{EnsembleResult, Sample};
use contmeas_core::schedule::ScheduleRow;
use serde::{Deserialize, Serialize};

use crate::error::AppError;

pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), AppError> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    std::fs::create_dir_all(dir).map_err(|e| AppError::io(dir, e))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| AppError::io(dir, e))?;
    tmp.write_all(bytes).map_err(|e| AppError::io(path, e))?;
    tmp.persist(path).map_err(|e| AppError::io(path, e.error))?;
    Ok(())
}

pub fn csv_bytes<T: Serialize>(rows: impl IntoIterator<Item = T>) -> Result<Vec<u8>, AppError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for row in rows {
        w.serialize(row).map_err(|e| AppError::Format(e.to_string()))?;
    }
    w.into_inner().map_err(|e| AppError::Format(e.to_string()))
}

pub fn json_bytes<T: Serialize>(value: &T) -> Result<Vec<u8>, AppError> {
    let mut bytes = serde_json::to_vec_pretty(value).map_err(|e| AppError::Format(e.to_string()))?;
    bytes.push(b'\n');
    Ok(bytes)
}

/// JSON has no NaN; non-finite statistics are written as `null`.
pub fn finite(v: f64) -> Option<f64> {
    v.is_finite().then_some(v)
}

#[derive(Debug, Serialize)]
pub struct RunRow {
    pub sample: u64,
    #[serde(rename = "Q")]
    pub q: f64,
    pub readout: f64,
    pub estimate: f64,
    pub xbar_true: f64,
    pub escaped: bool,
}

impl From<&Sample> for RunRow {
    fn from(s: &Sample) -> Self {
        RunRow {
            sample: s.index,
            q: s.q,
            readout: s.readout,
            estimate: s.estimate,
            xbar_true: s.xbar_true,
            escaped: s.escaped,
        }
    }
}

/// Ensemble statistics as they appear in summaries and sweep rows.
#[derive(Debug, Clone, Serialize)]
pub struct Statistics {
    pub samples: usize,
    pub used: usize,
    pub escaped: usize,
    pub bias: Option<f64>,
    pub bias_std_error: Option<f64>,
    pub spread: Option<f64>,
    pub spread_std_error: Option<f64>,
    pub rms_error: Option<f64>,
    pub q_slope: Option<f64>,
    pub q_slope_std_error: Option<f64>,
    pub xbar_true_mean: Option<f64>,
}

impl From<&EnsembleResult> for Statistics {
    fn from(r: &EnsembleResult) -> Self {
        Statistics {
            samples: r.samples.len(),
            used: r.used(),
            escaped: r.escaped,
            bias: finite(r.bias),
            bias_std_error: finite(r.bias_std_error),
            spread: finite(r.spread),
            spread_std_error: finite(r.spread_std_error),
            rms_error: finite(r.rms_error()),
            q_slope: finite(r.q_slope),
            q_slope_std_error: finite(r.q_slope_std_error),
            xbar_true_mean: finite(r.xbar_true_mean),
        }
    }
}

#[derive(Debug, Serialize)]
pub struct SweepRow {
    pub index: usize,
    pub value: f64,
    pub seed: u64,
    pub samples: usize,
    pub used: usize,
    pub escaped: usize,
    pub bias: f64,
    pub abs_bias: f64,
    pub bias_std_error: f64,
    pub spread: f64,
    pub spread_std_error: f64,
    pub rms_error: f64,
    pub q_slope: f64,
    pub q_slope_std_error: f64,
    pub xbar_true_mean: f64,
}

impl SweepRow {
    pub const COLUMNS: [&'static str; 10] = [
        "bias",
        "abs_bias",
        "bias_std_error",
        "spread",
        "spread_std_error",
        "rms_error",
        "q_slope",
        "q_slope_std_error",
        "xbar_true_mean",
        "escaped",
    ];

    pub fn column(&self, name: &str) -> Option<f64> {
        Some(match name {
            "bias" => self.bias,
            "abs_bias" => self.abs_bias,
            "bias_std_error" => self.bias_std_error,
            "spread" => self.spread,
            "spread_std_error" => self.spread_std_error,
            "rms_error" => self.rms_error,
            "q_slope" => self.q_slope,
            "q_slope_std_error" => self.q_slope_std_error,
            "xbar_true_mean" => self.xbar_true_mean,
            "escaped" => self.escaped as f64,
            _ => return None,
        })
    }
}

impl From<&SweepPoint> for SweepRow {
    fn from(p: &SweepPoint) -> Self {
        let r = &p.result;
        SweepRow {
            index: p.index,
            value: p.value,
            seed: p.seed,
            samples: r.samples.len(),
            used: r.used(),
            escaped: r.escaped,
            bias: r.bias,
            abs_bias: r.bias.abs(),
            bias_std_error: r.bias_std_error,
            spread: r.spread,
            spread_std_error: r.spread_std_error,
            rms_error: r.rms_error(),
            q_slope: r.q_slope,
            q_slope_std_error: r.q_slope_std_error,
            xbar_true_mean: r.xbar_true_mean,
        }
    }
}

/// Closed-form uncertainty laws at one grid point.
#[derive(Debug, Serialize)]
pub struct ClosedFormRow {
    pub index: usize,
    pub value: f64,
    pub xbar_uncertainty: f64,
    pub minimal_xbar_uncertainty: f64,
    pub ensemble_xbar_spread: f64,
    pub minimal_ensemble_xbar_spread: f64,
}

impl ClosedFormRow {
    pub const COLUMNS: [&'static str; 4] = [
        "xbar_uncertainty",
        "minimal_xbar_uncertainty",
        "ensemble_xbar_spread",
        "minimal_ensemble_xbar_spread",
    ];

    pub fn column(&self, name: &str) -> Option<f64> {
        Some(match name {
            "xbar_uncertainty" => self.xbar_uncertainty,
            "minimal_xbar_uncertainty" => self.minimal_xbar_uncertainty,
            "ensemble_xbar_spread" => self.ensemble_xbar_spread,
            "minimal_ensemble_xbar_spread" => self.minimal_ensemble_xbar_spread,
            _ => return None,
        })
    }
}

#[derive(Debug, Serialize)]
pub struct BreakdownRecord {
    pub duration: f64,
    pub delta_p: f64,
    pub accuracy: f64,
    pub accuracy_std_error: f64,
    pub chi: f64,
    pub reachable: bool,
    pub at_boundary: bool,
}

impl From<&BreakdownRow> for BreakdownRecord {
    fn from(r: &BreakdownRow) -> Self {
        BreakdownRecord {
            duration: r.duration,
            delta_p: r.delta_p,
            accuracy: r.accuracy,
            accuracy_std_error: r.accuracy_std_error,
            chi: r.chi,
            reachable: r.reachable,
            at_boundary: r.at_boundary,
        }
    }
}

/// Schedule CSV row: coefficient of `Qᵃ xᵇ pᶜ` at time `t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScheduleRecord {
    pub t: f64,
    pub a: u8,
    pub b: u8,
    pub c: u8,
    pub coefficient: f64,
}

impl From<ScheduleRow> for ScheduleRecord {
    fn from(r: ScheduleRow) -> Self {
        ScheduleRecord {
            t: r.t,
            a: r.a,
            b: r.b,
            c: r.c,
            coefficient: r.coefficient,
        }
    }
}

impl From<ScheduleRecord> for ScheduleRow {
    fn from(r: ScheduleRecord) -> Self {
        ScheduleRow {
            t: r.t,
            a: r.a,
            b: r.b,
            c: r.c,
            coefficient: r.coefficient,
        }
    }
}

pub fn read_schedule_csv(path: &Path) -> Result<Vec<ScheduleRow>, AppError> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| AppError::Parse(format!("{}: {e}", path.display())))?;
    let mut rows = Vec::new();
    for record in reader.deserialize::<ScheduleRecord>() {
        let r = record.map_err(|e| AppError::Parse(format!("{}: {e}", path.display())))?;
        rows.push(r.into());
    }
    Ok(rows)
}
