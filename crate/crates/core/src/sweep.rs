//! Grid sweeps over perturbations, deterministic metric tabulation and
//! scaling-exponent fits.
//!
//! Grid points are evaluated independently (optionally in parallel) and
//! gathered in row-major axis order, so repeated runs of one spec produce
//! bit-identical CSV. Axis values use the configuration-file units:
//! dimensionless ratios for Rabi scales, 2π×MHz for detunings and blockade
//! strengths.

use std::f64::consts::TAU as TWO_PI;

use rayon::prelude::*;
use serde::Serialize;

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::gate::evaluate_herald;
use crate::model::{Blockade, SystemConfig};
use crate::waveform::{apply_perturbation, Perturbation, Target};

/// Metrics below this are dominated by integrator tolerance; they are floored
/// and flagged in the table.
pub const METRIC_FLOOR: f64 = 1e-10;

#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum AxisKind {
    /// ε on both Rabi drives.
    RabiScale,
    /// ε on the buffer Rabi drive only.
    RabiScaleBuffer,
    /// ε on the qubit Rabi drive only.
    RabiScaleQubits,
    /// DC buffer detuning shift δ, 2π×MHz (rail 0 → −Δ1−δ, rail 1 → +Δ1+δ).
    DetuningBuffer,
    /// DC qubit Rydberg shift δ, 2π×MHz, same sign in both rails.
    DetuningQubits,
    /// Rail-0 blockade strength, 2π×MHz.
    BlockadeB0,
    /// Rail-1 blockade strength, 2π×MHz.
    BlockadeB1,
    /// Batch-2 Rabi ratio error (sequential mode).
    BatchMismatch,
}

impl AxisKind {
    pub fn column_name(self) -> &'static str {
        match self {
            AxisKind::RabiScale => "rabi_scale",
            AxisKind::RabiScaleBuffer => "rabi_scale_buffer",
            AxisKind::RabiScaleQubits => "rabi_scale_qubits",
            AxisKind::DetuningBuffer => "detuning_buffer_2pi_mhz",
            AxisKind::DetuningQubits => "detuning_qubits_2pi_mhz",
            AxisKind::BlockadeB0 => "b0_2pi_mhz",
            AxisKind::BlockadeB1 => "b1_2pi_mhz",
            AxisKind::BatchMismatch => "batch_mismatch",
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        Ok(match name {
            "rabi_scale" => AxisKind::RabiScale,
            "rabi_scale_buffer" => AxisKind::RabiScaleBuffer,
            "rabi_scale_qubits" => AxisKind::RabiScaleQubits,
            "detuning_buffer" => AxisKind::DetuningBuffer,
            "detuning_qubits" => AxisKind::DetuningQubits,
            "b0" => AxisKind::BlockadeB0,
            "b1" => AxisKind::BlockadeB1,
            "batch_mismatch" => AxisKind::BatchMismatch,
            other => {
                return Err(Error::InvalidSweep(format!(
                    "unknown sweep parameter `{other}` (expected rabi_scale, \
                     rabi_scale_buffer, rabi_scale_qubits, detuning_buffer, \
                     detuning_qubits, b0, b1 or batch_mismatch)"
                )))
            }
        })
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Spacing {
    Linear,
    Log,
}

#[derive(Copy, Clone, Debug, Serialize)]
pub struct SweepAxis {
    pub kind: AxisKind,
    pub min: f64,
    pub max: f64,
    pub points: usize,
    pub spacing: Spacing,
}

impl SweepAxis {
    fn validate(&self) -> Result<()> {
        if self.points < 2 {
            return Err(Error::InvalidSweep(format!("axis needs at least 2 points, got {}", self.points)));
        }
        if !(self.min.is_finite() && self.max.is_finite() && self.min < self.max) {
            return Err(Error::InvalidSweep(format!(
                "axis range [{}, {}] must satisfy min < max",
                self.min, self.max
            )));
        }
        if self.spacing == Spacing::Log && self.min <= 0.0 {
            return Err(Error::InvalidSweep("log spacing requires min > 0".into()));
        }
        Ok(())
    }

    pub fn values(&self) -> Vec<f64> {
        let n = self.points;
        match self.spacing {
            Spacing::Linear => (0..n)
                .map(|i| self.min + (self.max - self.min) * i as f64 / (n - 1) as f64)
                .collect(),
            Spacing::Log => {
                let (la, lb) = (self.min.ln(), self.max.ln());
                (0..n)
                    .map(|i| (la + (lb - la) * i as f64 / (n - 1) as f64).exp())
                    .collect()
            }
        }
    }
}

#[derive(Clone, Debug)]
pub struct SweepSpec {
    pub axes: Vec<SweepAxis>,
    /// Evaluate points in parallel; ordering of the table is unaffected.
    pub parallel: bool,
}

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        if self.axes.is_empty() || self.axes.len() > 2 {
            return Err(Error::InvalidSweep(format!(
                "expected 1 or 2 sweep axes, got {}",
                self.axes.len()
            )));
        }
        for axis in &self.axes {
            axis.validate()?;
        }
        Ok(())
    }
}

/// One evaluated grid point. Metrics are `None` when the point failed; the
/// failure message is kept in `error`.
#[derive(Clone, Debug, Serialize)]
pub struct SweepRow {
    pub axis_values: Vec<f64>,
    pub p_herald: Option<f64>,
    pub f_raw: Option<f64>,
    pub f_herald: Option<f64>,
    pub err_raw: Option<f64>,
    pub err_herald: Option<f64>,
    pub conjugacy_residual: Option<f64>,
    pub max_leakage: Option<f64>,
    /// Names of metrics clipped at [`METRIC_FLOOR`], `;`-joined.
    pub floored: String,
    pub error: Option<String>,
}

#[derive(Clone, Debug)]
pub struct SweepTable {
    pub axes: Vec<SweepAxis>,
    pub rows: Vec<SweepRow>,
}

/// Metric columns a scaling fit can run on.
#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum Metric {
    ErrRaw,
    ErrHerald,
    ConjugacyResidual,
    MaxLeakage,
}

impl Metric {
    fn of(self, row: &SweepRow) -> Option<f64> {
        match self {
            Metric::ErrRaw => row.err_raw,
            Metric::ErrHerald => row.err_herald,
            Metric::ConjugacyResidual => row.conjugacy_residual,
            Metric::MaxLeakage => row.max_leakage,
        }
    }
}

/// Translate one point of the grid into perturbations on the base system.
/// Blockade axes are merged into a single override so that two-axis blockade
/// grids compose correctly.
fn point_perturbations(
    axes: &[SweepAxis],
    values: &[f64],
    base: &SystemConfig,
) -> Result<Vec<Perturbation>> {
    let mut perts = Vec::new();
    let mut blockade = base.blockade;
    let mut blockade_touched = false;
    for (axis, &v) in axes.iter().zip(values) {
        match axis.kind {
            AxisKind::RabiScale => {
                perts.push(Perturbation::RabiScale { epsilon: v, target: Target::Both })
            }
            AxisKind::RabiScaleBuffer => {
                perts.push(Perturbation::RabiScale { epsilon: v, target: Target::Buffer })
            }
            AxisKind::RabiScaleQubits => {
                perts.push(Perturbation::RabiScale { epsilon: v, target: Target::Qubits })
            }
            AxisKind::DetuningBuffer => perts.push(Perturbation::DetuningOffset {
                delta: TWO_PI * v,
                target: Target::Buffer,
            }),
            AxisKind::DetuningQubits => perts.push(Perturbation::DetuningOffset {
                delta: TWO_PI * v,
                target: Target::Qubits,
            }),
            AxisKind::BlockadeB0 => {
                blockade[0] = Blockade::from_two_pi_mhz(v)?;
                blockade_touched = true;
            }
            AxisKind::BlockadeB1 => {
                blockade[1] = Blockade::from_two_pi_mhz(v)?;
                blockade_touched = true;
            }
            AxisKind::BatchMismatch => {
                perts.push(Perturbation::BatchMismatch { epsilon: v })
            }
        }
    }
    if blockade_touched {
        perts.push(Perturbation::BlockadeOverride { b0: blockade[0], b1: blockade[1] });
    }
    Ok(perts)
}

fn clip(name: &str, v: f64, floored: &mut Vec<&'static str>, tag: &'static str) -> f64 {
    let _ = name;
    if v < METRIC_FLOOR {
        floored.push(tag);
        METRIC_FLOOR
    } else {
        v
    }
}

fn evaluate_point(cfg: &RunConfig, axes: &[SweepAxis], values: &[f64]) -> SweepRow {
    let mut row = SweepRow {
        axis_values: values.to_vec(),
        p_herald: None,
        f_raw: None,
        f_herald: None,
        err_raw: None,
        err_herald: None,
        conjugacy_residual: None,
        max_leakage: None,
        floored: String::new(),
        error: None,
    };
    let result = (|| -> Result<()> {
        let perts = point_perturbations(axes, values, &cfg.system)?;
        let mut system = cfg.system.clone();
        for p in &perts {
            system = apply_perturbation(&system, p)?;
        }
        let eval = evaluate_herald(&system, cfg.eta, &cfg.integrator)?;
        let mut floored = Vec::new();
        row.p_herald = Some(eval.stats.p_herald);
        row.f_raw = Some(eval.stats.f_raw);
        row.f_herald = Some(eval.stats.f_herald);
        row.err_raw =
            Some(clip("err_raw", 1.0 - eval.stats.f_raw, &mut floored, "err_raw"));
        row.err_herald =
            Some(clip("err_herald", 1.0 - eval.stats.f_herald, &mut floored, "err_herald"));
        row.conjugacy_residual = Some(eval.result.conjugacy_residual);
        row.max_leakage = Some(eval.m0.max_leak().max(eval.m1.max_leak()).max(0.0));
        row.floored = floored.join(";");
        Ok(())
    })();
    if let Err(e) = result {
        row.error = Some(e.to_string());
    }
    row
}

/// Evaluate the whole grid. Per-point failures are recorded in the row and
/// the run continues.
pub fn run_sweep(cfg: &RunConfig, spec: &SweepSpec) -> Result<SweepTable> {
    spec.validate()?;
    cfg.system.validate()?;
    let grids: Vec<Vec<f64>> = spec.axes.iter().map(|a| a.values()).collect();
    let mut points: Vec<Vec<f64>> = Vec::new();
    match grids.len() {
        1 => {
            for &a in &grids[0] {
                points.push(vec![a]);
            }
        }
        2 => {
            for &a in &grids[0] {
                for &b in &grids[1] {
                    points.push(vec![a, b]);
                }
            }
        }
        _ => unreachable!("validated above"),
    }
    let rows: Vec<SweepRow> = if spec.parallel {
        points
            .par_iter()
            .map(|values| evaluate_point(cfg, &spec.axes, values))
            .collect()
    } else {
        points.iter().map(|values| evaluate_point(cfg, &spec.axes, values)).collect()
    };
    Ok(SweepTable { axes: spec.axes.clone(), rows })
}

fn fmt(v: f64) -> String {
    format!("{v:.11e}")
}

impl SweepTable {
    /// Deterministic CSV rendering: header row, scientific notation with 12
    /// significant digits, row-major point order.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        let mut header: Vec<&str> = self.axes.iter().map(|a| a.kind.column_name()).collect();
        header.extend([
            "p_herald",
            "F_raw",
            "F_herald",
            "err_raw",
            "err_herald",
            "conjugacy_residual",
            "max_leakage",
            "floored",
            "error",
        ]);
        out.push_str(&header.join(","));
        out.push('\n');
        for row in &self.rows {
            let mut cells: Vec<String> = row.axis_values.iter().map(|&v| fmt(v)).collect();
            for v in [
                row.p_herald,
                row.f_raw,
                row.f_herald,
                row.err_raw,
                row.err_herald,
                row.conjugacy_residual,
                row.max_leakage,
            ] {
                cells.push(v.map(fmt).unwrap_or_default());
            }
            cells.push(row.floored.clone());
            cells.push(row.error.clone().unwrap_or_default().replace(',', ";"));
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }

    /// Run metadata sidecar: config hash, integrator settings, axis layout
    /// and code version. Deterministic (no timestamps).
    pub fn metadata_json(&self, cfg: &RunConfig) -> serde_json::Value {
        serde_json::json!({
            "config_hash": format!("{:016x}", cfg.hash),
            "code_version": env!("CARGO_PKG_VERSION"),
            "integrator": cfg.integrator,
            "eta_mode": cfg.eta,
            "axes": self.axes,
            "rows": self.rows.len(),
            "metric_floor": METRIC_FLOOR,
        })
    }
}

#[derive(Copy, Clone, Debug)]
pub struct ScalingFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub points_used: usize,
}

/// Least-squares slope of log10(metric) against log10(axis value).
/// Nonpositive axis or metric values and floored metrics are excluded; fewer
/// than 4 surviving points is an error.
pub fn fit_scaling(table: &SweepTable, metric: Metric, axis_index: usize) -> Result<ScalingFit> {
    if axis_index >= table.axes.len() {
        return Err(Error::InvalidSweep(format!("axis index {axis_index} out of range")));
    }
    let mut pts: Vec<(f64, f64)> = Vec::new();
    for row in &table.rows {
        let x = row.axis_values[axis_index];
        let Some(y) = metric.of(row) else { continue };
        if x <= 0.0 || y <= METRIC_FLOOR {
            continue;
        }
        pts.push((x.log10(), y.log10()));
    }
    if pts.len() < 4 {
        return Err(Error::FitInsufficient { need: 4, found: pts.len() });
    }
    let n = pts.len() as f64;
    let sx: f64 = pts.iter().map(|p| p.0).sum();
    let sy: f64 = pts.iter().map(|p| p.1).sum();
    let sxx: f64 = pts.iter().map(|p| p.0 * p.0).sum();
    let sxy: f64 = pts.iter().map(|p| p.0 * p.1).sum();
    let denom = n * sxx - sx * sx;
    if denom == 0.0 {
        return Err(Error::InvalidSweep("degenerate axis for scaling fit".into()));
    }
    let slope = (n * sxy - sx * sy) / denom;
    let intercept = (sy - slope * sx) / n;
    let mean_y = sy / n;
    let ss_tot: f64 = pts.iter().map(|p| (p.1 - mean_y).powi(2)).sum();
    let ss_res: f64 =
        pts.iter().map(|p| (p.1 - (slope * p.0 + intercept)).powi(2)).sum();
    let r_squared = if ss_tot == 0.0 { 1.0 } else { 1.0 - ss_res / ss_tot };
    Ok(ScalingFit { slope, intercept, r_squared, points_used: pts.len() })
}
