//! Image-quality metrics, the matrix-inversion cost model, and run reports.

use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};
use thiserror::Error;

use crate::diffusivity::DiffusivityKind;
use crate::grid::UpwindMode;
use crate::imageio::{GrayImage, InitMode};

pub const PEAK: f64 = 255.0;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("image dimensions differ: {0:?} vs {1:?}")]
    DimensionMismatch((usize, usize), (usize, usize)),
    #[error("inhomogeneous sweep: reports cover different image or region sizes")]
    InhomogeneousSweep,
    #[error("mask length {got} does not match {expected} pixels")]
    MaskLength { expected: usize, got: usize },
    #[error("csv: {0}")]
    Csv(String),
}

/// Root-mean-square difference over all pixels.
pub fn rmse(reference: &GrayImage, candidate: &GrayImage) -> Result<f64, MetricsError> {
    if reference.dims() != candidate.dims() {
        return Err(MetricsError::DimensionMismatch(
            reference.dims(),
            candidate.dims(),
        ));
    }
    let n = reference.pixels().len() as f64;
    let sum: f64 = reference
        .pixels()
        .iter()
        .zip(candidate.pixels())
        .map(|(p, i)| (p - i) * (p - i))
        .sum();
    Ok((sum / n).sqrt())
}

/// RMSE restricted to pixels where `mask` is set.
pub fn rmse_masked(
    reference: &GrayImage,
    candidate: &GrayImage,
    mask: &[bool],
) -> Result<f64, MetricsError> {
    if reference.dims() != candidate.dims() {
        return Err(MetricsError::DimensionMismatch(
            reference.dims(),
            candidate.dims(),
        ));
    }
    if mask.len() != reference.pixels().len() {
        return Err(MetricsError::MaskLength {
            expected: reference.pixels().len(),
            got: mask.len(),
        });
    }
    let (sum, n) = reference
        .pixels()
        .iter()
        .zip(candidate.pixels())
        .zip(mask)
        .filter(|(_, m)| **m)
        .fold((0.0, 0usize), |(s, n), ((p, i), _)| (s + (p - i) * (p - i), n + 1));
    Ok(if n == 0 { 0.0 } else { (sum / n as f64).sqrt() })
}

/// `20 log10(255 / rmse)`; `+inf` for a zero error.
pub fn psnr_from_rmse(rmse: f64) -> f64 {
    if rmse == 0.0 {
        f64::INFINITY
    } else {
        20.0 * (PEAK / rmse).log10()
    }
}

pub fn psnr(reference: &GrayImage, candidate: &GrayImage) -> Result<f64, MetricsError> {
    rmse(reference, candidate).map(psnr_from_rmse)
}

/// Cost model for inverting an `n x n` matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FlopModel {
    /// Leading term of Gaussian elimination, `2/3 n^3`.
    #[default]
    GaussianElimination,
}

impl FlopModel {
    pub fn flop_inv(&self, n: usize) -> f64 {
        match self {
            FlopModel::GaussianElimination => 2.0 / 3.0 * (n as f64).powi(3),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            FlopModel::GaussianElimination => "gaussian-elimination-2/3n^3",
        }
    }
}

/// FLOPs per pixel of `Omega` (`N x M`): `iterations * flop_inv(max(N, M)) / (N M)`.
pub fn flops_estimate(omega_size: (usize, usize), iterations: usize, model: FlopModel) -> f64 {
    let (n, m) = omega_size;
    iterations as f64 * model.flop_inv(n.max(m)) / (n * m) as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Converged,
    Diverged,
    MaxIter,
}

impl fmt::Display for RunStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RunStatus::Converged => "converged",
            RunStatus::Diverged => "diverged",
            RunStatus::MaxIter => "max_iter",
        })
    }
}

/// Solver settings echoed into a report.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReportParams {
    pub alpha: f64,
    pub nu: f64,
    pub dt: f64,
    pub tol: f64,
    pub max_iter: usize,
    pub g: DiffusivityKind,
    pub k: f64,
    pub upwind: UpwindMode,
    pub init: InitMode,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub status: RunStatus,
    pub iterations: usize,
    pub residual_history: Vec<f64>,
    pub flops_per_pixel: f64,
    pub flop_model: FlopModel,
    pub psnr_db: Option<f64>,
    pub rmse: Option<f64>,
    pub wall_time_s: Option<f64>,
    pub params: ReportParams,
    pub omega_size: (usize, usize),
    pub image_dims: (usize, usize),
    /// Why a run stopped early, when it was not a clean convergence.
    pub note: Option<String>,
}

impl RunReport {
    pub fn residual_final(&self) -> f64 {
        self.residual_history.last().copied().unwrap_or(f64::NAN)
    }

    /// Attach PSNR/RMSE against a reference.
    pub fn with_quality(mut self, rmse: f64) -> Self {
        self.rmse = Some(rmse);
        self.psnr_db = Some(psnr_from_rmse(rmse));
        self
    }

    pub fn to_json(&self, include_history: bool) -> Value {
        let p = &self.params;
        let mut m = Map::new();
        m.insert("status".into(), json!(self.status.to_string()));
        m.insert("iterations".into(), json!(self.iterations));
        m.insert("residual_final".into(), num(self.residual_final()));
        m.insert("flops_per_pixel".into(), num(self.flops_per_pixel));
        m.insert("flop_model".into(), json!(self.flop_model.name()));
        m.insert("psnr".into(), self.psnr_db.map_or(Value::Null, num));
        m.insert("rmse".into(), self.rmse.map_or(Value::Null, num));
        if let Some(t) = self.wall_time_s {
            m.insert("wall_time_s".into(), num(t));
        }
        m.insert("alpha".into(), num(p.alpha));
        m.insert("nu".into(), num(p.nu));
        m.insert("dt".into(), num(p.dt));
        m.insert("tol".into(), num(p.tol));
        m.insert("max_iter".into(), json!(p.max_iter));
        m.insert("g".into(), json!(p.g.to_string()));
        m.insert("k".into(), num(p.k));
        m.insert("upwind".into(), serde_json::to_value(p.upwind).expect("enum"));
        m.insert("init".into(), json!(p.init.to_string()));
        m.insert(
            "omega".into(),
            json!([self.omega_size.0, self.omega_size.1]),
        );
        m.insert(
            "image".into(),
            json!([self.image_dims.0, self.image_dims.1]),
        );
        if let Some(note) = &self.note {
            m.insert("note".into(), json!(note));
        }
        if include_history {
            m.insert(
                "residual_history".into(),
                Value::Array(self.residual_history.iter().map(|r| num(*r)).collect()),
            );
        }
        Value::Object(m)
    }
}

/// Round to 12 significant digits.
pub fn round_sig(x: f64) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return x;
    }
    format!("{x:.11e}").parse().expect("formatted float parses")
}

/// JSON number rounded to 12 significant digits; non-finite values become
/// the strings `"inf"`, `"-inf"`, `"nan"`.
pub fn num(x: f64) -> Value {
    if x.is_finite() {
        json!(round_sig(x))
    } else {
        json!(format_float(x))
    }
}

/// Text form used in CSV cells.
pub fn format_float(x: f64) -> String {
    if x.is_nan() {
        "nan".to_string()
    } else if x.is_infinite() {
        if x > 0.0 { "inf" } else { "-inf" }.to_string()
    } else {
        format!("{}", round_sig(x))
    }
}

pub const SWEEP_COLUMNS: [&str; 7] = [
    "alpha",
    "dt",
    "nu",
    "status",
    "iterations",
    "flops_per_pixel",
    "psnr_db",
];

/// Table of runs sorted by `(dt, alpha)`.
pub fn summarize_sweep(reports: &[RunReport]) -> Result<String, MetricsError> {
    if let Some(first) = reports.first() {
        if reports
            .iter()
            .any(|r| r.omega_size != first.omega_size || r.image_dims != first.image_dims)
        {
            return Err(MetricsError::InhomogeneousSweep);
        }
    }
    let mut order: Vec<&RunReport> = reports.iter().collect();
    order.sort_by(|a, b| {
        a.params
            .dt
            .total_cmp(&b.params.dt)
            .then(a.params.alpha.total_cmp(&b.params.alpha))
    });
    let mut w = csv::Writer::from_writer(Vec::new());
    let csv_err = |e: csv::Error| MetricsError::Csv(e.to_string());
    w.write_record(SWEEP_COLUMNS).map_err(csv_err)?;
    for r in order {
        w.write_record([
            format_float(r.params.alpha),
            format_float(r.params.dt),
            format_float(r.params.nu),
            r.status.to_string(),
            r.iterations.to_string(),
            format_float(r.flops_per_pixel),
            r.psnr_db.map(format_float).unwrap_or_default(),
        ])
        .map_err(csv_err)?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| MetricsError::Csv(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn img(w: usize, h: usize, f: impl Fn(usize, usize) -> f64) -> GrayImage {
        GrayImage::from_fn(w, h, f)
    }

    pub(crate) fn report(alpha: f64, dt: f64, iters: usize, omega: (usize, usize)) -> RunReport {
        RunReport {
            status: RunStatus::Converged,
            iterations: iters,
            residual_history: vec![1e-5],
            flops_per_pixel: flops_estimate(omega, iters, FlopModel::default()),
            flop_model: FlopModel::default(),
            psnr_db: None,
            rmse: None,
            wall_time_s: None,
            params: ReportParams {
                alpha,
                nu: 2.0,
                dt,
                tol: 1e-4,
                max_iter: 100,
                g: DiffusivityKind::RationalSquared,
                k: 5.0,
                upwind: UpwindMode::PaperExact,
                init: InitMode::MeanOfBand,
            },
            omega_size: omega,
            image_dims: (64, 64),
            note: None,
        }
    }

    #[test]
    fn rmse_basics() {
        let a = img(5, 4, |x, y| (x * 7 + y * 3) as f64);
        assert_eq!(rmse(&a, &a).unwrap(), 0.0);
        let b = img(5, 4, |x, y| (x * 7 + y * 3) as f64 + 1.0);
        assert_eq!(rmse(&a, &b).unwrap(), 1.0);
        assert_eq!(rmse(&b, &a).unwrap(), 1.0);
        assert!(rmse(&a, &img(4, 5, |_, _| 0.0)).is_err());
    }

    #[test]
    fn psnr_values() {
        assert!((psnr_from_rmse(1.0) - 48.130803608679).abs() < 1e-9);
        assert_eq!(psnr_from_rmse(255.0), 0.0);
        let a = img(3, 3, |_, _| 9.0);
        assert_eq!(psnr(&a, &a).unwrap(), f64::INFINITY);
        assert_eq!(format_float(f64::INFINITY), "inf");
    }

    #[test]
    fn masked_rmse() {
        let a = img(2, 1, |_, _| 0.0);
        let b = GrayImage::new(2, 1, vec![0.0, 4.0]).unwrap();
        assert_eq!(rmse_masked(&a, &b, &[false, true]).unwrap(), 4.0);
        assert_eq!(rmse_masked(&a, &b, &[true, false]).unwrap(), 0.0);
        assert!(rmse_masked(&a, &b, &[true]).is_err());
    }

    #[test]
    fn flop_formula() {
        let m = FlopModel::default();
        assert!((flops_estimate((9, 9), 1, m) - m.flop_inv(9) / 81.0).abs() < 1e-12);
        assert_eq!(
            flops_estimate((10, 6), 40, m),
            2.0 * flops_estimate((10, 6), 20, m)
        );
        assert_eq!(flops_estimate((64, 12), 7, m), flops_estimate((12, 64), 7, m));
    }

    #[test]
    fn sweep_table() {
        let empty = summarize_sweep(&[]).unwrap();
        assert_eq!(empty, "alpha,dt,nu,status,iterations,flops_per_pixel,psnr_db\n");
        let rows = summarize_sweep(&[
            report(1.0 / 3.0, 0.001, 10, (10, 10)),
            report(0.0, 0.001, 20, (10, 10)),
            report(0.0, 0.0001, 30, (10, 10)).with_quality(1.0),
        ])
        .unwrap();
        let lines: Vec<&str> = rows.lines().collect();
        assert_eq!(lines.len(), 4);
        assert!(lines[1].starts_with("0,0.0001,2,converged,30,"));
        assert!(lines[1].ends_with(",48.1308036087"));
        assert!(lines[2].starts_with("0,0.001,2,converged,20,"));
        assert!(lines[3].starts_with("0.333333333333,0.001,"));
        assert!(lines[3].ends_with(','));
        let mixed = [report(0.0, 0.1, 1, (10, 10)), report(0.0, 0.1, 1, (64, 12))];
        assert_eq!(
            summarize_sweep(&mixed),
            Err(MetricsError::InhomogeneousSweep)
        );
    }

    #[test]
    fn json_shape() {
        let r = report(0.5, 0.1, 3, (10, 10)).with_quality(0.0);
        let v = r.to_json(false);
        assert_eq!(v["psnr"], "inf");
        assert_eq!(v["status"], "converged");
        assert_eq!(v["upwind"], "paper-exact");
        assert!(v.get("wall_time_s").is_none());
        assert!(v.get("residual_history").is_none());
        assert_eq!(r.to_json(true)["residual_history"][0], 1e-5);
    }

    #[test]
    fn rounding_to_twelve_digits() {
        assert_eq!(round_sig(1.0 / 3.0), 0.333333333333);
        assert_eq!(round_sig(123_456_789.123_456_8), 123456789.123);
        assert_eq!(round_sig(0.0), 0.0);
    }
}
