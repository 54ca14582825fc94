//! Sparse symmetric operators on the unknown pixels and the solvers for them.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Largest system the dense fallback accepts (a 32x32 block of unknowns).
pub const DENSE_MAX_UNKNOWNS: usize = 32 * 32;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinearError {
    #[error("conjugate gradient stalled: relative residual {residual:.3e} after {iterations} iterations (target {tol:.1e})")]
    NotConverged {
        iterations: usize,
        residual: f64,
        tol: f64,
    },
    #[error("dense solve limited to {DENSE_MAX_UNKNOWNS} unknowns, got {0}")]
    TooLargeForDense(usize),
    #[error("matrix is singular to working precision")]
    Singular,
    #[error("non-finite value in linear system")]
    NonFinite,
    #[error("vector length {got} does not match operator size {expected}")]
    Length { expected: usize, got: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LinearMethod {
    /// Jacobi-preconditioned conjugate gradient.
    #[default]
    Cg,
    /// Gaussian elimination with partial pivoting.
    Dense,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearSettings {
    /// Target relative residual `|b - Ax| / |b|`.
    pub tol: f64,
    pub max_iter: usize,
    pub method: LinearMethod,
}

impl Default for LinearSettings {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iter: 10_000,
            method: LinearMethod::Cg,
        }
    }
}

/// Sparse matrix in compressed-row form. The step and Poisson operators are
/// symmetric positive definite by construction.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearOperator {
    n: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
}

impl LinearOperator {
    /// Assemble from per-row `(column, value)` entries.
    pub fn from_rows(rows: Vec<Vec<(usize, f64)>>) -> Self {
        let n = rows.len();
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        row_ptr.push(0);
        for row in rows {
            for (c, v) in row {
                cols.push(c);
                vals.push(v);
            }
            row_ptr.push(cols.len());
        }
        Self {
            n,
            row_ptr,
            cols,
            vals,
        }
    }

    pub fn size(&self) -> usize {
        self.n
    }

    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.row_ptr[r]..self.row_ptr[r + 1];
        self.cols[span.clone()]
            .iter()
            .copied()
            .zip(self.vals[span].iter().copied())
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n)
            .map(|r| self.row(r).filter(|(c, _)| *c == r).map(|(_, v)| v).sum())
            .collect()
    }

    /// `y = A x`
    pub fn apply_into(&self, x: &[f64], y: &mut [f64]) {
        for (r, yr) in y.iter_mut().enumerate() {
            let mut acc = 0.0;
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                acc += self.vals[k] * x[self.cols[k]];
            }
            *yr = acc;
        }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        self.apply_into(x, &mut y);
        y
    }

    /// Dense row-major copy.
    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut m = vec![vec![0.0; self.n]; self.n];
        for (r, row) in m.iter_mut().enumerate() {
            for (c, v) in self.row(r) {
                row[c] += v;
            }
        }
        m
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        let d = self.to_dense();
        (0..self.n).all(|r| (0..r).all(|c| (d[r][c] - d[c][r]).abs() <= tol))
    }

    /// Every row satisfies `|a_rr| > sum_{c != r} |a_rc|`.
    pub fn is_strictly_diagonally_dominant(&self) -> bool {
        (0..self.n).all(|r| {
            let (diag, off) = self.row(r).fold((0.0, 0.0), |(d, o), (c, v)| {
                if c == r {
                    (d + v, o)
                } else {
                    (d, o + f64::abs(v))
                }
            });
            f64::abs(diag) > off
        })
    }

    /// Solve `A x = b`, starting CG from `x` (ignored by the dense path).
    pub fn solve(
        &self,
        b: &[f64],
        x: &mut [f64],
        settings: &LinearSettings,
    ) -> Result<usize, LinearError> {
        if b.len() != self.n || x.len() != self.n {
            return Err(LinearError::Length {
                expected: self.n,
                got: b.len().min(x.len()),
            });
        }
        if b.iter().any(|v| !v.is_finite()) {
            return Err(LinearError::NonFinite);
        }
        match settings.method {
            LinearMethod::Cg => conjugate_gradient(self, b, x, settings.tol, settings.max_iter),
            LinearMethod::Dense => {
                if self.n > DENSE_MAX_UNKNOWNS {
                    return Err(LinearError::TooLargeForDense(self.n));
                }
                let sol = dense_solve(self.to_dense(), b.to_vec())?;
                x.copy_from_slice(&sol);
                Ok(1)
            }
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Jacobi-preconditioned CG. Returns the iteration count.
pub fn conjugate_gradient(
    op: &LinearOperator,
    b: &[f64],
    x: &mut [f64],
    tol: f64,
    max_iter: usize,
) -> Result<usize, LinearError> {
    let n = op.size();
    let b_norm = dot(b, b).sqrt();
    if b_norm == 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        return Ok(0);
    }
    if x.iter().any(|v| !v.is_finite()) {
        x.iter_mut().for_each(|v| *v = 0.0);
    }
    let inv_diag: Vec<f64> = op.diagonal().iter().map(|d| 1.0 / d).collect();
    let mut r = op.apply(x);
    for (ri, bi) in r.iter_mut().zip(b) {
        *ri = bi - *ri;
    }
    let target = tol * b_norm;
    let mut res = dot(&r, &r).sqrt();
    if res <= target {
        return Ok(0);
    }
    let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(a, d)| a * d).collect();
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut ap = vec![0.0; n];
    for it in 1..=max_iter {
        op.apply_into(&p, &mut ap);
        let pap = dot(&p, &ap);
        if !(pap > 0.0) || !pap.is_finite() {
            return Err(LinearError::NotConverged {
                iterations: it,
                residual: res / b_norm,
                tol,
            });
        }
        let step = rz / pap;
        for k in 0..n {
            x[k] += step * p[k];
            r[k] -= step * ap[k];
        }
        res = dot(&r, &r).sqrt();
        if res <= target {
            return Ok(it);
        }
        for k in 0..n {
            z[k] = r[k] * inv_diag[k];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for k in 0..n {
            p[k] = z[k] + beta * p[k];
        }
    }
    Err(LinearError::NotConverged {
        iterations: max_iter,
        residual: res / b_norm,
        tol,
    })
}

/// Gaussian elimination with partial pivoting on a dense copy.
pub fn dense_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Result<Vec<f64>, LinearError> {
    let n = b.len();
    let scale = a
        .iter()
        .flat_map(|r| r.iter())
        .fold(0.0_f64, |m, v| m.max(v.abs()));
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&p, &q| a[p][col].abs().total_cmp(&a[q][col].abs()))
            .expect("non-empty range");
        if a[pivot][col].abs() <= scale * 1e-14 {
            return Err(LinearError::Singular);
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        let (upper, lower) = a.split_at_mut(col + 1);
        let prow = &upper[col];
        for (off, row) in lower.iter_mut().enumerate() {
            let f = row[col] / prow[col];
            if f != 0.0 {
                for k in col..n {
                    row[k] -= f * prow[k];
                }
                b[col + 1 + off] -= f * b[col];
            }
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|k| a[r][k] * x[k]).sum();
        x[r] = (b[r] - s) / a[r][r];
    }
    Ok(x)
}
