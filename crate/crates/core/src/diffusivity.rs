//! Edge-stopping diffusivities `g(s)` and the gradient-magnitude field they
//! are evaluated on.

use std::fmt;
use std::str::FromStr;

use ndarray::Array2;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::{BoundaryKind, ScalarField};

/// Smallest value `g` is allowed to take; keeps the implicit operator
/// nonsingular when gradients are huge.
pub const G_FLOOR: f64 = 1e-12;

#[derive(Debug, Error, PartialEq)]
pub enum DiffusivityError {
    #[error("diffusion parameter k must be positive, got {0}")]
    NonPositiveK(f64),
    #[error("diffusivity argument must be non-negative, got {0}")]
    NegativeArgument(f64),
    #[error("unknown diffusivity '{0}' (expected rational2, exp or rational)")]
    UnknownKind(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DiffusivityKind {
    /// `1 / (1 + (s/k^2)^2)`
    #[default]
    RationalSquared,
    /// `exp(-s/k^2)`
    Exponential,
    /// `1 / (1 + s/k^2)`
    Rational,
}

impl FromStr for DiffusivityKind {
    type Err = DiffusivityError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "rational2" | "rational_squared" => Ok(Self::RationalSquared),
            "exp" | "exponential" => Ok(Self::Exponential),
            "rational" => Ok(Self::Rational),
            other => Err(DiffusivityError::UnknownKind(other.to_string())),
        }
    }
}

impl fmt::Display for DiffusivityKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::RationalSquared => "rational2",
            Self::Exponential => "exp",
            Self::Rational => "rational",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiffusivitySpec {
    kind: DiffusivityKind,
    k: f64,
    /// Feed `|grad w|^2` instead of `|grad w|` (Perona-Malik convention).
    squared_argument: bool,
}

impl Default for DiffusivitySpec {
    fn default() -> Self {
        Self {
            kind: DiffusivityKind::RationalSquared,
            k: 5.0,
            squared_argument: false,
        }
    }
}

impl DiffusivitySpec {
    pub fn new(kind: DiffusivityKind, k: f64) -> Result<Self, DiffusivityError> {
        if !(k > 0.0 && k.is_finite()) {
            return Err(DiffusivityError::NonPositiveK(k));
        }
        Ok(Self {
            kind,
            k,
            squared_argument: false,
        })
    }

    pub fn with_squared_argument(mut self, on: bool) -> Self {
        self.squared_argument = on;
        self
    }

    pub fn kind(&self) -> DiffusivityKind {
        self.kind
    }

    pub fn k(&self) -> f64 {
        self.k
    }

    pub fn squared_argument(&self) -> bool {
        self.squared_argument
    }

    /// `g(s)`, without the numerical floor.
    pub fn eval(&self, s: f64) -> Result<f64, DiffusivityError> {
        if !(s >= 0.0) {
            return Err(DiffusivityError::NegativeArgument(s));
        }
        let x = s / (self.k * self.k);
        Ok(match self.kind {
            DiffusivityKind::RationalSquared => 1.0 / (1.0 + x * x),
            DiffusivityKind::Exponential => (-x).exp(),
            DiffusivityKind::Rational => 1.0 / (1.0 + x),
        })
    }

    /// `g(s)` clamped below at [`G_FLOOR`].
    pub fn eval_floored(&self, s: f64) -> Result<f64, DiffusivityError> {
        Ok(self.eval(s)?.max(G_FLOOR))
    }

    /// Pointwise `g` of a gradient-magnitude field, floored.
    pub fn apply(&self, magnitude: &ScalarField) -> Result<ScalarField, DiffusivityError> {
        let mut out = magnitude.clone();
        for v in out.values_mut().iter_mut() {
            let s = if self.squared_argument { *v * *v } else { *v };
            *v = self.eval_floored(s)?;
        }
        Ok(out)
    }
}

/// `g(s)` for a spec.
pub fn g_eval(spec: &DiffusivitySpec, s: f64) -> Result<f64, DiffusivityError> {
    spec.eval(s)
}

/// `|grad w|` with central differences inside and one-sided differences on
/// the outermost ring (periodic grids wrap instead).
pub fn gradient_magnitude_field(omega: &ScalarField) -> ScalarField {
    let g = *omega.grid();
    let (nx, ny) = g.shape();
    let w = omega.values();
    let periodic = g.boundary() == BoundaryKind::Periodic;
    let dx_at = |i: usize, j: usize| -> f64 {
        if periodic {
            let (ip, im) = ((i + 1) % nx, (i + nx - 1) % nx);
            (w[[ip, j]] - w[[im, j]]) / (2.0 * g.dx())
        } else if i == 0 {
            (w[[1, j]] - w[[0, j]]) / g.dx()
        } else if i + 1 == nx {
            (w[[i, j]] - w[[i - 1, j]]) / g.dx()
        } else {
            (w[[i + 1, j]] - w[[i - 1, j]]) / (2.0 * g.dx())
        }
    };
    let dy_at = |i: usize, j: usize| -> f64 {
        if periodic {
            let (jp, jm) = ((j + 1) % ny, (j + ny - 1) % ny);
            (w[[i, jp]] - w[[i, jm]]) / (2.0 * g.dy())
        } else if j == 0 {
            (w[[i, 1]] - w[[i, 0]]) / g.dy()
        } else if j + 1 == ny {
            (w[[i, j]] - w[[i, j - 1]]) / g.dy()
        } else {
            (w[[i, j + 1]] - w[[i, j - 1]]) / (2.0 * g.dy())
        }
    };
    let values = Array2::from_shape_fn((nx, ny), |(i, j)| dx_at(i, j).hypot(dy_at(i, j)));
    ScalarField::from_array(g, values).expect("shape from grid")
}
