//! Rectangular grids, scalar/vector fields and the finite-difference operators
//! used by the inpainting solver and the stability audit.
//!
//! Fields are stored as `Array2<f64>` indexed `[[i, j]]`, with `i` running
//! along x (image columns) and `j` along y (image rows).
//!
//! On a [`BoundaryKind::Dirichlet`] grid the operators only produce values on
//! interior nodes (`1..nx-1`, `1..ny-1`); the outermost ring of the output is
//! zero and the caller supplies ghost data through the input's ring. On a
//! [`BoundaryKind::Periodic`] grid every node is active and indices wrap.

use ndarray::Array2;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum GridError {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("shape mismatch: expected {expected:?}, got {got:?}")]
    ShapeMismatch {
        expected: (usize, usize),
        got: (usize, usize),
    },
    #[error("fields are defined on different grids")]
    GridMismatch,
    #[error("non-finite value at node ({0}, {1})")]
    NonFinite(usize, usize),
    #[error("diffusivity must be positive, found {value} at node ({i}, {j})")]
    NonPositiveDiffusivity { i: usize, j: usize, value: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BoundaryKind {
    Dirichlet,
    Periodic,
}

/// Which neighbour the advection term differences against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum UpwindMode {
    /// `-u1 (w[i+sgn(u1)] - w[i]) / dx`, literally as the scheme is printed.
    #[default]
    PaperExact,
    /// `-|u1| (w[i] - w[i-sgn(u1)]) / dx`, the textbook donor-cell form.
    Classical,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid2D {
    nx: usize,
    ny: usize,
    dx: f64,
    dy: f64,
    boundary: BoundaryKind,
}

impl Grid2D {
    pub fn new(
        nx: usize,
        ny: usize,
        dx: f64,
        dy: f64,
        boundary: BoundaryKind,
    ) -> Result<Self, GridError> {
        if nx < 3 || ny < 3 {
            return Err(GridError::InvalidGrid(format!(
                "need at least 3x3 nodes, got {nx}x{ny}"
            )));
        }
        if !(dx > 0.0 && dx.is_finite() && dy > 0.0 && dy.is_finite()) {
            return Err(GridError::InvalidGrid(format!(
                "spacings must be positive, got dx={dx}, dy={dy}"
            )));
        }
        Ok(Self {
            nx,
            ny,
            dx,
            dy,
            boundary,
        })
    }

    /// Pixel-unit grid (`dx = dy = 1`).
    pub fn pixels(nx: usize, ny: usize, boundary: BoundaryKind) -> Result<Self, GridError> {
        Self::new(nx, ny, 1.0, 1.0, boundary)
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn ny(&self) -> usize {
        self.ny
    }

    pub fn dx(&self) -> f64 {
        self.dx
    }

    pub fn dy(&self) -> f64 {
        self.dy
    }

    pub fn boundary(&self) -> BoundaryKind {
        self.boundary
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.nx, self.ny)
    }

    /// Area of one cell, the weight of the discrete L2 inner product.
    pub fn cell_area(&self) -> f64 {
        self.dx * self.dy
    }

    /// Whether an operator produces a value at `(i, j)`.
    pub fn is_active(&self, i: usize, j: usize) -> bool {
        match self.boundary {
            BoundaryKind::Periodic => true,
            BoundaryKind::Dirichlet => i > 0 && j > 0 && i + 1 < self.nx && j + 1 < self.ny,
        }
    }

    /// Neighbour index along x at offset `+1` / `-1`, wrapping on periodic grids.
    /// On Dirichlet grids only valid for active nodes.
    #[inline]
    fn xp(&self, i: usize) -> usize {
        if i + 1 == self.nx {
            0
        } else {
            i + 1
        }
    }

    #[inline]
    fn xm(&self, i: usize) -> usize {
        if i == 0 {
            self.nx - 1
        } else {
            i - 1
        }
    }

    #[inline]
    fn yp(&self, j: usize) -> usize {
        if j + 1 == self.ny {
            0
        } else {
            j + 1
        }
    }

    #[inline]
    fn ym(&self, j: usize) -> usize {
        if j == 0 {
            self.ny - 1
        } else {
            j - 1
        }
    }

    /// Neighbour at a signed offset in {-1, 0, 1}.
    #[inline]
    fn shift_x(&self, i: usize, s: i8) -> usize {
        match s {
            1 => self.xp(i),
            -1 => self.xm(i),
            _ => i,
        }
    }

    #[inline]
    fn shift_y(&self, j: usize, s: i8) -> usize {
        match s {
            1 => self.yp(j),
            -1 => self.ym(j),
            _ => j,
        }
    }

    fn for_each_active(&self, mut f: impl FnMut(usize, usize)) {
        let (i0, i1, j0, j1) = match self.boundary {
            BoundaryKind::Periodic => (0, self.nx, 0, self.ny),
            BoundaryKind::Dirichlet => (1, self.nx - 1, 1, self.ny - 1),
        };
        for j in j0..j1 {
            for i in i0..i1 {
                f(i, j);
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    grid: Grid2D,
    values: Array2<f64>,
}

impl ScalarField {
    pub fn zeros(grid: Grid2D) -> Self {
        Self {
            grid,
            values: Array2::zeros(grid.shape()),
        }
    }

    pub fn constant(grid: Grid2D, c: f64) -> Self {
        Self {
            grid,
            values: Array2::from_elem(grid.shape(), c),
        }
    }

    pub fn from_fn(grid: Grid2D, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        Self {
            grid,
            values: Array2::from_shape_fn(grid.shape(), |(i, j)| f(i, j)),
        }
    }

    pub fn from_array(grid: Grid2D, values: Array2<f64>) -> Result<Self, GridError> {
        if values.dim() != grid.shape() {
            return Err(GridError::ShapeMismatch {
                expected: grid.shape(),
                got: values.dim(),
            });
        }
        Ok(Self { grid, values })
    }

    pub fn grid(&self) -> &Grid2D {
        &self.grid
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut Array2<f64> {
        &mut self.values
    }

    pub fn into_values(self) -> Array2<f64> {
        self.values
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[[i, j]]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.values[[i, j]] = v;
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    /// First non-finite node, if any.
    pub fn find_non_finite(&self) -> Option<(usize, usize)> {
        self.values
            .indexed_iter()
            .find(|(_, v)| !v.is_finite())
            .map(|(ij, _)| ij)
    }

    pub fn ensure_finite(&self) -> Result<(), GridError> {
        match self.find_non_finite() {
            Some((i, j)) => Err(GridError::NonFinite(i, j)),
            None => Ok(()),
        }
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            grid: self.grid,
            values: &self.values * c,
        }
    }

    /// Discrete L2 inner product `sum f g dx dy` over all nodes.
    pub fn inner(&self, other: &ScalarField) -> Result<f64, GridError> {
        same_grid(&self.grid, &other.grid)?;
        Ok(self
            .values
            .iter()
            .zip(other.values.iter())
            .map(|(a, b)| a * b)
            .sum::<f64>()
            * self.grid.cell_area())
    }

    /// Squared discrete L2 norm `|f|^2`.
    pub fn norm_sq(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>() * self.grid.cell_area()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VectorField {
    grid: Grid2D,
    u1: Array2<f64>,
    u2: Array2<f64>,
}

impl VectorField {
    pub fn zeros(grid: Grid2D) -> Self {
        Self {
            grid,
            u1: Array2::zeros(grid.shape()),
            u2: Array2::zeros(grid.shape()),
        }
    }

    pub fn from_components(
        grid: Grid2D,
        u1: Array2<f64>,
        u2: Array2<f64>,
    ) -> Result<Self, GridError> {
        for c in [&u1, &u2] {
            if c.dim() != grid.shape() {
                return Err(GridError::ShapeMismatch {
                    expected: grid.shape(),
                    got: c.dim(),
                });
            }
        }
        Ok(Self { grid, u1, u2 })
    }

    pub fn grid(&self) -> &Grid2D {
        &self.grid
    }

    pub fn u1(&self) -> &Array2<f64> {
        &self.u1
    }

    pub fn u2(&self) -> &Array2<f64> {
        &self.u2
    }

    pub fn component(&self, c: usize) -> ScalarField {
        let values = if c == 0 { &self.u1 } else { &self.u2 };
        ScalarField {
            grid: self.grid,
            values: values.clone(),
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.u1
            .iter()
            .chain(self.u2.iter())
            .fold(0.0_f64, |m, v| m.max(v.abs()))
    }
}

fn same_grid(a: &Grid2D, b: &Grid2D) -> Result<(), GridError> {
    if a.shape() != b.shape() {
        return Err(GridError::ShapeMismatch {
            expected: a.shape(),
            got: b.shape(),
        });
    }
    if a != b {
        return Err(GridError::GridMismatch);
    }
    Ok(())
}

/// Five-point Laplacian.
pub fn laplacian(f: &ScalarField) -> Result<ScalarField, GridError> {
    f.ensure_finite()?;
    let g = f.grid;
    let (idx2, idy2) = (1.0 / (g.dx * g.dx), 1.0 / (g.dy * g.dy));
    let v = &f.values;
    let mut out = Array2::zeros(g.shape());
    g.for_each_active(|i, j| {
        let c = v[[i, j]];
        out[[i, j]] = (v[[g.xp(i), j]] + v[[g.xm(i), j]] - 2.0 * c) * idx2
            + (v[[i, g.yp(j)]] + v[[i, g.ym(j)]] - 2.0 * c) * idy2;
    });
    Ok(ScalarField {
        grid: g,
        values: out,
    })
}

/// Central-difference gradient `(f_x, f_y)`.
pub fn gradient(f: &ScalarField) -> VectorField {
    let g = f.grid;
    let (hx, hy) = (0.5 / g.dx, 0.5 / g.dy);
    let v = &f.values;
    let mut u1 = Array2::zeros(g.shape());
    let mut u2 = Array2::zeros(g.shape());
    g.for_each_active(|i, j| {
        u1[[i, j]] = (v[[g.xp(i), j]] - v[[g.xm(i), j]]) * hx;
        u2[[i, j]] = (v[[i, g.yp(j)]] - v[[i, g.ym(j)]]) * hy;
    });
    VectorField { grid: g, u1, u2 }
}

/// Perpendicular gradient `(-I_y, I_x)`, the velocity of stream function `I`.
pub fn perp_gradient(f: &ScalarField) -> VectorField {
    let VectorField { grid, u1, u2 } = gradient(f);
    VectorField {
        grid,
        u1: -u2,
        u2: u1,
    }
}

/// Central-difference divergence `u1_x + u2_y`.
pub fn divergence(u: &VectorField) -> ScalarField {
    let g = u.grid;
    let (hx, hy) = (0.5 / g.dx, 0.5 / g.dy);
    let mut out = Array2::zeros(g.shape());
    g.for_each_active(|i, j| {
        out[[i, j]] = (u.u1[[g.xp(i), j]] - u.u1[[g.xm(i), j]]) * hx
            + (u.u2[[i, g.yp(j)]] - u.u2[[i, g.ym(j)]]) * hy;
    });
    ScalarField {
        grid: g,
        values: out,
    }
}

#[inline]
fn sgn(x: f64) -> i8 {
    if x > 0.0 {
        1
    } else if x < 0.0 {
        -1
    } else {
        0
    }
}

/// Explicit advection term of the vorticity update,
/// `-|u1| sgn(u1) (w[i+s1,j] - w[i,j]) / dx - |u2| sgn(u2) (w[i,j+s2] - w[i,j]) / dy`
/// in [`UpwindMode::PaperExact`], or the donor-cell form in
/// [`UpwindMode::Classical`]. `sgn(0) = 0`.
pub fn upwind_advect(
    omega: &ScalarField,
    u: &VectorField,
    mode: UpwindMode,
) -> Result<ScalarField, GridError> {
    same_grid(&omega.grid, &u.grid)?;
    let g = omega.grid;
    let w = &omega.values;
    let mut out = Array2::zeros(g.shape());
    g.for_each_active(|i, j| {
        out[[i, j]] = advect_at(&g, w, u.u1[[i, j]], u.u2[[i, j]], i, j, mode);
    });
    Ok(ScalarField {
        grid: g,
        values: out,
    })
}

#[inline]
pub(crate) fn advect_at(
    g: &Grid2D,
    w: &Array2<f64>,
    u1: f64,
    u2: f64,
    i: usize,
    j: usize,
    mode: UpwindMode,
) -> f64 {
    let (s1, s2) = (sgn(u1), sgn(u2));
    let c = w[[i, j]];
    match mode {
        UpwindMode::PaperExact => {
            -u1 * (w[[g.shift_x(i, s1), j]] - c) / g.dx - u2 * (w[[i, g.shift_y(j, s2)]] - c) / g.dy
        }
        UpwindMode::Classical => {
            -u1.abs() * (c - w[[g.shift_x(i, -s1), j]]) / g.dx
                - u2.abs() * (c - w[[i, g.shift_y(j, -s2)]]) / g.dy
        }
    }
}

/// Conservative anisotropic diffusion `div(g grad w)` with arithmetic-mean
/// face coefficients.
pub fn aniso_divergence(omega: &ScalarField, g: &ScalarField) -> Result<ScalarField, GridError> {
    same_grid(&omega.grid, &g.grid)?;
    if let Some(((i, j), &value)) = g.values.indexed_iter().find(|(_, v)| !(**v > 0.0)) {
        return Err(GridError::NonPositiveDiffusivity { i, j, value });
    }
    let grid = omega.grid;
    let (idx2, idy2) = (1.0 / (grid.dx * grid.dx), 1.0 / (grid.dy * grid.dy));
    let w = &omega.values;
    let gv = &g.values;
    let mut out = Array2::zeros(grid.shape());
    grid.for_each_active(|i, j| {
        let (ip, im, jp, jm) = (grid.xp(i), grid.xm(i), grid.yp(j), grid.ym(j));
        let c = w[[i, j]];
        let ge = 0.5 * (gv[[i, j]] + gv[[ip, j]]);
        let gw = 0.5 * (gv[[i, j]] + gv[[im, j]]);
        let gn = 0.5 * (gv[[i, j]] + gv[[i, jp]]);
        let gs = 0.5 * (gv[[i, j]] + gv[[i, jm]]);
        out[[i, j]] = (ge * (w[[ip, j]] - c) - gw * (c - w[[im, j]])) * idx2
            + (gn * (w[[i, jp]] - c) - gs * (c - w[[i, jm]])) * idy2;
    });
    Ok(ScalarField {
        grid,
        values: out,
    })
}

/// `S(h) = sqrt(4 (1/dx^2 + 1/dy^2))`, the constant in the inverse
/// inequalities `||u||_h <= S |u|` and `|Lap_h u| <= S ||u||_h`.
pub fn stability_constant(grid: &Grid2D) -> f64 {
    (4.0 * (1.0 / (grid.dx * grid.dx) + 1.0 / (grid.dy * grid.dy))).sqrt()
}

/// Squared discrete H1 seminorm `<-Lap_h u, u>` (periodic grids).
pub fn h1_seminorm_sq(f: &ScalarField) -> Result<f64, GridError> {
    let lap = laplacian(f)?;
    Ok(-lap.inner(f)?)
}

/// Same seminorm as a sum of squared forward differences.
pub fn h1_seminorm_sq_differences(f: &ScalarField) -> f64 {
    let g = f.grid;
    let v = &f.values;
    let (idx2, idy2) = (1.0 / (g.dx * g.dx), 1.0 / (g.dy * g.dy));
    let mut acc = 0.0;
    g.for_each_active(|i, j| {
        let c = v[[i, j]];
        let ex = v[[g.xp(i), j]] - c;
        let ey = v[[i, g.yp(j)]] - c;
        acc += ex * ex * idx2 + ey * ey * idy2;
    });
    acc * g.cell_area()
}
