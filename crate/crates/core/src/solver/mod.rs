//! Semi-implicit vorticity transport with Voigt regularisation.
//!
//! One time step solves
//!
//! ```text
//! (1 - a^2 Lap) w' - nu dt div(g grad w') = (1 - a^2 Lap) w + dt ADV(w, u)
//! ```
//!
//! for the vorticity on the unknown pixels, with `g` frozen at the previous
//! vorticity, then recovers the intensity from `Lap I = w'` and the velocity
//! `u = perp grad I`. Known pixels act as Dirichlet data for both unknowns:
//! the intensity keeps its host values and the vorticity keeps the Laplacian
//! of the known host data. With `a = 0` the step is the plain Navier-Stokes
//! update and runs through exactly the same code.

mod linear;

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use linear::{
    conjugate_gradient, dense_solve, LinearError, LinearMethod, LinearOperator, LinearSettings,
    DENSE_MAX_UNKNOWNS,
};

use crate::diffusivity::{gradient_magnitude_field, DiffusivityError, DiffusivitySpec};
use crate::grid::{advect_at, laplacian, perp_gradient, GridError, ScalarField, UpwindMode, VectorField};
use crate::imageio::{embed_region, extract_initial_state, GrayImage, ImageError, InitMode, MaskRegion};
use crate::metrics::{flops_estimate, FlopModel, ReportParams, RunReport, RunStatus};

/// Residual beyond which a run is declared diverged.
pub const DIVERGENCE_RESIDUAL: f64 = 1e6;

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("linear solve failed: {0}")]
    Linear(#[from] LinearError),
    #[error("non-finite {0} detected")]
    NonFinite(&'static str),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Diffusivity(#[from] DiffusivityError),
    #[error(transparent)]
    Image(#[from] ImageError),
    #[error("state does not match the region box")]
    StateShape,
}

impl FromStr for UpwindMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "paper-exact" | "paper_exact" => Ok(UpwindMode::PaperExact),
            "classical" | "classical-upwind" => Ok(UpwindMode::Classical),
            other => Err(format!(
                "unknown upwind mode '{other}' (expected paper-exact or classical)"
            )),
        }
    }
}

impl fmt::Display for UpwindMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            UpwindMode::PaperExact => "paper-exact",
            UpwindMode::Classical => "classical",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverParams {
    pub nu: f64,
    pub alpha: f64,
    pub dt: f64,
    /// Steady-state tolerance on the relative vorticity change.
    pub tol: f64,
    pub max_iter: usize,
    pub diffusivity: DiffusivitySpec,
    pub upwind_mode: UpwindMode,
    pub init_mode: InitMode,
    pub linear: LinearSettings,
    /// Re-solve the Poisson problem every this many steps.
    pub poisson_every: usize,
    /// Include the advection term. Off only for diagnostics.
    pub advection: bool,
    /// Use `g = 1` instead of the edge-stopping diffusivity.
    pub isotropic: bool,
}

impl Default for SolverParams {
    fn default() -> Self {
        Self {
            nu: 2.0,
            alpha: 0.0,
            dt: 0.001,
            tol: 1e-4,
            max_iter: 10_000,
            diffusivity: DiffusivitySpec::default(),
            upwind_mode: UpwindMode::PaperExact,
            init_mode: InitMode::MeanOfBand,
            linear: LinearSettings::default(),
            poisson_every: 1,
            advection: true,
            isotropic: false,
        }
    }
}

impl SolverParams {
    pub fn validate(&self) -> Result<(), SolverError> {
        let bad = |m: String| Err(SolverError::InvalidParams(m));
        if !(self.nu > 0.0 && self.nu.is_finite()) {
            return bad(format!("nu must be positive, got {}", self.nu));
        }
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return bad(format!("alpha must be non-negative, got {}", self.alpha));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return bad(format!("dt must be positive, got {}", self.dt));
        }
        if !(self.tol > 0.0) {
            return bad(format!("tol must be positive, got {}", self.tol));
        }
        if self.max_iter == 0 || self.linear.max_iter == 0 || self.poisson_every == 0 {
            return bad("iteration counts must be positive".to_string());
        }
        if !(self.linear.tol > 0.0) {
            return bad(format!("linear tol must be positive, got {}", self.linear.tol));
        }
        Ok(())
    }

    pub fn report_params(&self) -> ReportParams {
        ReportParams {
            alpha: self.alpha,
            nu: self.nu,
            dt: self.dt,
            tol: self.tol,
            max_iter: self.max_iter,
            g: self.diffusivity.kind(),
            k: self.diffusivity.k(),
            upwind: self.upwind_mode,
            init: self.init_mode,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveState {
    pub intensity: ScalarField,
    pub omega: ScalarField,
    pub velocity: VectorField,
    pub iteration: usize,
    pub residual: f64,
}

/// Numbering of the unknown pixels of a region, row by row.
#[derive(Debug, Clone)]
pub struct UnknownMap {
    cells: Vec<(usize, usize)>,
    index: ndarray::Array2<usize>,
}

const KNOWN: usize = usize::MAX;

impl UnknownMap {
    pub fn new(region: &MaskRegion) -> Self {
        let (w, h) = region.box_size();
        let mut index = ndarray::Array2::from_elem((w, h), KNOWN);
        let mut cells = Vec::new();
        for j in 0..h {
            for i in 0..w {
                if region.is_interior(i, j) {
                    index[[i, j]] = cells.len();
                    cells.push((i, j));
                }
            }
        }
        Self { cells, index }
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn cells(&self) -> &[(usize, usize)] {
        &self.cells
    }

    pub fn index(&self, i: usize, j: usize) -> Option<usize> {
        match self.index[[i, j]] {
            KNOWN => None,
            k => Some(k),
        }
    }

    pub fn gather(&self, f: &ScalarField) -> Vec<f64> {
        self.cells.iter().map(|&(i, j)| f.get(i, j)).collect()
    }

    pub fn scatter(&self, x: &[f64], f: &mut ScalarField) {
        for (&(i, j), &v) in self.cells.iter().zip(x) {
            f.set(i, j, v);
        }
    }
}

/// The four neighbours of `(i, j)` with their inverse squared spacing.
fn neighbours(i: usize, j: usize, idx2: f64, idy2: f64) -> [(usize, usize, f64); 4] {
    [
        (i + 1, j, idx2),
        (i - 1, j, idx2),
        (i, j + 1, idy2),
        (i, j - 1, idy2),
    ]
}

fn poisson_system(
    omega: &ScalarField,
    region: &MaskRegion,
    map: &UnknownMap,
) -> (LinearOperator, Vec<f64>) {
    let grid = region.grid();
    let (idx2, idy2) = (1.0 / (grid.dx() * grid.dx()), 1.0 / (grid.dy() * grid.dy()));
    let boundary = region.boundary_values();
    let mut rows = Vec::with_capacity(map.len());
    let mut rhs = Vec::with_capacity(map.len());
    for &(i, j) in map.cells() {
        let p = map.index(i, j).expect("unknown cell");
        let mut row = vec![(p, 2.0 * (idx2 + idy2))];
        let mut b = -omega.get(i, j);
        for (a, c, w) in neighbours(i, j, idx2, idy2) {
            match map.index(a, c) {
                Some(q) => row.push((q, -w)),
                None => b += w * boundary[[a, c]],
            }
        }
        rows.push(row);
        rhs.push(b);
    }
    (LinearOperator::from_rows(rows), rhs)
}

/// Solve `Lap I = w` on the unknown pixels with `I` fixed to the host values
/// on the known ones. `guess` seeds the iteration on unknown pixels.
pub fn solve_poisson(
    omega: &ScalarField,
    region: &MaskRegion,
    guess: &ScalarField,
    settings: &LinearSettings,
) -> Result<ScalarField, SolverError> {
    if omega.grid().shape() != region.box_size() || guess.grid().shape() != region.box_size() {
        return Err(SolverError::StateShape);
    }
    let map = UnknownMap::new(region);
    solve_poisson_mapped(omega, region, &map, guess, settings)
}

fn solve_poisson_mapped(
    omega: &ScalarField,
    region: &MaskRegion,
    map: &UnknownMap,
    guess: &ScalarField,
    settings: &LinearSettings,
) -> Result<ScalarField, SolverError> {
    let (op, rhs) = poisson_system(omega, region, map);
    let mut x = map.gather(guess);
    op.solve(&rhs, &mut x, settings)?;
    let grid = region.grid();
    let boundary = region.boundary_values();
    let mut out = ScalarField::from_fn(grid, |i, j| boundary[[i, j]]);
    map.scatter(&x, &mut out);
    Ok(out)
}

/// Left-hand operator of the vorticity step,
/// `(1 - a^2 Lap_h) - nu dt D_g`, on the unknown pixels. Couplings to known
/// pixels are dropped here and folded into the right-hand side.
pub fn build_step_operator(
    params: &SolverParams,
    g_field: &ScalarField,
    region: &MaskRegion,
) -> LinearOperator {
    build_step_operator_mapped(params, g_field, region, &UnknownMap::new(region), true)
}

/// Coupling `(a^2 + nu dt g_face) / h^2` between two neighbouring pixels;
/// `voigt = false` drops the `a^2` term altogether.
#[inline]
fn coupling(
    params: &SolverParams,
    g_field: &ScalarField,
    p: (usize, usize),
    q: (usize, usize),
    ih2: f64,
    voigt: bool,
) -> f64 {
    let g_face = 0.5 * (g_field.get(p.0, p.1) + g_field.get(q.0, q.1));
    let diffusive = params.nu * params.dt * g_face;
    if voigt {
        (params.alpha * params.alpha + diffusive) * ih2
    } else {
        diffusive * ih2
    }
}

fn build_step_operator_mapped(
    params: &SolverParams,
    g_field: &ScalarField,
    region: &MaskRegion,
    map: &UnknownMap,
    voigt: bool,
) -> LinearOperator {
    let grid = region.grid();
    let (idx2, idy2) = (1.0 / (grid.dx() * grid.dx()), 1.0 / (grid.dy() * grid.dy()));
    let rows = map
        .cells()
        .iter()
        .map(|&(i, j)| {
            let p = map.index(i, j).expect("unknown cell");
            let mut diag = 1.0;
            let mut row = Vec::with_capacity(5);
            for (a, c, ih2) in neighbours(i, j, idx2, idy2) {
                let w = coupling(params, g_field, (i, j), (a, c), ih2, voigt);
                diag += w;
                if let Some(q) = map.index(a, c) {
                    row.push((q, -w));
                }
            }
            row.insert(0, (p, diag));
            row
        })
        .collect();
    LinearOperator::from_rows(rows)
}

/// Reusable per-region data for stepping.
#[derive(Debug, Clone)]
pub struct Stepper {
    region: MaskRegion,
    params: SolverParams,
    map: UnknownMap,
}

impl Stepper {
    pub fn new(region: MaskRegion, params: SolverParams) -> Result<Self, SolverError> {
        params.validate()?;
        let map = UnknownMap::new(&region);
        Ok(Self {
            region,
            params,
            map,
        })
    }

    pub fn region(&self) -> &MaskRegion {
        &self.region
    }

    pub fn params(&self) -> &SolverParams {
        &self.params
    }

    pub fn unknowns(&self) -> &UnknownMap {
        &self.map
    }

    /// State at iteration 0 from a host image.
    pub fn initial_state(&self, host: &GrayImage) -> Result<SolveState, SolverError> {
        let (intensity, omega) = extract_initial_state(host, &self.region, self.params.init_mode)?;
        let velocity = perp_gradient(&intensity);
        Ok(SolveState {
            intensity,
            omega,
            velocity,
            iteration: 0,
            residual: f64::INFINITY,
        })
    }

    /// Edge-stopping diffusivity evaluated on the current vorticity.
    pub fn diffusivity_field(&self, omega: &ScalarField) -> Result<ScalarField, SolverError> {
        if self.params.isotropic {
            return Ok(ScalarField::constant(*omega.grid(), 1.0));
        }
        Ok(self
            .params
            .diffusivity
            .apply(&gradient_magnitude_field(omega))?)
    }

    /// Right-hand side of the vorticity step on the unknown pixels.
    pub fn step_rhs(&self, state: &SolveState, g_field: &ScalarField) -> Result<Vec<f64>, SolverError> {
        self.step_rhs_form(state, g_field, true)
    }

    fn step_rhs_form(
        &self,
        state: &SolveState,
        g_field: &ScalarField,
        voigt: bool,
    ) -> Result<Vec<f64>, SolverError> {
        let p = &self.params;
        let grid = self.region.grid();
        let (idx2, idy2) = (1.0 / (grid.dx() * grid.dx()), 1.0 / (grid.dy() * grid.dy()));
        let a2 = p.alpha * p.alpha;
        let w = state.omega.values();
        let lap = if voigt {
            Some(laplacian(&state.omega)?)
        } else {
            None
        };
        let (u1, u2) = (state.velocity.u1(), state.velocity.u2());
        let mut rhs = Vec::with_capacity(self.map.len());
        for &(i, j) in self.map.cells() {
            let adv = if p.advection {
                advect_at(&grid, w, u1[[i, j]], u2[[i, j]], i, j, p.upwind_mode)
            } else {
                0.0
            };
            let mut b = match &lap {
                Some(lap) => w[[i, j]] - a2 * lap.get(i, j) + p.dt * adv,
                None => w[[i, j]] + p.dt * adv,
            };
            for (a, c, ih2) in neighbours(i, j, idx2, idy2) {
                if self.map.index(a, c).is_none() {
                    b += coupling(p, g_field, (i, j), (a, c), ih2, voigt) * w[[a, c]];
                }
            }
            rhs.push(b);
        }
        Ok(rhs)
    }

    /// Advance one step. With `alpha = 0` the Voigt terms are skipped
    /// entirely (plain Navier-Stokes step).
    pub fn step(&self, state: &SolveState) -> Result<SolveState, SolverError> {
        self.step_form(state, self.params.alpha != 0.0)
    }

    /// Advance one step through the general Voigt form even when
    /// `alpha = 0`.
    pub fn step_voigt_form(&self, state: &SolveState) -> Result<SolveState, SolverError> {
        self.step_form(state, true)
    }

    fn step_form(&self, state: &SolveState, voigt: bool) -> Result<SolveState, SolverError> {
        if state.omega.grid().shape() != self.region.box_size() {
            return Err(SolverError::StateShape);
        }
        if state.omega.find_non_finite().is_some() {
            return Err(SolverError::NonFinite("vorticity"));
        }
        let g_field = self.diffusivity_field(&state.omega)?;
        let op = build_step_operator_mapped(&self.params, &g_field, &self.region, &self.map, voigt);
        let rhs = self.step_rhs_form(state, &g_field, voigt)?;
        if rhs.iter().any(|v| !v.is_finite()) {
            return Err(SolverError::NonFinite("right-hand side"));
        }
        let old = self.map.gather(&state.omega);
        let mut x = old.clone();
        op.solve(&rhs, &mut x, &self.params.linear)?;

        let mut omega = state.omega.clone();
        self.map.scatter(&x, &mut omega);
        let iteration = state.iteration + 1;
        let intensity = if iteration.is_multiple_of(self.params.poisson_every) {
            solve_poisson_mapped(&omega, &self.region, &self.map, &state.intensity, &self.params.linear)?
        } else {
            state.intensity.clone()
        };
        if intensity.find_non_finite().is_some() {
            return Err(SolverError::NonFinite("intensity"));
        }
        let velocity = perp_gradient(&intensity);
        let residual = relative_change(&old, &x);
        Ok(SolveState {
            intensity,
            omega,
            velocity,
            iteration,
            residual,
        })
    }

    /// Iterate from `state` until convergence, divergence or `max_iter`.
    /// `observe` sees every accepted state.
    pub fn run(
        &self,
        mut state: SolveState,
        mut observe: impl FnMut(&SolveState),
    ) -> RunOutcome {
        let mut history = Vec::new();
        let mut note = None;
        let status = loop {
            if state.iteration >= self.params.max_iter {
                break RunStatus::MaxIter;
            }
            match self.step(&state) {
                Ok(next) => {
                    history.push(next.residual);
                    let r = next.residual;
                    if !r.is_finite() || r > DIVERGENCE_RESIDUAL {
                        note = Some(format!("residual {r:e} exceeded divergence threshold"));
                        break RunStatus::Diverged;
                    }
                    state = next;
                    observe(&state);
                    if r < self.params.tol {
                        break RunStatus::Converged;
                    }
                }
                // Non-finite values, failed linear solves and the like all
                // mean the iteration has left the range it can continue in.
                Err(e) => {
                    note = Some(e.to_string());
                    break RunStatus::Diverged;
                }
            }
        };
        RunOutcome {
            status,
            state,
            residual_history: history,
            note,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub status: RunStatus,
    /// Last accepted (finite) state.
    pub state: SolveState,
    pub residual_history: Vec<f64>,
    pub note: Option<String>,
}

/// `|x - old| / max(|old|, 1)` in the Euclidean norm over unknowns.
pub fn relative_change(old: &[f64], new: &[f64]) -> f64 {
    let diff: f64 = old.iter().zip(new).map(|(a, b)| (b - a) * (b - a)).sum();
    let base: f64 = old.iter().map(|a| a * a).sum();
    diff.sqrt() / base.sqrt().max(1.0)
}

/// One step from `state`.
pub fn step(state: &SolveState, params: &SolverParams, region: &MaskRegion) -> Result<SolveState, SolverError> {
    Stepper::new(region.clone(), *params)?.step(state)
}

/// Inpaint `region` of `host` by iterating to a steady state.
pub fn run_to_steady(
    host: &GrayImage,
    region: &MaskRegion,
    params: &SolverParams,
) -> Result<(GrayImage, RunReport), SolverError> {
    let started = Instant::now();
    let stepper = Stepper::new(region.clone(), *params)?;
    let initial = stepper.initial_state(host)?;
    let outcome = stepper.run(initial, |_| {});
    let image = embed_region(host, region, &outcome.state.intensity)?;
    let iterations = outcome.residual_history.len();
    let model = FlopModel::default();
    let report = RunReport {
        status: outcome.status,
        iterations,
        flops_per_pixel: flops_estimate(region.omega_size(), iterations, model),
        flop_model: model,
        residual_history: outcome.residual_history,
        psnr_db: None,
        rmse: None,
        wall_time_s: Some(started.elapsed().as_secs_f64()),
        params: params.report_params(),
        omega_size: region.omega_size(),
        image_dims: host.dims(),
        note: outcome.note,
    };
    Ok((image, report))
}
