//! Image inpainting by steady vorticity transport.
//!
//! The intensity of a gray image plays the role of a stream function. The
//! damaged region is filled by evolving the vorticity `w = Lap I` under
//! advection along isophotes plus edge-stopping diffusion until it stops
//! changing, optionally with the Voigt term `-a^2 Lap w_t` that lets much
//! larger time steps remain stable.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod diffusivity;
pub mod fixtures;
pub mod grid;
pub mod imageio;
pub mod metrics;
pub mod solver;
pub mod stability;

pub use diffusivity::{g_eval, gradient_magnitude_field, DiffusivityKind, DiffusivitySpec};
pub use grid::{
    aniso_divergence, laplacian, perp_gradient, stability_constant, upwind_advect, BoundaryKind,
    Grid2D, ScalarField, UpwindMode, VectorField,
};
pub use imageio::{
    embed_region, extract_initial_state, load_mask, read_pgm, write_pgm, GrayImage, InitMode,
    MaskRegion,
};
pub use metrics::{flops_estimate, psnr, rmse, summarize_sweep, RunReport, RunStatus};
pub use solver::{run_to_steady, solve_poisson, SolveState, SolverParams, Stepper};
