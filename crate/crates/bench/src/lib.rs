//! Shared setup for the solver benchmarks.

use voight_core::fixtures::{Fixture, HoleSize, DEFAULT_SEED};
use voight_core::solver::{SolveState, SolverParams, Stepper};
use voight_core::UpwindMode;

/// A stepper on the default stripe fixture together with its initial state.
pub fn stepper(hole: HoleSize, alpha: f64, dt: f64) -> (Fixture, Stepper, SolveState) {
    let fx = Fixture::new(DEFAULT_SEED, hole);
    let params = SolverParams {
        alpha,
        dt,
        upwind_mode: UpwindMode::Classical,
        ..SolverParams::default()
    };
    let stepper = Stepper::new(fx.region(), params).expect("valid benchmark parameters");
    let state = stepper
        .initial_state(&fx.damaged)
        .expect("fixture initial state");
    (fx, stepper, state)
}
