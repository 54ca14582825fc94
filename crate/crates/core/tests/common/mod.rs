#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use voight_core::*;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random host with a `w x h` rectangular hole at offset `(4, 3)`.
pub fn random_case(seed: u64, w: usize, h: usize) -> (GrayImage, MaskRegion) {
    let mut r = rng(seed);
    let host = GrayImage::from_fn(w + 9, h + 8, |_, _| r.gen_range(0.0..255.0));
    let region = MaskRegion::rectangle(&host, 4, 3, w, h, 3).unwrap();
    (host, region)
}

/// State with random interior vorticity and intensity; band values come from
/// the host.
pub fn random_state(seed: u64, host: &GrayImage, region: &MaskRegion, params: &SolverParams) -> SolveState {
    let stepper = Stepper::new(region.clone(), *params).unwrap();
    let mut state = stepper.initial_state(host).unwrap();
    let mut r = rng(seed ^ 0x5eed);
    let (bw, bh) = region.box_size();
    for j in 0..bh {
        for i in 0..bw {
            if region.is_interior(i, j) {
                state.omega.set(i, j, r.gen_range(-20.0..20.0));
                state.intensity.set(i, j, r.gen_range(0.0..255.0));
            }
        }
    }
    state.velocity = perp_gradient(&state.intensity);
    state
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}
