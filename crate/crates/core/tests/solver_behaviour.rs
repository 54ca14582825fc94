mod common;

use voight_core::fixtures::{Fixture, HoleSize, DEFAULT_SEED};
use voight_core::solver::relative_change;
use voight_core::*;

fn stripe(hole: HoleSize) -> (Fixture, MaskRegion) {
    let fx = Fixture::new(DEFAULT_SEED, hole);
    let region = fx.region();
    (fx, region)
}

#[test]
fn zero_alpha_general_form_is_bit_identical() {
    let (fx, region) = stripe(HoleSize::Small);
    for mode in [UpwindMode::PaperExact, UpwindMode::Classical] {
        let params = SolverParams {
            alpha: 0.0,
            upwind_mode: mode,
            ..Default::default()
        };
        let stepper = Stepper::new(region.clone(), params).unwrap();
        let mut a = stepper.initial_state(&fx.damaged).unwrap();
        let mut b = a.clone();
        for _ in 0..100 {
            a = stepper.step(&a).unwrap();
            b = stepper.step_voigt_form(&b).unwrap();
            assert_eq!(a, b);
        }
    }
}

#[test]
fn known_pixels_never_change() {
    let (fx, region) = stripe(HoleSize::Wide);
    let params = SolverParams {
        alpha: 0.9,
        dt: 0.1,
        upwind_mode: UpwindMode::Classical,
        ..Default::default()
    };
    let stepper = Stepper::new(region.clone(), params).unwrap();
    let start = stepper.initial_state(&fx.damaged).unwrap();
    let mut s = start.clone();
    for _ in 0..50 {
        s = stepper.step(&s).unwrap();
    }
    let (bw, bh) = region.box_size();
    for j in 0..bh {
        for i in 0..bw {
            if !region.is_interior(i, j) {
                assert_eq!(s.omega.get(i, j).to_bits(), start.omega.get(i, j).to_bits());
                assert_eq!(s.intensity.get(i, j).to_bits(), start.intensity.get(i, j).to_bits());
            }
        }
    }
    let out = embed_region(&fx.damaged, &region, &s.intensity).unwrap();
    let mask = region.host_mask();
    for (k, inside) in mask.iter().enumerate() {
        if !inside {
            assert_eq!(out.pixels()[k], fx.damaged.pixels()[k]);
        }
    }
}

#[test]
fn converged_state_does_not_depend_on_init() {
    let (fx, region) = stripe(HoleSize::Small);
    let mut finals = Vec::new();
    for init in [InitMode::Zero, InitMode::MeanOfBand, InitMode::Harmonic] {
        let params = SolverParams {
            alpha: 0.5,
            dt: 0.01,
            tol: 1e-7,
            upwind_mode: UpwindMode::Classical,
            init_mode: init,
            ..Default::default()
        };
        let stepper = Stepper::new(region.clone(), params).unwrap();
        let out = stepper.run(stepper.initial_state(&fx.damaged).unwrap(), |_| {});
        assert_eq!(out.status, RunStatus::Converged, "{init}");
        finals.push(stepper.unknowns().gather(&out.state.omega));
    }
    for other in &finals[1..] {
        let d = relative_change(&finals[0], other);
        assert!(d < 10.0 * 1e-4, "init dependence {d}");
    }
}

#[test]
fn pure_diffusion_decays_monotonically() {
    let host = GrayImage::from_fn(20, 18, |_, _| 100.0);
    let region = MaskRegion::rectangle(&host, 5, 5, 9, 7, 3).unwrap();
    let params = SolverParams {
        dt: 0.05,
        advection: false,
        isotropic: true,
        init_mode: InitMode::Zero,
        ..Default::default()
    };
    let stepper = Stepper::new(region, params).unwrap();
    let mut s = stepper.initial_state(&host).unwrap();
    let mut last = s.omega.norm_sq();
    assert!(last > 0.0);
    for _ in 0..200 {
        s = stepper.step(&s).unwrap();
        let now = s.omega.norm_sq();
        assert!(now < last);
        last = now;
    }
}

#[test]
fn large_step_without_voigt_term_diverges_as_a_status() {
    let (fx, region) = stripe(HoleSize::Small);
    let params = SolverParams {
        dt: 0.1,
        upwind_mode: UpwindMode::Classical,
        ..Default::default()
    };
    let (img, report) = run_to_steady(&fx.damaged, &region, &params).unwrap();
    assert_eq!(report.status, RunStatus::Diverged);
    assert!(report.note.is_some());
    assert_eq!(img.dims(), fx.damaged.dims());
}

#[test]
fn max_iter_is_reported() {
    let (fx, region) = stripe(HoleSize::Small);
    let params = SolverParams {
        max_iter: 5,
        ..Default::default()
    };
    let (_, report) = run_to_steady(&fx.damaged, &region, &params).unwrap();
    assert_eq!(report.status, RunStatus::MaxIter);
    assert_eq!(report.iterations, 5);
    assert_eq!(report.residual_history.len(), 5);
}

#[test]
fn invalid_parameters_are_rejected() {
    let (_, region) = stripe(HoleSize::Small);
    for bad in [
        SolverParams { nu: 0.0, ..Default::default() },
        SolverParams { alpha: -1.0, ..Default::default() },
        SolverParams { dt: f64::NAN, ..Default::default() },
        SolverParams { max_iter: 0, ..Default::default() },
    ] {
        assert!(Stepper::new(region.clone(), bad).is_err());
    }
}

#[test]
fn restoration_beats_the_damaged_image() {
    let (fx, region) = stripe(HoleSize::Small);
    let params = SolverParams {
        alpha: 0.5,
        dt: 0.1,
        upwind_mode: UpwindMode::Classical,
        ..Default::default()
    };
    let (img, report) = run_to_steady(&fx.damaged, &region, &params).unwrap();
    assert_eq!(report.status, RunStatus::Converged);
    let before = psnr(&fx.original, &fx.damaged).unwrap();
    let after = psnr(&fx.original, &img).unwrap();
    assert!(after > before + 10.0, "{before} -> {after}");
}
