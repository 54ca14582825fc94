//! Acceptance suite: prints one PASS/FAIL line per criterion and fails the
//! target if any criterion fails.

#[path = "../../core/tests/common/oracle.rs"]
mod oracle;

use std::panic::{self, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use voight_core::fixtures::{Fixture, HoleSize, DEFAULT_SEED};
use voight_core::metrics::{psnr, rmse};
use voight_core::solver::{relative_change, LinearMethod, LinearSettings};
use voight_core::stability::*;
use voight_core::*;

type Outcome = Result<String, String>;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn ensure(ok: bool, msg: impl Into<String>) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn tight() -> LinearSettings {
    LinearSettings {
        tol: 1e-14,
        max_iter: 100_000,
        method: LinearMethod::Cg,
    }
}

/// Random host with a `w x h` hole at `(4, 3)` and a band of 3.
fn random_case(seed: u64, w: usize, h: usize) -> (GrayImage, MaskRegion) {
    let mut r = rng(seed);
    let host = GrayImage::from_fn(w + 9, h + 8, |_, _| r.gen_range(0.0..255.0));
    let region = MaskRegion::rectangle(&host, 4, 3, w, h, 3).expect("hole fits");
    (host, region)
}

fn stripe_params(alpha: f64, dt: f64) -> SolverParams {
    SolverParams {
        alpha,
        dt,
        nu: 2.0,
        upwind_mode: UpwindMode::Classical,
        ..SolverParams::default()
    }
}

fn run_stripe(hole: HoleSize, params: &SolverParams) -> Result<(GrayImage, RunReport, f64), String> {
    let fx = Fixture::new(DEFAULT_SEED, hole);
    let start = Instant::now();
    let (img, report) = run_to_steady(&fx.damaged, &fx.region(), params).map_err(|e| e.to_string())?;
    Ok((img, report, start.elapsed().as_secs_f64()))
}

fn c1_poisson_oracle() -> Outcome {
    let start = Instant::now();
    let mut worst = 0.0_f64;
    for w in 4..=12 {
        for h in 4..=12 {
            let (_, region) = random_case((w * 100 + h) as u64, w, h);
            let mut r = rng((w * 7 + h) as u64);
            let omega = ScalarField::from_fn(region.grid(), |_, _| r.gen_range(-30.0..30.0));
            let guess = ScalarField::zeros(region.grid());
            let ours = solve_poisson(&omega, &region, &guess, &tight()).map_err(|e| e.to_string())?;
            let got: Vec<f64> = oracle::unknowns(&region).iter().map(|&(i, j)| ours.get(i, j)).collect();
            worst = worst.max(max_abs_diff(&got, &oracle::dense_poisson(&omega, &region)));
        }
    }
    let secs = start.elapsed().as_secs_f64();
    ensure(worst < 1e-10, format!("max error {worst:e}"))?;
    ensure(secs < 5.0, format!("took {secs:.2} s"))?;
    Ok(format!("81 sizes, max error {worst:.2e}, {secs:.2} s"))
}

fn c2_scheme_oracle() -> Outcome {
    let mut worst = 0.0_f64;
    for alpha in [0.0, 0.5, 1.0] {
        for mode in [UpwindMode::PaperExact, UpwindMode::Classical] {
            let (host, region) = random_case(21, 6, 6);
            let params = SolverParams {
                alpha,
                dt: 0.05,
                upwind_mode: mode,
                linear: tight(),
                ..SolverParams::default()
            };
            let stepper = Stepper::new(region.clone(), params).map_err(|e| e.to_string())?;
            let mut state = stepper.initial_state(&host).map_err(|e| e.to_string())?;
            let mut r = rng(22);
            for (i, j) in oracle::unknowns(&region) {
                state.omega.set(i, j, r.gen_range(-20.0..20.0));
                state.intensity.set(i, j, r.gen_range(0.0..255.0));
            }
            state.velocity = perp_gradient(&state.intensity);
            let next = stepper.step(&state).map_err(|e| e.to_string())?;
            let (w_ref, i_ref) = oracle::dense_step(&state, &region, &params);
            let cells = oracle::unknowns(&region);
            let w: Vec<f64> = cells.iter().map(|&(i, j)| next.omega.get(i, j)).collect();
            let iv: Vec<f64> = cells.iter().map(|&(i, j)| next.intensity.get(i, j)).collect();
            worst = worst.max(max_abs_diff(&w, &w_ref)).max(max_abs_diff(&iv, &i_ref));
        }
    }
    ensure(worst < 1e-10, format!("max error {worst:e}"))?;
    Ok(format!("6x6, 3 alphas x 2 upwind modes, max error {worst:.2e}"))
}

fn c3_alpha_zero() -> Outcome {
    let fx = Fixture::new(DEFAULT_SEED, HoleSize::Small);
    let stepper = Stepper::new(fx.region(), stripe_params(0.0, 0.001)).map_err(|e| e.to_string())?;
    let mut nse = stepper.initial_state(&fx.damaged).map_err(|e| e.to_string())?;
    let mut nsv = nse.clone();
    for n in 0..100 {
        nse = stepper.step(&nse).map_err(|e| e.to_string())?;
        nsv = stepper.step_voigt_form(&nsv).map_err(|e| e.to_string())?;
        ensure(nse == nsv, format!("states differ after step {}", n + 1))?;
    }
    Ok("100 steps bit-identical".into())
}

fn c4_stability_pattern() -> Outcome {
    let cases = [
        (HoleSize::Small, 0.1, 0.0, RunStatus::Diverged),
        (HoleSize::Small, 0.1, 0.5, RunStatus::Converged),
        (HoleSize::Small, 0.001, 0.0, RunStatus::Converged),
        (HoleSize::Wide, 0.1, 0.0, RunStatus::Diverged),
        (HoleSize::Wide, 0.1, 0.9, RunStatus::Converged),
        (HoleSize::Wide, 0.01, 0.0, RunStatus::Converged),
    ];
    let mut parts = Vec::new();
    let mut failures = Vec::new();
    for (hole, dt, alpha, want) in cases {
        let (_, report, secs) = run_stripe(hole, &stripe_params(alpha, dt))?;
        let line = format!(
            "{} dt={dt} a={alpha}: {} ({} it, {secs:.1} s)",
            hole.tag(),
            report.status,
            report.iterations
        );
        if report.status != want || secs >= 30.0 {
            failures.push(format!("{line}, wanted {want} in < 30 s"));
        }
        parts.push(line);
    }
    ensure(failures.is_empty(), failures.join("; "))?;
    Ok(parts.join("; "))
}

fn c5_efficiency() -> Outcome {
    let (_, nse, _) = run_stripe(HoleSize::Small, &stripe_params(0.0, 0.001))?;
    let (nsv_img, nsv, _) = run_stripe(HoleSize::Small, &stripe_params(1.0 / 3.0, 0.001))?;
    let (fine_img, fine, _) = run_stripe(HoleSize::Small, &stripe_params(0.0, 0.0001))?;
    let original = Fixture::new(DEFAULT_SEED, HoleSize::Small).original;
    let p_nsv = psnr(&original, &nsv_img).map_err(|e| e.to_string())?;
    let p_fine = psnr(&original, &fine_img).map_err(|e| e.to_string())?;
    let ratio = nsv.flops_per_pixel / nse.flops_per_pixel;
    let detail = format!(
        "NSE {} it / NSV(1/3) {} it, flops ratio {ratio:.3}; PSNR NSV {p_nsv:.2} dB vs NSE(dt=1e-4, {}) {p_fine:.2} dB",
        nse.iterations, nsv.iterations, fine.status
    );
    let ok = [nse.status, nsv.status].iter().all(|s| *s == RunStatus::Converged)
        && ratio <= 0.7
        && (p_nsv - p_fine).abs() <= 2.0;
    ensure(ok, detail.clone())?;
    Ok(detail)
}

fn c6_steady_state_equivalence() -> Outcome {
    let fx = Fixture::new(DEFAULT_SEED, HoleSize::Small);
    let params = stripe_params(0.5, 0.1);
    let nsv = Stepper::new(fx.region(), params).map_err(|e| e.to_string())?;
    let outcome = nsv.run(nsv.initial_state(&fx.damaged).map_err(|e| e.to_string())?, |_| {});
    ensure(outcome.status == RunStatus::Converged, format!("NSV run {}", outcome.status))?;
    let nse = Stepper::new(fx.region(), SolverParams { alpha: 0.0, ..params }).map_err(|e| e.to_string())?;
    let next = nse.step(&outcome.state).map_err(|e| e.to_string())?;
    let cells = nse.unknowns();
    let r = relative_change(&cells.gather(&outcome.state.omega), &cells.gather(&next.omega));
    ensure(r < 10.0 * params.tol, format!("NSE one-step residual {r:e}"))?;
    Ok(format!(
        "NSV residual {:.2e}, NSE one-step residual {r:.2e} < {:.0e}",
        outcome.state.residual,
        10.0 * params.tol
    ))
}

fn c7_metrics() -> Outcome {
    let a = GrayImage::from_fn(16, 9, |x, y| ((x * 13 + y * 7) % 250) as f64);
    let b = GrayImage::from_fn(16, 9, |x, y| a.get(x, y) + 1.0);
    let p = psnr(&a, &b).map_err(|e| e.to_string())?;
    ensure((p - 48.1308).abs() <= 1e-4, format!("unit offset psnr {p}"))?;
    let mut r = rng(7);
    let c = GrayImage::from_fn(16, 9, |_, _| r.gen_range(0.0..255.0));
    let (ac, ca) = (rmse(&a, &c).map_err(|e| e.to_string())?, rmse(&c, &a).map_err(|e| e.to_string())?);
    ensure(ac == ca, "rmse is not symmetric")?;
    let same = psnr(&a, &a).map_err(|e| e.to_string())?;
    let text = voight_core::metrics::format_float(same);
    ensure(same == f64::INFINITY && text == "inf", format!("identical images give {text}"))?;
    Ok(format!("unit offset {p:.4} dB, rmse symmetric, identical -> {text}"))
}

fn random_lemma_inputs(r: &mut impl Rng) -> LemmaInputs {
    let horizon = r.gen_range(0.1..10.0);
    let mut inp = LemmaInputs::new(
        horizon * 10f64.powf(r.gen_range(-9.0..-1.0)),
        (r.gen_range(0.05..2.0), r.gen_range(0.05..2.0)),
        r.gen_range(0.1..5.0),
        r.gen_range(0.01..0.99),
        horizon,
    );
    inp.alpha = r.gen_range(0.0..2.0);
    inp.u0_l2 = r.gen_range(0.0..5.0);
    inp.u0_h1 = r.gen_range(0.0..5.0);
    inp.f_energy = r.gen_range(0.0..3.0);
    inp.d0 = r.gen_range(0.5..2.0);
    inp.d1 = r.gen_range(0.5..2.0);
    inp.d2 = r.gen_range(0.5..2.0);
    inp
}

fn rel_eq(a: f64, b: f64) -> bool {
    a == b || (a - b).abs() <= 1e-12 * a.abs().max(b.abs())
}

fn compare_conditions(report: &ConditionReport, want: &[(f64, f64)]) -> Result<(), String> {
    ensure(report.conditions.len() == want.len(), format!("{}: condition count", report.scheme))?;
    for (c, &(l, rhs)) in report.conditions.iter().zip(want) {
        ensure(rel_eq(c.lhs, l) && rel_eq(c.rhs, rhs), format!("{}: {c:?} vs {l} <= {rhs}", report.scheme))?;
    }
    ensure(
        report.verdict == want.iter().all(|(l, rhs)| l <= rhs),
        format!("{}: verdict", report.scheme),
    )
}

fn c8_constants() -> Outcome {
    let grid = Grid2D::new(4, 4, 1.0, 1.0, BoundaryKind::Periodic).map_err(|e| e.to_string())?;
    let s = stability_constant(&grid);
    ensure(s == 8f64.sqrt(), format!("S(1,1) = {s}"))?;
    let mut r = rng(8);
    for _ in 0..50 {
        let p = random_lemma_inputs(&mut r);
        let s2 = 4.0 * (1.0 / (p.h.0 * p.h.0) + 1.0 / (p.h.1 * p.h.1));
        let s1 = p.d1 * s2;
        let (f, d0sq) = (p.f_energy, p.d0 * p.d0);
        let d5 = p.u0_h1.powi(2) + d0sq * ((d0sq + 1.0 - p.delta) / (p.nu * d0sq)) * f;
        let d6 = p.u0_l2.powi(2) + p.alpha.powi(2) * p.u0_h1.powi(2) + (d0sq / p.nu + 4.0 * p.horizon) * f;
        let d10 = p.u0_h1.powi(2) + d0sq / p.nu * f;
        let lambda = d10 + 2.0 * p.k * p.k * s1 * s1 * s2 * p.u0_l2.powi(2) * p.u0_h1.powi(2);
        let k_i = (p.k * s2, (1.0 - p.delta) / (4.0 * p.nu));
        compare_conditions(
            &check_nse_explicit(&p).map_err(|e| e.to_string())?,
            &[k_i, (p.k * s2, 1.0), (p.k * s1 * s1 * s2, p.nu * p.delta / (8.0 * d0sq * d5))],
        )?;
        compare_conditions(
            &check_nsv(&p).map_err(|e| e.to_string())?,
            &[k_i, (p.k * s1 * s1, p.nu * p.delta / (8.0 * d6))],
        )?;
        let si = check_nse_semiimplicit(&p).map_err(|e| e.to_string())?;
        let (dp, dd) = semi_implicit_constants(&p);
        compare_conditions(
            &si,
            &[
                (p.k * s2 * s2, dp),
                (p.k * s1 * s1 * s2, dd),
                (2.0 * p.k * p.d0 * p.d2 * s1 * s1 * s2 * lambda, p.nu - p.delta),
            ],
        )?;
        ensure(rel_eq(si.constant("lambda_N").unwrap_or(f64::NAN), lambda), "lambda_N")?;
    }
    Ok("S(1,1) = sqrt 8; 3 checkers x 50 tuples match".into())
}

fn c9_admissible_ordering() -> Outcome {
    let mut r = rng(10);
    let mut wins = 0;
    let mut worst = f64::INFINITY;
    for _ in 0..100 {
        let mut p = LemmaInputs::new(1e-6, (1.0, 1.0), r.gen_range(0.1..2.0), r.gen_range(0.05..0.95), 1.0);
        p.u0_h1 = r.gen_range(1.0..50.0f64).sqrt();
        p.u0_l2 = p.u0_h1 * r.gen_range(0.0..1.0);
        p.alpha = r.gen_range(0.0..1.0);
        ensure(p.s_sq() == 8.0, "S^2 != 8")?;
        let nse = max_admissible_k(LemmaScheme::NseExplicit, &p).map_err(|e| e.to_string())?;
        let nsv = max_admissible_k(LemmaScheme::Nsv, &p).map_err(|e| e.to_string())?;
        worst = worst.min(nsv / nse);
        if nsv > nse {
            wins += 1;
        }
    }
    ensure(wins == 100, format!("{wins}/100 strict, worst ratio {worst:.3}"))?;
    Ok(format!("100/100, smallest max-k ratio NSV/NSE {worst:.3}"))
}

fn c10_energy_audit() -> Outcome {
    let start = Instant::now();
    let problem = AuditProblem::default();
    let mut r = rng(11);
    let steps = 500;
    for n in 0..20 {
        let (nu, alpha, delta) = (r.gen_range(0.2..2.0), r.gen_range(0.0..1.5), r.gen_range(0.1..0.9));
        let probe = problem.lemma_inputs(1.0, nu, alpha, delta, steps).map_err(|e| e.to_string())?;
        let k = 0.9 * max_admissible_k(LemmaScheme::Nsv, &probe).map_err(|e| e.to_string())?;
        let inp = problem.lemma_inputs(k, nu, alpha, delta, steps).map_err(|e| e.to_string())?;
        let trace = run_energy_audit(LemmaScheme::Nsv, &problem, &inp, steps).map_err(|e| e.to_string())?;
        ensure(trace.certified, format!("set {n} not certified"))?;
        ensure(
            trace.bounds_hold() && trace.records.len() == steps + 1,
            format!("set {n} (nu {nu}, alpha {alpha}, delta {delta}): {}", trace.summary()),
        )?;
    }
    let secs = start.elapsed().as_secs_f64();
    ensure(secs < 60.0, format!("took {secs:.1} s"))?;
    Ok(format!("20 sets x {steps} steps, all bounds hold, {secs:.1} s"))
}

fn voight(args: &[&str], dir: &Path, threads: &str) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_voight"))
        .args(args)
        .current_dir(dir)
        .env("VOIGHT_THREADS", threads)
        .output()
        .map_err(|e| e.to_string())?;
    ensure(
        out.status.success(),
        format!("voight {args:?}: {}", String::from_utf8_lossy(&out.stderr)),
    )
}

fn c11_determinism() -> Outcome {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let dir = tmp.path();
    voight(&["make-fixtures", "--seed", "42", "--out-dir", "fx"], dir, "1")?;
    let mut outputs = Vec::new();
    for (run, threads) in [(0, "1"), (1, "4")] {
        let csv = format!("run{run}.csv");
        let json = format!("run{run}.json");
        voight(
            &[
                "compare", "--image", "fx/stripes_10x10.pgm", "--mask", "fx/mask_10x10.pgm",
                "--reference", "fx/stripes.pgm", "--upwind", "classical", "--alphas", "0,1/3,1",
                "--dts", "0.1,0.01", "--csv", &csv, "--report", &json,
            ],
            dir,
            threads,
        )?;
        let read = |f: &str| std::fs::read(dir.join(f)).map_err(|e| e.to_string());
        outputs.push((read(&csv)?, read(&json)?));
    }
    ensure(outputs[0] == outputs[1], "outputs differ between runs")?;
    Ok(format!(
        "CSV ({} B) and JSON ({} B) byte-identical across runs and thread counts",
        outputs[0].0.len(),
        outputs[0].1.len()
    ))
}

fn main() {
    type Criterion = (&'static str, fn() -> Outcome);
    let criteria: [Criterion; 11] = [
        ("Poisson oracle", c1_poisson_oracle),
        ("scheme oracle", c2_scheme_oracle),
        ("alpha=0 degeneration", c3_alpha_zero),
        ("stability pattern", c4_stability_pattern),
        ("efficiency ordering", c5_efficiency),
        ("steady-state equivalence", c6_steady_state_equivalence),
        ("metric exactness", c7_metrics),
        ("stability constants", c8_constants),
        ("admissible-step ordering", c9_admissible_ordering),
        ("energy audit", c10_energy_audit),
        ("determinism", c11_determinism),
    ];
    panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (n, (name, f)) in criteria.iter().enumerate() {
        let result = panic::catch_unwind(AssertUnwindSafe(f))
            .unwrap_or_else(|e| Err(format!("panicked: {:?}", e.downcast_ref::<String>())));
        match result {
            Ok(detail) => println!("criterion {:>2} PASS  {name}: {detail}", n + 1),
            Err(detail) => {
                failed += 1;
                println!("criterion {:>2} FAIL  {name}: {detail}", n + 1);
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
