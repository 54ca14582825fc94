use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde_json::{json, Value};
use voight_core::fixtures;
use voight_core::imageio::{load_mask, read_pgm, write_pgm, GrayImage, MaskRegion};
use voight_core::metrics::{num, psnr_from_rmse, rmse, rmse_masked, summarize_sweep, RunReport, RunStatus};
use voight_core::solver::{run_to_steady, SolverParams};
use voight_core::stability::{
    check, max_admissible_k, run_energy_audit, AuditProblem, LemmaInputs, LemmaScheme,
};

use crate::error::CliError;
use crate::{
    AuditArgs, FixtureArgs, GridArgs, InpaintArgs, InputArgs, PsnrScope, EXIT_DIVERGED,
    EXIT_MAX_ITER,
};

/// Worker-count override for the parameter grids.
const THREADS_ENV: &str = "VOIGHT_THREADS";

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<(), CliError> {
    fs::write(path, contents).map_err(|source| CliError::Io {
        path: path.display().to_string(),
        source,
    })
}

fn pretty(v: &Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("json values serialize");
    s.push('\n');
    s
}

struct Problem {
    host: GrayImage,
    region: MaskRegion,
    reference: Option<GrayImage>,
    scope: PsnrScope,
}

impl Problem {
    fn load(input: &InputArgs, band: usize) -> Result<Self, CliError> {
        let host = read_pgm(&input.image)?;
        let region = load_mask(&input.mask, &host, band)?;
        let reference = input.reference.as_ref().map(read_pgm).transpose()?;
        Ok(Self {
            host,
            region,
            reference,
            scope: input.psnr_scope,
        })
    }

    fn solve(&self, params: &SolverParams, timing: bool) -> Result<(GrayImage, RunReport), CliError> {
        let (image, mut report) = run_to_steady(&self.host, &self.region, params)?;
        if !timing {
            report.wall_time_s = None;
        }
        let report = match &self.reference {
            Some(reference) => {
                let err = match self.scope {
                    PsnrScope::Full => rmse(reference, &image)?,
                    PsnrScope::Region => rmse_masked(reference, &image, &self.region.host_mask())?,
                };
                report.with_quality(err)
            }
            None => report,
        };
        Ok((image, report))
    }
}

fn exit_code(status: RunStatus) -> u8 {
    match status {
        RunStatus::Converged => 0,
        RunStatus::Diverged => EXIT_DIVERGED,
        RunStatus::MaxIter => EXIT_MAX_ITER,
    }
}

pub fn inpaint(a: &InpaintArgs) -> Result<u8, CliError> {
    let params = a.solver.params(a.alpha, a.solver.dt, a.solver.nu)?;
    let problem = Problem::load(&a.input, a.solver.band)?;
    let (image, report) = problem.solve(&params, a.timing)?;
    write_pgm(&image, &a.out)?;
    if let Some(path) = &a.report {
        write_file(path, pretty(&report.to_json(true)))?;
    }
    let psnr = report
        .psnr_db
        .map(|p| format!(", psnr {p:.4} dB"))
        .unwrap_or_default();
    println!(
        "{}: {} iterations, residual {:.3e}{psnr}",
        report.status,
        report.iterations,
        report.residual_final()
    );
    Ok(exit_code(report.status))
}

fn pool() -> Result<rayon::ThreadPool, CliError> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Ok(v) = std::env::var(THREADS_ENV) {
        let n: usize = v
            .parse()
            .map_err(|_| CliError::Invalid(format!("{THREADS_ENV} must be a count, got '{v}'")))?;
        builder = builder.num_threads(n);
    }
    builder
        .build()
        .map_err(|e| CliError::Invalid(format!("thread pool: {e}")))
}

/// `compare` (reference required) and `sweep` over alpha x dt x nu. Runs are
/// independent and collected in grid order, so output does not depend on the
/// thread count.
pub fn grid(a: &GridArgs, need_reference: bool) -> Result<u8, CliError> {
    if need_reference && a.input.reference.is_none() {
        return Err(CliError::Invalid("compare needs --reference".into()));
    }
    if a.alphas.is_empty() || a.dts.is_empty() {
        return Err(CliError::Invalid("--alphas and --dts must not be empty".into()));
    }
    let nus = if a.nus.is_empty() { vec![a.solver.nu] } else { a.nus.clone() };
    let mut cases = Vec::new();
    for &nu in &nus {
        for &dt in &a.dts {
            for &alpha in &a.alphas {
                cases.push(a.solver.params(alpha, dt, nu)?);
            }
        }
    }
    let problem = Problem::load(&a.input, a.solver.band)?;
    let reports = pool()?.install(|| {
        cases
            .par_iter()
            .map(|p| problem.solve(p, a.timing).map(|(_, r)| r))
            .collect::<Result<Vec<_>, _>>()
    })?;
    let table = summarize_sweep(&reports)?;
    match &a.csv {
        Some(path) => write_file(path, &table)?,
        None => print!("{table}"),
    }
    if let Some(path) = &a.report {
        let all: Vec<Value> = reports.iter().map(|r| r.to_json(false)).collect();
        write_file(path, pretty(&Value::Array(all)))?;
    }
    if a.csv.is_some() {
        for r in &reports {
            let psnr = r.psnr_db.map(|p| format!(" psnr {p:.4} dB")).unwrap_or_default();
            println!(
                "alpha {:.4} dt {} nu {}: {} after {} iterations{psnr}",
                r.params.alpha, r.params.dt, r.params.nu, r.status, r.iterations
            );
        }
    }
    Ok(0)
}

fn audit_inputs(a: &AuditArgs, problem: &AuditProblem, k: f64) -> Result<LemmaInputs, CliError> {
    let mut inp = problem.lemma_inputs(k, a.nu, a.alpha, a.delta, a.steps)?;
    if let Some(d0) = a.d0 {
        inp.d0 = d0;
    }
    inp.d2 = a.d2.unwrap_or(inp.d0);
    inp.d1 = a.d1;
    inp.d_prime = a.d_prime;
    inp.d_dprime = a.d_dprime;
    Ok(inp)
}

/// 0.9 x the largest certified step. The forcing energy grows with the
/// horizon `steps k`, so the step is found by a short fixed-point iteration.
fn default_step(a: &AuditArgs, problem: &AuditProblem, scheme: LemmaScheme) -> Result<f64, CliError> {
    let mut k = 1.0;
    for _ in 0..50 {
        let kmax = max_admissible_k(scheme, &audit_inputs(a, problem, k)?)?;
        if !kmax.is_finite() {
            return Err(CliError::Invalid(format!(
                "{scheme}: no condition limits the step; pass --k"
            )));
        }
        if kmax <= 0.0 {
            return Err(CliError::Invalid(format!(
                "{scheme}: no positive step satisfies the conditions; pass --k to audit anyway"
            )));
        }
        let next = 0.9 * kmax;
        if (next - k).abs() <= 1e-12 * k {
            return Ok(next);
        }
        k = next;
    }
    Ok(k)
}

pub fn stability_audit(a: &AuditArgs) -> Result<u8, CliError> {
    let problem = AuditProblem {
        n: a.n,
        length: a.length,
        amplitude: a.amplitude,
        forcing: a.forcing,
    };
    if a.steps == 0 {
        return Err(CliError::Invalid("--steps must be positive".into()));
    }
    let mut entries = Vec::new();
    let mut csv = String::new();
    let mut ok = true;
    for scheme in a.scheme.schemes() {
        let k = match a.k {
            Some(k) => k,
            None => default_step(a, &problem, scheme)?,
        };
        let inp = audit_inputs(a, &problem, k)?;
        let report = check(scheme, &inp)?;
        let trace = run_energy_audit(scheme, &problem, &inp, a.steps)?;
        if trace.certified && !trace.bounds_hold() {
            ok = false;
        }
        println!(
            "{scheme}: k = {k:.6e}, max admissible k = {:.6e}, {}",
            max_admissible_k(scheme, &inp)?,
            trace.summary()
        );
        for c in &report.conditions {
            println!(
                "  {} {}: {:.6e} <= {:.6e}",
                if c.holds { "ok  " } else { "FAIL" },
                c.name,
                c.lhs,
                c.rhs
            );
        }
        for b in &trace.bounds {
            println!(
                "  {} {}: worst {:.6e} vs {:.6e}",
                if b.holds { "ok  " } else { "FAIL" },
                b.name,
                b.worst_value,
                b.bound
            );
        }
        entries.push(json!({
            "scheme": scheme.to_string(),
            "k": num(k),
            "conditions": report.to_json(),
            "audit": trace.to_json(),
        }));
        for (n, line) in trace.to_csv().lines().enumerate() {
            if n == 0 {
                if csv.is_empty() {
                    csv.push_str(&format!("scheme,{line}\n"));
                }
            } else {
                csv.push_str(&format!("{scheme},{line}\n"));
            }
        }
    }
    if let Some(path) = &a.report {
        write_file(path, pretty(&json!({ "problem": problem, "schemes": entries })))?;
    }
    if let Some(path) = &a.csv {
        write_file(path, csv)?;
    }
    Ok(if ok { 0 } else { EXIT_DIVERGED })
}

pub fn make_fixtures(a: &FixtureArgs) -> Result<u8, CliError> {
    let paths = fixtures::make_fixtures(a.seed, &a.out_dir)?;
    let original = read_pgm(&paths.original)?;
    println!("{}", paths.original.display());
    for (tag, img, mask) in &paths.cases {
        let damaged = read_pgm(img)?;
        println!(
            "{tag}: {} {} (damaged psnr {:.2} dB)",
            img.display(),
            mask.display(),
            psnr_from_rmse(rmse(&original, &damaged)?)
        );
    }
    Ok(0)
}
