//! `voight`: inpaint gray images by steady NSE/NSV vorticity transport,
//! compare the two models, sweep parameters and audit step-size conditions.
//!
//! Exit codes: 0 success (inpaint: converged), 1 usage, I/O or validation
//! error, 2 diverged run or failed certified audit, 3 run stopped at
//! `--max-iter`.

mod commands;
mod config;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use voight_core::diffusivity::{DiffusivityKind, DiffusivitySpec};
use voight_core::imageio::{InitMode, DEFAULT_BAND_WIDTH};
use voight_core::solver::{LinearMethod, LinearSettings, SolverParams};
use voight_core::stability::LemmaScheme;
use voight_core::UpwindMode;

use crate::error::CliError;

pub const EXIT_ERROR: u8 = 1;
pub const EXIT_DIVERGED: u8 = 2;
pub const EXIT_MAX_ITER: u8 = 3;

#[derive(Debug, Parser)]
#[command(name = "voight", version, about = "Fluid-dynamics image inpainting (NSE / NSV)")]
#[command(args_override_self = true)]
struct Cli {
    /// Flat key=value file with default flag values; explicit flags override it.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Inpaint one image and write the result plus a JSON report.
    Inpaint(InpaintArgs),
    /// Run NSE and NSV over alpha x dt against a reference (table of cost and PSNR).
    Compare(GridArgs),
    /// Run an alpha x dt x nu grid; the reference is optional.
    Sweep(GridArgs),
    /// Check the step-size conditions and audit the energy bounds.
    StabilityAudit(AuditArgs),
    /// Write the synthetic stripe fixtures.
    MakeFixtures(FixtureArgs),
}

/// Parse a real, also accepting fractions such as `1/3`.
fn real(s: &str) -> Result<f64, String> {
    let parse = |t: &str| t.trim().parse::<f64>().map_err(|e| format!("'{t}': {e}"));
    match s.split_once('/') {
        Some((a, b)) => Ok(parse(a)? / parse(b)?),
        None => parse(s),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PsnrScope {
    Full,
    Region,
}

#[derive(Debug, Clone, Args)]
pub struct InputArgs {
    /// Damaged image (PGM).
    #[arg(long)]
    pub image: PathBuf,
    /// Mask image (PGM, >= 128 marks pixels to inpaint).
    #[arg(long)]
    pub mask: PathBuf,
    /// Undamaged image for PSNR/RMSE.
    #[arg(long)]
    pub reference: Option<PathBuf>,
    /// Pixels counted in PSNR/RMSE.
    #[arg(long, value_enum, default_value_t = PsnrScope::Full)]
    pub psnr_scope: PsnrScope,
}

#[derive(Debug, Clone, Args)]
pub struct SolverArgs {
    #[arg(long, default_value_t = 2.0, value_parser = real)]
    pub nu: f64,
    #[arg(long, default_value_t = 0.001, value_parser = real)]
    pub dt: f64,
    /// Steady-state tolerance on the relative vorticity change.
    #[arg(long, default_value_t = 1e-4, value_parser = real)]
    pub tol: f64,
    #[arg(long, default_value_t = 10_000)]
    pub max_iter: usize,
    /// Diffusivity: rational2, exp or rational.
    #[arg(long, default_value = "rational2")]
    pub g: DiffusivityKind,
    #[arg(long, default_value_t = 5.0, value_parser = real)]
    pub k: f64,
    /// Known-pixel band width around the hole.
    #[arg(long, default_value_t = DEFAULT_BAND_WIDTH)]
    pub band: usize,
    /// Initial fill: zero, mean-of-band or harmonic.
    #[arg(long, default_value = "mean-of-band")]
    pub init: InitMode,
    /// Advected-neighbour convention: paper-exact or classical.
    #[arg(long, default_value = "paper-exact")]
    pub upwind: UpwindMode,
    #[arg(long, default_value_t = 1e-8, value_parser = real)]
    pub linear_tol: f64,
    #[arg(long, default_value_t = 10_000)]
    pub linear_max_iter: usize,
    /// Re-solve the Poisson problem every N steps.
    #[arg(long, default_value_t = 1)]
    pub poisson_every: usize,
}

impl SolverArgs {
    pub fn params(&self, alpha: f64, dt: f64, nu: f64) -> Result<SolverParams, CliError> {
        let diffusivity = DiffusivitySpec::new(self.g, self.k)
            .map_err(|e| CliError::Invalid(e.to_string()))?;
        let params = SolverParams {
            nu,
            alpha,
            dt,
            tol: self.tol,
            max_iter: self.max_iter,
            diffusivity,
            upwind_mode: self.upwind,
            init_mode: self.init,
            linear: LinearSettings {
                tol: self.linear_tol,
                max_iter: self.linear_max_iter,
                method: LinearMethod::Cg,
            },
            poisson_every: self.poisson_every,
            ..SolverParams::default()
        };
        params.validate()?;
        Ok(params)
    }
}

#[derive(Debug, Clone, Args)]
pub struct InpaintArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub solver: SolverArgs,
    #[arg(long, default_value_t = 0.0, value_parser = real)]
    pub alpha: f64,
    /// Output image (PGM).
    #[arg(long)]
    pub out: PathBuf,
    /// JSON report path.
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// Record wall-clock time in reports (makes them non-reproducible).
    #[arg(long)]
    pub timing: bool,
}

#[derive(Debug, Clone, Args)]
pub struct GridArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub solver: SolverArgs,
    /// Comma-separated alpha values (fractions like 1/3 allowed).
    #[arg(long, value_delimiter = ',', value_parser = real, default_value = "0,1/3,2/3,1,4/3")]
    pub alphas: Vec<f64>,
    /// Comma-separated time steps.
    #[arg(long, value_delimiter = ',', value_parser = real, default_value = "0.001,0.0001")]
    pub dts: Vec<f64>,
    /// Comma-separated viscosities (defaults to --nu).
    #[arg(long, value_delimiter = ',', value_parser = real)]
    pub nus: Vec<f64>,
    /// CSV output path (stdout when omitted).
    #[arg(long)]
    pub csv: Option<PathBuf>,
    /// JSON array of the individual run reports.
    #[arg(long)]
    pub report: Option<PathBuf>,
    #[arg(long)]
    pub timing: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum AuditScheme {
    All,
    NseExplicit,
    Nsv,
    NseSemiimplicit,
}

impl AuditScheme {
    pub fn schemes(self) -> Vec<LemmaScheme> {
        match self {
            Self::All => LemmaScheme::ALL.to_vec(),
            Self::NseExplicit => vec![LemmaScheme::NseExplicit],
            Self::Nsv => vec![LemmaScheme::Nsv],
            Self::NseSemiimplicit => vec![LemmaScheme::NseSemiImplicit],
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct AuditArgs {
    #[arg(long, value_enum, default_value_t = AuditScheme::All)]
    pub scheme: AuditScheme,
    /// Time step; defaults to 0.9 x the largest step each scheme's checker certifies.
    #[arg(long, value_parser = real)]
    pub k: Option<f64>,
    #[arg(long, default_value_t = 1.0, value_parser = real)]
    pub nu: f64,
    #[arg(long, default_value_t = 0.0, value_parser = real)]
    pub alpha: f64,
    #[arg(long, default_value_t = 0.5, value_parser = real)]
    pub delta: f64,
    #[arg(long, default_value_t = 500)]
    pub steps: usize,
    /// Grid points per side of the periodic box.
    #[arg(long, default_value_t = 16)]
    pub n: usize,
    /// Box side is 2 pi L.
    #[arg(long, default_value_t = 1.0, value_parser = real)]
    pub length: f64,
    /// Taylor-Green amplitude of the initial velocity.
    #[arg(long, default_value_t = 1.0, value_parser = real)]
    pub amplitude: f64,
    /// Amplitude of a steady Taylor-Green forcing.
    #[arg(long, default_value_t = 0.0, value_parser = real)]
    pub forcing: f64,
    /// Poincare constant (defaults to L).
    #[arg(long, value_parser = real)]
    pub d0: Option<f64>,
    #[arg(long, default_value_t = 1.0, value_parser = real)]
    pub d1: f64,
    /// Defaults to d0.
    #[arg(long, value_parser = real)]
    pub d2: Option<f64>,
    #[arg(long, value_parser = real)]
    pub d_prime: Option<f64>,
    #[arg(long, value_parser = real)]
    pub d_dprime: Option<f64>,
    /// JSON with condition reports and audit outcomes.
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// CSV of per-step norms.
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct FixtureArgs {
    #[arg(long, default_value_t = voight_core::fixtures::DEFAULT_SEED)]
    pub seed: u64,
    #[arg(long, default_value = "fixtures")]
    pub out_dir: PathBuf,
}

fn main() -> ExitCode {
    let args: Vec<String> = std::env::args().collect();
    let args = match config::expand_config(args) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_ERROR);
        }
    };
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_ERROR } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Inpaint(a) => commands::inpaint(&a),
        Command::Compare(a) => commands::grid(&a, true),
        Command::Sweep(a) => commands::grid(&a, false),
        Command::StabilityAudit(a) => commands::stability_audit(&a),
        Command::MakeFixtures(a) => commands::make_fixtures(&a),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_ERROR)
        }
    }
}
