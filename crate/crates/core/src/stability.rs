//! Sufficient time-step conditions for the explicit NSE, the NSV and the
//! semi-implicit NSE schemes, and an empirical audit of the energy bounds
//! those conditions guarantee, run on a small periodic box.
//!
//! Notation: `k` is the time step, `S(h)` the inverse-inequality constant of
//! the grid, `S1(h) = d1 S(h)^2`, `|.|` the discrete L2 norm, `||.||` the
//! discrete H1 seminorm and `A = -Lap_h`.

use std::fmt;
use std::str::FromStr;

use ndarray::Array2;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::grid::{
    divergence, gradient, laplacian, BoundaryKind, Grid2D, GridError, ScalarField, VectorField,
};
use crate::metrics::num;
use crate::solver::{conjugate_gradient, LinearError, LinearOperator};

/// Relative slack when comparing the two sides of a condition, so that a
/// condition constructed to hold with equality is not lost to rounding.
const COMPARE_SLACK: f64 = 4.0 * f64::EPSILON;
/// Norm level treated as blow-up in the audit.
const BLOW_UP: f64 = 1e100;
/// Safety factor applied when back-solving the semi-implicit constants.
const SEMI_IMPLICIT_MARGIN: f64 = 10.0;

#[derive(Debug, Error, PartialEq)]
pub enum StabilityError {
    #[error("invalid lemma input: {0}")]
    InvalidInput(String),
    #[error("unknown scheme '{0}' (expected nse-explicit, nsv or nse-semiimplicit)")]
    UnknownScheme(String),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Linear(#[from] LinearError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LemmaScheme {
    NseExplicit,
    Nsv,
    NseSemiImplicit,
}

impl LemmaScheme {
    pub const ALL: [LemmaScheme; 3] = [Self::NseExplicit, Self::Nsv, Self::NseSemiImplicit];
}

impl FromStr for LemmaScheme {
    type Err = StabilityError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "nse-explicit" | "nse_explicit" => Ok(Self::NseExplicit),
            "nsv" => Ok(Self::Nsv),
            "nse-semiimplicit" | "nse_semiimplicit" => Ok(Self::NseSemiImplicit),
            other => Err(StabilityError::UnknownScheme(other.to_string())),
        }
    }
}

impl fmt::Display for LemmaScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::NseExplicit => "nse-explicit",
            Self::Nsv => "nsv",
            Self::NseSemiImplicit => "nse-semiimplicit",
        })
    }
}

/// Data entering the stability conditions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LemmaInputs {
    /// Time step.
    pub k: f64,
    /// Grid spacings `(dx, dy)`.
    pub h: (f64, f64),
    pub nu: f64,
    pub alpha: f64,
    /// In (0, 1).
    pub delta: f64,
    /// Time horizon `T`.
    pub horizon: f64,
    /// `|u0|` (L2 norm, not squared).
    pub u0_l2: f64,
    /// `||u0||` (H1 seminorm, not squared).
    pub u0_h1: f64,
    /// Forcing energy `int_0^T |f|^2 dt`.
    pub f_energy: f64,
    /// Poincare constant, `|v| <= d0 ||v||`.
    pub d0: f64,
    /// Constant in `S1(h) = d1 S(h)^2`.
    pub d1: f64,
    pub d2: f64,
    /// Semi-implicit constant for `k S^4 <= d'`; back-solved when absent.
    pub d_prime: Option<f64>,
    /// Semi-implicit constant for `k S1^2 S^2 <= d''`; back-solved when absent.
    pub d_dprime: Option<f64>,
}

impl LemmaInputs {
    /// Zero data, `alpha = 0` and unit embedding constants (a box of length
    /// `L = 1`).
    pub fn new(k: f64, h: (f64, f64), nu: f64, delta: f64, horizon: f64) -> Self {
        Self {
            k,
            h,
            nu,
            alpha: 0.0,
            delta,
            horizon,
            u0_l2: 0.0,
            u0_h1: 0.0,
            f_energy: 0.0,
            d0: 1.0,
            d1: 1.0,
            d2: 1.0,
            d_prime: None,
            d_dprime: None,
        }
    }

    /// Same inputs with a different step.
    pub fn with_k(mut self, k: f64) -> Self {
        self.k = k;
        self
    }

    /// Embedding constants for a periodic box of side `2 pi L`: `d0 = d2 = L`.
    pub fn with_box_length(mut self, length: f64) -> Self {
        self.d0 = length;
        self.d2 = length;
        self
    }

    pub fn validate(&self) -> Result<(), StabilityError> {
        let bad = |msg: String| Err(StabilityError::InvalidInput(msg));
        let positive = [
            ("k", self.k),
            ("dx", self.h.0),
            ("dy", self.h.1),
            ("nu", self.nu),
            ("T", self.horizon),
            ("d0", self.d0),
            ("d1", self.d1),
            ("d2", self.d2),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return bad(format!("{name} must be positive and finite, got {v}"));
            }
        }
        let nonneg = [
            ("alpha", self.alpha),
            ("|u0|", self.u0_l2),
            ("||u0||", self.u0_h1),
            ("forcing energy", self.f_energy),
        ];
        for (name, v) in nonneg {
            if !(v >= 0.0 && v.is_finite()) {
                return bad(format!("{name} must be non-negative and finite, got {v}"));
            }
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return bad(format!("delta must lie in (0, 1), got {}", self.delta));
        }
        if self.k > self.horizon {
            return bad(format!("k = {} exceeds the horizon T = {}", self.k, self.horizon));
        }
        for (name, v) in [("d'", self.d_prime), ("d''", self.d_dprime)] {
            if let Some(v) = v {
                if !(v >= 0.0 && v.is_finite()) {
                    return bad(format!("{name} must be non-negative and finite, got {v}"));
                }
            }
        }
        Ok(())
    }

    /// `S(h)^2 = 4 (1/dx^2 + 1/dy^2)`.
    pub fn s_sq(&self) -> f64 {
        4.0 * (1.0 / (self.h.0 * self.h.0) + 1.0 / (self.h.1 * self.h.1))
    }

    /// `S1(h) = d1 S(h)^2`.
    pub fn s1(&self) -> f64 {
        self.d1 * self.s_sq()
    }
}

/// `d5 = ||u0||^2 + d0^2 (d0^2 + 1 - delta) / (nu d0^2) * F`.
pub fn d5_constant(inp: &LemmaInputs) -> f64 {
    let d0sq = inp.d0 * inp.d0;
    inp.u0_h1 * inp.u0_h1 + d0sq * ((d0sq + 1.0 - inp.delta) / (inp.nu * d0sq)) * inp.f_energy
}

/// `d6 = |u0|^2 + alpha^2 ||u0||^2 + (d0^2/nu + 4T) F`.
pub fn d6_constant(inp: &LemmaInputs) -> f64 {
    inp.u0_l2 * inp.u0_l2
        + inp.alpha * inp.alpha * inp.u0_h1 * inp.u0_h1
        + (inp.d0 * inp.d0 / inp.nu + 4.0 * inp.horizon) * inp.f_energy
}

/// `d10 = ||u0||^2 + d0^2/nu F`.
pub fn d10_constant(inp: &LemmaInputs) -> f64 {
    inp.u0_h1 * inp.u0_h1 + inp.d0 * inp.d0 / inp.nu * inp.f_energy
}

/// Upper bound `lambda_N <= d10 + 2 k^2 S1^2 S^2 |u0|^2 ||u0||^2`.
pub fn lambda_n_bound(inp: &LemmaInputs) -> f64 {
    let s1 = inp.s1();
    d10_constant(inp)
        + 2.0 * inp.k * inp.k * s1 * s1 * inp.s_sq()
            * inp.u0_l2 * inp.u0_l2
            * inp.u0_h1 * inp.u0_h1
}

/// `(d', d'')` for the semi-implicit conditions. Unless supplied, `d''` is
/// the largest `x = k S1^2 S^2` for which the gate holds with a tenfold
/// margin when the remaining factor `k` is replaced by `T`:
/// `2 d0 d2 x (d10 + 2 T x |u0|^2 ||u0||^2) <= (nu - delta) / 10`; and
/// `d' = d'' / d1^2`, which makes condition (i) the weaker one whenever
/// `S >= 1`.
pub fn semi_implicit_constants(inp: &LemmaInputs) -> (f64, f64) {
    let dd = inp.d_dprime.unwrap_or_else(|| {
        let c = 2.0 * inp.d0 * inp.d2;
        let p = inp.u0_l2 * inp.u0_l2 * inp.u0_h1 * inp.u0_h1;
        let rhs = (inp.nu - inp.delta) / SEMI_IMPLICIT_MARGIN;
        if rhs <= 0.0 {
            return 0.0;
        }
        // c x d10 + 2 c T p x^2 = rhs
        let a = 2.0 * c * inp.horizon * p;
        let b = c * d10_constant(inp);
        if a == 0.0 {
            if b == 0.0 {
                f64::INFINITY
            } else {
                rhs / b
            }
        } else {
            // Stable positive root of a x^2 + b x - rhs = 0.
            2.0 * rhs / (b + (b * b + 4.0 * a * rhs).sqrt())
        }
    });
    let dp = inp.d_prime.unwrap_or(dd / (inp.d1 * inp.d1));
    (dp, dd)
}

/// One hypothesis `lhs <= rhs`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Condition {
    pub name: String,
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
    /// `rhs - lhs`.
    pub margin: f64,
}

impl Condition {
    fn new(name: &str, lhs: f64, rhs: f64) -> Self {
        Self {
            name: name.to_string(),
            lhs,
            rhs,
            holds: lhs <= rhs + COMPARE_SLACK * rhs.abs(),
            margin: rhs - lhs,
        }
    }

    fn to_json(&self) -> Value {
        json!({
            "name": self.name,
            "lhs": num(self.lhs),
            "rhs": num(self.rhs),
            "holds": self.holds,
            "margin": num(self.margin),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionReport {
    pub scheme: LemmaScheme,
    pub conditions: Vec<Condition>,
    /// Derived constants (`d5`, `d6`, `lambda_N`, ...), in evaluation order.
    pub constants: Vec<(String, f64)>,
    /// Conjunction of all conditions.
    pub verdict: bool,
}

impl ConditionReport {
    fn new(scheme: LemmaScheme, conditions: Vec<Condition>, constants: Vec<(String, f64)>) -> Self {
        let verdict = conditions.iter().all(|c| c.holds);
        Self {
            scheme,
            conditions,
            constants,
            verdict,
        }
    }

    pub fn constant(&self, name: &str) -> Option<f64> {
        self.constants.iter().find(|(n, _)| n == name).map(|(_, v)| *v)
    }

    pub fn to_json(&self) -> Value {
        let constants: serde_json::Map<String, Value> = self
            .constants
            .iter()
            .map(|(n, v)| (n.clone(), num(*v)))
            .collect();
        json!({
            "scheme": self.scheme.to_string(),
            "verdict": self.verdict,
            "conditions": self.conditions.iter().map(Condition::to_json).collect::<Vec<_>>(),
            "constants": constants,
        })
    }
}

/// (i) `k S^2 <= (1-delta)/(4 nu)`, (ii) `k S^2 <= 1`,
/// (iii) `k S1^2 S^2 <= nu delta / (8 d0^2 d5)`.
pub fn check_nse_explicit(inp: &LemmaInputs) -> Result<ConditionReport, StabilityError> {
    inp.validate()?;
    let (s2, s1) = (inp.s_sq(), inp.s1());
    let d5 = d5_constant(inp);
    let conditions = vec![
        Condition::new("i", inp.k * s2, (1.0 - inp.delta) / (4.0 * inp.nu)),
        Condition::new("ii", inp.k * s2, 1.0),
        Condition::new(
            "iii",
            inp.k * s1 * s1 * s2,
            inp.nu * inp.delta / (8.0 * inp.d0 * inp.d0 * d5),
        ),
    ];
    Ok(ConditionReport::new(
        LemmaScheme::NseExplicit,
        conditions,
        vec![("S2".into(), s2), ("S1".into(), s1), ("d5".into(), d5)],
    ))
}

/// (i) `k S^2 <= (1-delta)/(4 nu)`, (ii) `k S1^2 <= nu delta / (8 d6)`.
/// With `d6 = 0` the right side of (ii) is infinite.
pub fn check_nsv(inp: &LemmaInputs) -> Result<ConditionReport, StabilityError> {
    inp.validate()?;
    let (s2, s1) = (inp.s_sq(), inp.s1());
    let d6 = d6_constant(inp);
    let conditions = vec![
        Condition::new("i", inp.k * s2, (1.0 - inp.delta) / (4.0 * inp.nu)),
        Condition::new("ii", inp.k * s1 * s1, inp.nu * inp.delta / (8.0 * d6)),
    ];
    Ok(ConditionReport::new(
        LemmaScheme::Nsv,
        conditions,
        vec![("S2".into(), s2), ("S1".into(), s1), ("d6".into(), d6)],
    ))
}

/// (i) `k S^4 <= d'`, (ii) `k S1^2 S^2 <= d''`, and the gate
/// `2 k d0 d2 S1^2 S^2 lambda_N <= nu - delta` with `lambda_N` replaced by
/// its bound [`lambda_n_bound`].
pub fn check_nse_semiimplicit(inp: &LemmaInputs) -> Result<ConditionReport, StabilityError> {
    inp.validate()?;
    let (s2, s1) = (inp.s_sq(), inp.s1());
    let (dp, dd) = semi_implicit_constants(inp);
    let lambda = lambda_n_bound(inp);
    let x = inp.k * s1 * s1 * s2;
    let conditions = vec![
        Condition::new("i", inp.k * s2 * s2, dp),
        Condition::new("ii", x, dd),
        Condition::new("gate", 2.0 * inp.d0 * inp.d2 * x * lambda, inp.nu - inp.delta),
    ];
    Ok(ConditionReport::new(
        LemmaScheme::NseSemiImplicit,
        conditions,
        vec![
            ("S2".into(), s2),
            ("S1".into(), s1),
            ("d_prime".into(), dp),
            ("d_dprime".into(), dd),
            ("d10".into(), d10_constant(inp)),
            ("lambda_N".into(), lambda),
        ],
    ))
}

pub fn check(scheme: LemmaScheme, inp: &LemmaInputs) -> Result<ConditionReport, StabilityError> {
    match scheme {
        LemmaScheme::NseExplicit => check_nse_explicit(inp),
        LemmaScheme::Nsv => check_nsv(inp),
        LemmaScheme::NseSemiImplicit => check_nse_semiimplicit(inp),
    }
}

/// Largest `k` satisfying every condition of a scheme, the other inputs held
/// fixed (the `k <= T` requirement is not part of this bound). Infinite when
/// no condition constrains `k`.
pub fn max_admissible_k(scheme: LemmaScheme, inp: &LemmaInputs) -> Result<f64, StabilityError> {
    inp.with_k(inp.horizon.min(f64::MAX)).validate()?;
    let (s2, s1) = (inp.s_sq(), inp.s1());
    let k_i = (1.0 - inp.delta) / (4.0 * inp.nu * s2);
    Ok(match scheme {
        LemmaScheme::NseExplicit => {
            let k_iii = inp.nu * inp.delta / (8.0 * inp.d0 * inp.d0 * d5_constant(inp) * s1 * s1 * s2);
            k_i.min(1.0 / s2).min(k_iii)
        }
        LemmaScheme::Nsv => {
            let k_ii = inp.nu * inp.delta / (8.0 * d6_constant(inp) * s1 * s1);
            k_i.min(k_ii)
        }
        LemmaScheme::NseSemiImplicit => {
            let (dp, dd) = semi_implicit_constants(inp);
            let c = s1 * s1 * s2;
            let k_lin = (dp / (s2 * s2)).min(dd / c);
            // Gate: 2 d0 d2 c k (d10 + 2 c k^2 p) <= nu - delta, increasing in k.
            let rhs = inp.nu - inp.delta;
            let p = inp.u0_l2 * inp.u0_l2 * inp.u0_h1 * inp.u0_h1;
            let gate = |k: f64| 2.0 * inp.d0 * inp.d2 * c * k * (d10_constant(inp) + 2.0 * c * k * k * p);
            let k_gate = if rhs <= 0.0 {
                0.0
            } else if gate(1.0) == 0.0 {
                f64::INFINITY
            } else {
                let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
                while gate(hi) <= rhs {
                    hi *= 2.0;
                }
                for _ in 0..200 {
                    let mid = 0.5 * (lo + hi);
                    if gate(mid) <= rhs {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                lo
            };
            k_lin.min(k_gate)
        }
    })
}

// ---------------------------------------------------------------------------
// Energy audit
// ---------------------------------------------------------------------------

/// Periodic box `[0, 2 pi L]^2` with Taylor-Green initial velocity
/// `a (sin x cos y, -cos x sin y)` (coordinates scaled by `1/L`), which is
/// exactly divergence free for the central-difference divergence, and an
/// optional steady forcing of the same shape.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AuditProblem {
    pub n: usize,
    pub length: f64,
    pub amplitude: f64,
    pub forcing: f64,
}

impl Default for AuditProblem {
    fn default() -> Self {
        Self {
            n: 16,
            length: 1.0,
            amplitude: 1.0,
            forcing: 0.0,
        }
    }
}

impl AuditProblem {
    pub fn spacing(&self) -> f64 {
        std::f64::consts::TAU * self.length / self.n as f64
    }

    pub fn grid(&self) -> Result<Grid2D, StabilityError> {
        let h = self.spacing();
        Ok(Grid2D::new(self.n, self.n, h, h, BoundaryKind::Periodic)?)
    }

    fn taylor_green(&self, amp: f64) -> Result<VectorField, StabilityError> {
        let g = self.grid()?;
        let h = self.spacing();
        let at = |i: usize| i as f64 * h / self.length;
        let u1 = Array2::from_shape_fn(g.shape(), |(i, j)| amp * at(i).sin() * at(j).cos());
        let u2 = Array2::from_shape_fn(g.shape(), |(i, j)| -amp * at(i).cos() * at(j).sin());
        Ok(VectorField::from_components(g, u1, u2)?)
    }

    pub fn initial_velocity(&self) -> Result<VectorField, StabilityError> {
        self.taylor_green(self.amplitude)
    }

    pub fn forcing_field(&self) -> Result<VectorField, StabilityError> {
        self.taylor_green(self.forcing)
    }

    /// Lemma inputs matching this problem for `steps` steps of size `k`:
    /// initial norms and forcing energy are measured on the grid, `T = steps k`.
    pub fn lemma_inputs(
        &self,
        k: f64,
        nu: f64,
        alpha: f64,
        delta: f64,
        steps: usize,
    ) -> Result<LemmaInputs, StabilityError> {
        let u0 = self.initial_velocity()?;
        let f = self.forcing_field()?;
        let horizon = k * steps.max(1) as f64;
        let h = self.spacing();
        let mut inp = LemmaInputs::new(k, (h, h), nu, delta, horizon).with_box_length(self.length);
        inp.alpha = alpha;
        inp.u0_l2 = l2_sq(&u0).sqrt();
        inp.u0_h1 = h1_sq(&u0)?.sqrt();
        inp.f_energy = horizon * l2_sq(&f);
        Ok(inp)
    }
}

fn components(u: &VectorField) -> [ScalarField; 2] {
    [u.component(0), u.component(1)]
}

fn assemble(g: Grid2D, c: [ScalarField; 2]) -> Result<VectorField, StabilityError> {
    let [a, b] = c;
    Ok(VectorField::from_components(g, a.into_values(), b.into_values())?)
}

/// `|u|^2`
pub fn l2_sq(u: &VectorField) -> f64 {
    components(u).iter().map(ScalarField::norm_sq).sum()
}

/// `A u = -Lap_h u`, componentwise.
pub fn apply_a(u: &VectorField) -> Result<VectorField, StabilityError> {
    let [a, b] = components(u);
    assemble(*u.grid(), [laplacian(&a)?.scaled(-1.0), laplacian(&b)?.scaled(-1.0)])
}

/// `||u||^2 = (A u, u)`
pub fn h1_sq(u: &VectorField) -> Result<f64, StabilityError> {
    inner(&apply_a(u)?, u)
}

fn inner(a: &VectorField, b: &VectorField) -> Result<f64, StabilityError> {
    let [a0, a1] = components(a);
    let [b0, b1] = components(b);
    Ok(a0.inner(&b0)? + a1.inner(&b1)?)
}

/// Skew-symmetric convection `B(u, v)_c = (1/2) [(u . D) v_c + D . (u v_c)]`
/// with central differences, so that `(B(u, v), v) = 0` for every `u, v`.
pub fn skew_convection(u: &VectorField, v: &VectorField) -> Result<VectorField, StabilityError> {
    let g = *u.grid();
    let mut out = Vec::with_capacity(2);
    for vc in components(v) {
        let grad = gradient(&vc);
        let adv = u.u1() * grad.u1() + u.u2() * grad.u2();
        let flux = VectorField::from_components(g, u.u1() * vc.values(), u.u2() * vc.values())?;
        let div = divergence(&flux).into_values();
        out.push(ScalarField::from_array(g, (adv + div) * 0.5)?);
    }
    let b = out.pop().expect("two components");
    let a = out.pop().expect("two components");
    assemble(g, [a, b])
}

/// `b_h(u, v, w) = (B(u, v), w)`.
pub fn trilinear(u: &VectorField, v: &VectorField, w: &VectorField) -> Result<f64, StabilityError> {
    inner(&skew_convection(u, v)?, w)
}

fn axpy(a: f64, x: &VectorField, y: &VectorField) -> Result<VectorField, StabilityError> {
    VectorField::from_components(*y.grid(), y.u1() + &(x.u1() * a), y.u2() + &(x.u2() * a))
        .map_err(Into::into)
}

/// `I + c A` on a periodic grid.
fn shifted_operator(g: &Grid2D, c: f64) -> LinearOperator {
    let (nx, ny) = g.shape();
    let (wx, wy) = (c / (g.dx() * g.dx()), c / (g.dy() * g.dy()));
    let id = |i: usize, j: usize| j * nx + i;
    let rows = (0..ny)
        .flat_map(|j| (0..nx).map(move |i| (i, j)))
        .map(|(i, j)| {
            vec![
                (id(i, j), 1.0 + 2.0 * wx + 2.0 * wy),
                (id((i + 1) % nx, j), -wx),
                (id((i + nx - 1) % nx, j), -wx),
                (id(i, (j + 1) % ny), -wy),
                (id(i, (j + ny - 1) % ny), -wy),
            ]
        })
        .collect();
    LinearOperator::from_rows(rows)
}

fn solve_shifted(op: &LinearOperator, rhs: &VectorField) -> Result<VectorField, StabilityError> {
    let g = *rhs.grid();
    let mut comps = Vec::with_capacity(2);
    for c in components(rhs) {
        // Column-major over (i, j) with i fastest matches `shifted_operator`.
        let b: Vec<f64> = c.values().t().iter().copied().collect();
        let mut x = b.clone();
        conjugate_gradient(op, &b, &mut x, 1e-14, 10_000)?;
        let arr = Array2::from_shape_vec((g.ny(), g.nx()), x)
            .expect("length matches grid")
            .reversed_axes();
        comps.push(ScalarField::from_array(g, arr.as_standard_layout().to_owned())?);
    }
    let b = comps.pop().expect("two components");
    let a = comps.pop().expect("two components");
    assemble(g, [a, b])
}

/// Norms of one iterate `u^m`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub m: usize,
    /// `|u^m|^2`
    pub l2_sq: f64,
    /// `||u^m||^2`
    pub h1_sq: f64,
    /// `|A u^m|^2`
    pub a_sq: f64,
    /// `|u^m - u^{m-1}|^2`
    pub inc_l2_sq: f64,
    /// `||u^m - u^{m-1}||^2`
    pub inc_h1_sq: f64,
    /// Running value of the scheme's second bound (a time-weighted sum).
    pub sum_dissipation: f64,
    /// Running value of the scheme's increment-sum bound.
    pub sum_increments: f64,
}

/// One bound checked at every step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundCheck {
    pub name: String,
    pub bound: f64,
    /// Largest value of the bounded quantity over all steps.
    pub worst_value: f64,
    /// `bound - worst_value`.
    pub worst_margin: f64,
    /// First step where the bound failed.
    pub first_violation: Option<usize>,
    pub holds: bool,
}

impl BoundCheck {
    fn new(name: &str, bound: f64) -> Self {
        Self {
            name: name.to_string(),
            bound,
            worst_value: 0.0,
            worst_margin: bound,
            first_violation: None,
            holds: true,
        }
    }

    fn observe(&mut self, m: usize, value: f64) {
        if value > self.worst_value || value.is_nan() {
            self.worst_value = value;
            self.worst_margin = self.bound - value;
        }
        let ok = value <= self.bound + COMPARE_SLACK * self.bound.abs();
        if !ok && self.first_violation.is_none() {
            self.first_violation = Some(m);
            self.holds = false;
        }
    }

    fn to_json(&self) -> Value {
        json!({
            "name": self.name,
            "bound": num(self.bound),
            "worst_value": num(self.worst_value),
            "worst_margin": num(self.worst_margin),
            "first_violation": self.first_violation,
            "holds": self.holds,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyTrace {
    pub scheme: LemmaScheme,
    pub steps: usize,
    /// Whether the checker certified the inputs.
    pub certified: bool,
    /// `m = 0..=steps`, truncated at blow-up.
    pub records: Vec<StepRecord>,
    pub bounds: Vec<BoundCheck>,
    /// Step at which a norm became non-finite or exceeded 1e100.
    pub blow_up: Option<usize>,
}

impl EnergyTrace {
    pub fn bounds_hold(&self) -> bool {
        self.blow_up.is_none() && self.bounds.iter().all(|b| b.holds)
    }

    /// One-line summary, e.g. `certified, bounds hold` or
    /// `uncertified, observed blow-up`.
    pub fn summary(&self) -> String {
        let cert = if self.certified { "certified" } else { "uncertified" };
        let outcome = if self.blow_up.is_some() {
            "observed blow-up"
        } else if self.bounds_hold() {
            "bounds hold"
        } else {
            "bound violated"
        };
        format!("{cert}, {outcome}")
    }

    pub fn to_json(&self) -> Value {
        json!({
            "scheme": self.scheme.to_string(),
            "steps": self.steps,
            "certified": self.certified,
            "summary": self.summary(),
            "blow_up": self.blow_up,
            "bounds": self.bounds.iter().map(BoundCheck::to_json).collect::<Vec<_>>(),
        })
    }

    /// Per-step norms as CSV.
    pub fn to_csv(&self) -> String {
        use crate::metrics::format_float as f;
        let mut out = String::from(
            "m,l2_sq,h1_sq,a_sq,inc_l2_sq,inc_h1_sq,sum_dissipation,sum_increments\n",
        );
        for r in &self.records {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{}\n",
                r.m,
                f(r.l2_sq),
                f(r.h1_sq),
                f(r.a_sq),
                f(r.inc_l2_sq),
                f(r.inc_h1_sq),
                f(r.sum_dissipation),
                f(r.sum_increments)
            ));
        }
        out
    }
}

/// Bounds `(name, value)` of each scheme's conclusions.
fn scheme_bounds(scheme: LemmaScheme, inp: &LemmaInputs) -> Vec<BoundCheck> {
    let f_int = inp.f_energy;
    match scheme {
        LemmaScheme::NseExplicit => {
            let d5 = d5_constant(inp);
            vec![
                BoundCheck::new("bd1: ||u^m||^2 <= d5", d5),
                BoundCheck::new(
                    "bd2: k sum |A u^(m-1)|^2 <= 2 d5/(nu delta)",
                    2.0 * d5 / (inp.nu * inp.delta),
                ),
                BoundCheck::new(
                    "bd3: sum ||u^m - u^(m-1)||^2 <= 2 (2-delta)/delta d5 + 4F",
                    2.0 * ((2.0 - inp.delta) / inp.delta) * d5 + 4.0 * f_int,
                ),
            ]
        }
        LemmaScheme::Nsv => {
            let d6 = d6_constant(inp);
            vec![
                BoundCheck::new("bd1: |u^m|^2 + alpha^2 ||u^m||^2 <= d6", d6),
                BoundCheck::new(
                    "bd2: k sum ||u^(m-1)||^2 <= 2 d6/(nu delta)",
                    2.0 * d6 / (inp.nu * inp.delta),
                ),
                BoundCheck::new(
                    "bd3: sum (|du|^2 + alpha^2 ||du||^2) <= (2-delta)/delta d6 + 4T F",
                    ((2.0 - inp.delta) / inp.delta) * d6 + 4.0 * inp.horizon * f_int,
                ),
            ]
        }
        LemmaScheme::NseSemiImplicit => {
            let lambda = lambda_n_bound(inp);
            vec![
                BoundCheck::new("d7: ||u^m||^2 <= lambda_N", lambda),
                BoundCheck::new("d7: k sum |A u^m|^2 <= lambda_N/delta", lambda / inp.delta),
                BoundCheck::new("d7: sum ||u^m - u^(m-1)||^2 <= 2 lambda_N", 2.0 * lambda),
            ]
        }
    }
}

/// Run `steps` steps of a lemma scheme on `problem`, recording norms and
/// checking that scheme's bounds after every step. Blow-up is an outcome,
/// not an error; errors are reserved for invalid inputs.
pub fn run_energy_audit(
    scheme: LemmaScheme,
    problem: &AuditProblem,
    inputs: &LemmaInputs,
    steps: usize,
) -> Result<EnergyTrace, StabilityError> {
    inputs.validate()?;
    let g = problem.grid()?;
    let h = problem.spacing();
    if (inputs.h.0 - h).abs() > 1e-12 * h || (inputs.h.1 - h).abs() > 1e-12 * h {
        return Err(StabilityError::InvalidInput(format!(
            "lemma inputs use h = {:?} but the audit grid has h = {h}",
            inputs.h
        )));
    }
    let certified = check(scheme, inputs)?.verdict;
    let (k, nu, alpha) = (inputs.k, inputs.nu, inputs.alpha);
    let f = problem.forcing_field()?;
    let voigt = (scheme == LemmaScheme::Nsv && alpha > 0.0).then(|| shifted_operator(&g, alpha * alpha));
    let implicit = (scheme == LemmaScheme::NseSemiImplicit).then(|| shifted_operator(&g, k * nu));

    let mut bounds = scheme_bounds(scheme, inputs);
    let mut u = problem.initial_velocity()?;
    let mut au = apply_a(&u)?;
    let record0 = StepRecord {
        m: 0,
        l2_sq: l2_sq(&u),
        h1_sq: inner(&au, &u)?,
        a_sq: l2_sq(&au),
        inc_l2_sq: 0.0,
        inc_h1_sq: 0.0,
        sum_dissipation: 0.0,
        sum_increments: 0.0,
    };
    let mut records = vec![record0];
    let mut blow_up = None;
    let (mut sum_diss, mut sum_inc) = (0.0, 0.0);

    for m in 1..=steps {
        let prev = &records[m - 1];
        let conv = skew_convection(&u, &u)?;
        // Explicit part k (f - B(u, u)), plus -k nu A u when diffusion is lagged.
        let mut forcing = axpy(-1.0, &conv, &f)?;
        if scheme != LemmaScheme::NseSemiImplicit {
            forcing = axpy(-nu, &au, &forcing)?;
        }
        let next = match scheme {
            LemmaScheme::NseExplicit => axpy(k, &forcing, &u)?,
            LemmaScheme::Nsv => {
                let rhs = forcing;
                let du = match &voigt {
                    Some(op) => solve_shifted(op, &rhs)?,
                    None => rhs,
                };
                axpy(k, &du, &u)?
            }
            LemmaScheme::NseSemiImplicit => {
                let rhs = axpy(k, &forcing, &u)?;
                solve_shifted(implicit.as_ref().expect("built for this scheme"), &rhs)?
            }
        };
        if next.max_abs().is_nan() || next.max_abs() > BLOW_UP || !next.max_abs().is_finite() {
            blow_up = Some(m);
            break;
        }
        let a_next = apply_a(&next)?;
        let du = axpy(-1.0, &u, &next)?;
        let inc_l2 = l2_sq(&du);
        let inc_h1 = h1_sq(&du)?;
        let rec = StepRecord {
            m,
            l2_sq: l2_sq(&next),
            h1_sq: inner(&a_next, &next)?,
            a_sq: l2_sq(&a_next),
            inc_l2_sq: inc_l2,
            inc_h1_sq: inc_h1,
            sum_dissipation: 0.0,
            sum_increments: 0.0,
        };
        let (bd1, bd2_term, bd3_term) = match scheme {
            LemmaScheme::NseExplicit => (rec.h1_sq, k * prev.a_sq, inc_h1),
            LemmaScheme::Nsv => (
                rec.l2_sq + alpha * alpha * rec.h1_sq,
                k * prev.h1_sq,
                inc_l2 + alpha * alpha * inc_h1,
            ),
            LemmaScheme::NseSemiImplicit => (rec.h1_sq, k * rec.a_sq, inc_h1),
        };
        sum_diss += bd2_term;
        sum_inc += bd3_term;
        let rec = StepRecord {
            sum_dissipation: sum_diss,
            sum_increments: sum_inc,
            ..rec
        };
        bounds[0].observe(m, bd1);
        bounds[1].observe(m, sum_diss);
        bounds[2].observe(m, sum_inc);
        records.push(rec);
        u = next;
        au = a_next;
    }
    if blow_up.is_some() {
        for b in &mut bounds {
            b.holds = false;
        }
    }
    Ok(EnergyTrace {
        scheme,
        steps,
        certified,
        records,
        bounds,
        blow_up,
    })
}
