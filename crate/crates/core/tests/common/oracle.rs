//! Dense-algebra reference implementations, written straight from the
//! scheme's formulas without reusing the solver's assembly code.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use voight_core::*;

/// Unknown numbering, row by row.
pub fn unknowns(region: &MaskRegion) -> Vec<(usize, usize)> {
    let (w, h) = region.box_size();
    let mut out = Vec::new();
    for j in 0..h {
        for i in 0..w {
            if region.is_interior(i, j) {
                out.push((i, j));
            }
        }
    }
    out
}

fn position(cells: &[(usize, usize)], c: (usize, usize)) -> Option<usize> {
    cells.iter().position(|&x| x == c)
}

fn nbrs(i: usize, j: usize) -> [(usize, usize); 4] {
    [(i + 1, j), (i - 1, j), (i, j + 1), (i, j - 1)]
}

/// Dense LU solve of `Lap I = w` with Dirichlet data from the region.
pub fn dense_poisson(omega: &ScalarField, region: &MaskRegion) -> Vec<f64> {
    let cells = unknowns(region);
    let n = cells.len();
    let bv = region.boundary_values();
    let mut a = DMatrix::<f64>::zeros(n, n);
    let mut b = DVector::<f64>::zeros(n);
    for (p, &(i, j)) in cells.iter().enumerate() {
        a[(p, p)] = -4.0;
        b[p] = omega.get(i, j);
        for q in nbrs(i, j) {
            match position(&cells, q) {
                Some(k) => a[(p, k)] = 1.0,
                None => b[p] -= bv[[q.0, q.1]],
            }
        }
    }
    a.lu().solve(&b).expect("nonsingular").iter().copied().collect()
}

fn sgn(x: f64) -> isize {
    if x > 0.0 {
        1
    } else if x < 0.0 {
        -1
    } else {
        0
    }
}

/// Advection term at `(i, j)` written from the two formulas.
pub fn advection(w: &ScalarField, u: &VectorField, i: usize, j: usize, mode: UpwindMode) -> f64 {
    let (u1, u2) = (u.u1()[[i, j]], u.u2()[[i, j]]);
    let at = |di: isize, dj: isize| w.get((i as isize + di) as usize, (j as isize + dj) as usize);
    let c = w.get(i, j);
    match mode {
        UpwindMode::PaperExact => -u1 * (at(sgn(u1), 0) - c) - u2 * (at(0, sgn(u2)) - c),
        UpwindMode::Classical => {
            -u1.abs() * (c - at(-sgn(u1), 0)) - u2.abs() * (c - at(0, -sgn(u2)))
        }
    }
}

/// `g = 1 / (1 + (|grad w| / k^2)^2)` with central differences (valid away
/// from the box edge).
pub fn g_rational2(w: &ScalarField, k: f64, i: usize, j: usize) -> f64 {
    let gx = (w.get(i + 1, j) - w.get(i - 1, j)) / 2.0;
    let gy = (w.get(i, j + 1) - w.get(i, j - 1)) / 2.0;
    let s = (gx * gx + gy * gy).sqrt() / (k * k);
    1.0 / (1.0 + s * s)
}

/// One full step: vorticity by dense LU of
/// `(1 - a^2 Lap) w' - nu dt D_g w' = (1 - a^2 Lap) w + dt ADV`,
/// then intensity from `Lap I = w'`. Returns `(w', I')` on the unknowns.
pub fn dense_step(state: &SolveState, region: &MaskRegion, params: &SolverParams) -> (Vec<f64>, Vec<f64>) {
    let cells = unknowns(region);
    let n = cells.len();
    let w = &state.omega;
    let a2 = params.alpha * params.alpha;
    let k = params.diffusivity.k();
    let mut m = DMatrix::<f64>::identity(n, n);
    let mut rhs = DVector::<f64>::zeros(n);
    for (p, &(i, j)) in cells.iter().enumerate() {
        let lap = nbrs(i, j).iter().map(|&(a, b)| w.get(a, b)).sum::<f64>() - 4.0 * w.get(i, j);
        rhs[p] = w.get(i, j) - a2 * lap + params.dt * advection(w, &state.velocity, i, j, params.upwind_mode);
        let gp = g_rational2(w, k, i, j);
        for q in nbrs(i, j) {
            let gq = g_rational2(w, k, q.0, q.1);
            let c = a2 + params.nu * params.dt * 0.5 * (gp + gq);
            m[(p, p)] += c;
            match position(&cells, q) {
                Some(r) => m[(p, r)] -= c,
                None => rhs[p] += c * w.get(q.0, q.1),
            }
        }
    }
    let w_new: Vec<f64> = m.lu().solve(&rhs).expect("nonsingular").iter().copied().collect();
    let mut omega = state.omega.clone();
    for (&(i, j), v) in cells.iter().zip(&w_new) {
        omega.set(i, j, *v);
    }
    let i_new = dense_poisson(&omega, region);
    (w_new, i_new)
}
