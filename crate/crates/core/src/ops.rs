//! Discrete differential operators, the inverse negative Laplacian, and the
//! quadratures behind every norm.
//!
//! All stencils are second-order centered. Pinned fields are extended oddly
//! across each endpoint (`u(-h) = -u(h)`, `u(0) = 0`), which enforces both
//! `u = 0` and `D^2 u = 0` there; with this rule the fourth-difference
//! operator is exactly the square of the Dirichlet three-point Laplacian.

use serde::{Deserialize, Serialize};

use crate::coefficient::CoefficientSpec;
use crate::grid::{BcClass, Field, GridError};
use crate::model::NonlinearityVariant;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormKind {
    L2,
    L4,
    L8,
    Linf,
    HminusOne,
}

/// Samples extended by two ghost nodes beyond each endpoint:
/// `ext[k]` holds node `k - 2`, so node 0 sits at index 2.
pub(crate) fn extended(f: &Field) -> Vec<f64> {
    let n = f.grid().n_interior();
    let v = f.values();
    let mut ext = vec![0.0; n + 6];
    ext[3..n + 3].copy_from_slice(v);
    match f.bc() {
        BcClass::Pinned => {
            ext[2] = 0.0;
            ext[1] = -v[0];
            ext[0] = -v[1];
            ext[n + 3] = 0.0;
            ext[n + 4] = -v[n - 1];
            ext[n + 5] = -v[n - 2];
        }
        BcClass::Free { ends } => {
            // cubic extrapolation: fourth difference vanishes
            let back = |e: &[f64], k: usize| 4.0 * e[k + 1] - 6.0 * e[k + 2] + 4.0 * e[k + 3] - e[k + 4];
            let fwd = |e: &[f64], k: usize| 4.0 * e[k - 1] - 6.0 * e[k - 2] + 4.0 * e[k - 3] - e[k - 4];
            match ends {
                Some([l, r]) => {
                    ext[2] = l;
                    ext[n + 3] = r;
                }
                None => {
                    ext[2] = back(&ext, 2);
                    ext[n + 3] = fwd(&ext, n + 3);
                }
            }
            ext[1] = back(&ext, 1);
            ext[0] = back(&ext, 0);
            ext[n + 4] = fwd(&ext, n + 4);
            ext[n + 5] = fwd(&ext, n + 5);
        }
    }
    ext
}

#[inline]
fn stencil(e: &[f64], k: usize, order: u8, h: f64) -> f64 {
    match order {
        1 => (e[k + 1] - e[k - 1]) / (2.0 * h),
        2 => (e[k + 1] - 2.0 * e[k] + e[k - 1]) / (h * h),
        3 => (e[k + 2] - 2.0 * e[k + 1] + 2.0 * e[k - 1] - e[k - 2]) / (2.0 * h * h * h),
        4 => (e[k + 2] - 4.0 * e[k + 1] + 6.0 * e[k] - 4.0 * e[k - 1] + e[k - 2]) / (h * h * h * h),
        _ => unreachable!(),
    }
}

/// Centered approximation of `D^order f` at the interior nodes. The result
/// is free and also carries the stencil value at both endpoints.
pub fn apply_derivative(f: &Field, order: u8) -> Result<Field, GridError> {
    if !(1..=4).contains(&order) {
        return Err(GridError::InvalidOrder(order));
    }
    let grid = f.grid();
    let (n, h) = (grid.n_interior(), grid.h());
    let ext = extended(f);
    let values = (3..n + 3).map(|k| stencil(&ext, k, order, h)).collect();
    let ends = [stencil(&ext, 2, order, h), stencil(&ext, n + 3, order, h)];
    Ok(Field::from_parts(grid, values, BcClass::Free { ends: Some(ends) }))
}

/// Dirichlet three-point Laplacian on raw interior samples (zero endpoint
/// values), written into `out`.
pub(crate) fn laplacian_into(v: &[f64], h: f64, out: &mut [f64]) {
    let n = v.len();
    let ih2 = 1.0 / (h * h);
    for i in 0..n {
        let left = if i > 0 { v[i - 1] } else { 0.0 };
        let right = if i + 1 < n { v[i + 1] } else { 0.0 };
        out[i] = (left - 2.0 * v[i] + right) * ih2;
    }
}

/// Solves `-D^2 w = f` with `w(0) = w(1) = 0` using the cached Thomas
/// factorization of the grid.
pub fn apply_inverse_neg_laplacian(f: &Field) -> Field {
    let grid = f.grid();
    let h2 = grid.h() * grid.h();
    let mut w: Vec<f64> = f.values().iter().map(|v| v * h2).collect();
    grid.neg_laplacian_factor()
        .solve_in_place(&mut w)
        .expect("length matches grid");
    Field::from_parts(grid, w, BcClass::Pinned)
}

/// Rectangle rule over the interior nodes, plus the half-weighted endpoint
/// terms when endpoint values are known (trapezoid rule).
pub(crate) fn quadrature(values: &[f64], ends: Option<[f64; 2]>, h: f64) -> f64 {
    let interior: f64 = values.iter().sum();
    let boundary = ends.map_or(0.0, |[l, r]| 0.5 * (l + r));
    h * (interior + boundary)
}

/// Integral of a field over (0,1).
pub fn integrate(f: &Field) -> f64 {
    quadrature(f.values(), f.end_values(), f.grid().h())
}

/// Discrete L2 pairing `h * sum f_i g_i` (trapezoid when both endpoint
/// values are known).
pub fn inner_product(f: &Field, g: &Field) -> Result<f64, GridError> {
    f.grid().check_same(g.grid())?;
    let ends = match (f.end_values(), g.end_values()) {
        (Some([a, b]), Some([c, d])) => Some([a * c, b * d]),
        _ => None,
    };
    let interior: Vec<f64> = f.values().iter().zip(g.values()).map(|(a, b)| a * b).collect();
    Ok(quadrature(&interior, ends, f.grid().h()))
}

/// Scaled by the max norm so that tiny fields do not underflow in `|v|^p`.
fn lp_norm(f: &Field, p: i32) -> f64 {
    let m = norm(f, NormKind::Linf);
    if m == 0.0 {
        return 0.0;
    }
    let pw: Vec<f64> = f.values().iter().map(|v| (v.abs() / m).powi(p)).collect();
    let ends = f.end_values().map(|[l, r]| [(l.abs() / m).powi(p), (r.abs() / m).powi(p)]);
    m * quadrature(&pw, ends, f.grid().h()).powf(1.0 / p as f64)
}

pub fn norm(f: &Field, kind: NormKind) -> f64 {
    match kind {
        NormKind::L2 => lp_norm(f, 2),
        NormKind::L4 => lp_norm(f, 4),
        NormKind::L8 => lp_norm(f, 8),
        NormKind::Linf => {
            let ends = f.end_values().map_or(0.0, |[l, r]| l.abs().max(r.abs()));
            f.max_abs().max(ends)
        }
        NormKind::HminusOne => {
            let n_f = apply_inverse_neg_laplacian(f);
            let h = f.grid().h();
            let s: f64 = f.values().iter().zip(n_f.values()).map(|(a, b)| a * b).sum();
            (h * s).max(0.0).sqrt()
        }
    }
}

/// Weights of `h^3 D^3 u(0)` on nodes 1..=5, exact for `x, x^3, .., x^6`:
/// fourth order whenever `u(0) = D^2 u(0) = 0`.
const D3_PINNED: [f64; 5] = [-3799.0 / 274.0, 7909.0 / 548.0, -1031.0 / 137.0, 2491.0 / 1096.0, -83.0 / 274.0];
/// Weights of `h D u(0)` on nodes 1..=4 under the same conditions.
const D1_PINNED: [f64; 4] = [48.0 / 25.0, -18.0 / 25.0, 16.0 / 75.0, -3.0 / 100.0];

/// Applies one-sided weights at both ends; the right end is mirrored and
/// changes sign with the (odd) derivative order.
fn one_sided(v: &[f64], w: &[f64]) -> (f64, f64) {
    let n = v.len();
    let l: f64 = w.iter().enumerate().map(|(j, c)| c * v[j]).sum();
    let r: f64 = w.iter().enumerate().map(|(j, c)| c * v[n - 1 - j]).sum();
    (l, -r)
}

/// `D^3 u` at x = 0 and x = 1 from five interior nodes. Pinned fields use
/// `u = D^2 u = 0` at the wall (fourth order); free fields fall back to a
/// second-order stencil through the endpoint value (0 when unknown).
pub fn boundary_third_derivative(u: &Field) -> (f64, f64) {
    let v = u.values();
    let h3 = u.grid().h().powi(3);
    if u.is_pinned() {
        let (l, r) = one_sided(v, &D3_PINNED);
        return (l / h3, r / h3);
    }
    let n = v.len();
    let [l0, r0] = u.end_values().unwrap_or([0.0, 0.0]);
    let left = (-2.5 * l0 + 9.0 * v[0] - 12.0 * v[1] + 7.0 * v[2] - 1.5 * v[3]) / h3;
    let right = (2.5 * r0 - 9.0 * v[n - 1] + 12.0 * v[n - 2] - 7.0 * v[n - 3] + 1.5 * v[n - 4]) / h3;
    (left, right)
}

/// `D u` at both endpoints: fourth order for pinned fields, three-point
/// second order otherwise.
pub fn boundary_first_derivative(u: &Field) -> (f64, f64) {
    let v = u.values();
    let h = u.grid().h();
    if u.is_pinned() {
        let (l, r) = one_sided(v, &D1_PINNED);
        return (l / h, r / h);
    }
    let n = v.len();
    let [l0, r0] = u.end_values().unwrap_or([0.0, 0.0]);
    let left = (-3.0 * l0 + 4.0 * v[0] - v[1]) / (2.0 * h);
    let right = (3.0 * r0 - 4.0 * v[n - 1] + v[n - 2]) / (2.0 * h);
    (left, right)
}

/// Boundary values of the flux `J = D[a(u) D^2 u - f(u)]`. With `u = D^2 u = 0`
/// at the wall this is `a(0) D^3 u - f'(0) D u`; the second term vanishes for
/// the plain nonlinearity.
pub fn boundary_flux(u: &Field, spec: &CoefficientSpec, variant: NonlinearityVariant) -> (f64, f64) {
    let (d3l, d3r) = boundary_third_derivative(u);
    let a0 = spec.a(0.0);
    let fp0 = variant.f_prime(0.0);
    if fp0 == 0.0 {
        (a0 * d3l, a0 * d3r)
    } else {
        let (d1l, d1r) = boundary_first_derivative(u);
        (a0 * d3l - fp0 * d1l, a0 * d3r - fp0 * d1r)
    }
}
