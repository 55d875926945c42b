//! Right-hand side of `u_t = -D^2[a(u) D^2 u - f(u)] - g(u)` in divergence
//! and expanded product-rule form, plus the frozen coefficients of the
//! quasilinear form `u_t + A1 D^4 u + A2 D^3 u + A3 D^2 u + ... = 0`.

use serde::{Deserialize, Serialize};

use crate::coefficient::CoefficientSpec;
use crate::grid::{BcClass, Field, GridError};
use crate::ops::{apply_derivative, extended, laplacian_into};

/// Choice of the phase-separation term `f` and the proliferation term `g`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NonlinearityVariant {
    /// `f(s) = s^3`, `g(s) = s^2`
    #[default]
    Plain,
    /// `f(s) = s^3 - s`, `g(s) = s^2 - s`
    Shifted,
}

impl NonlinearityVariant {
    #[inline]
    pub fn f(self, s: f64) -> f64 {
        match self {
            Self::Plain => s * s * s,
            Self::Shifted => s * s * s - s,
        }
    }

    #[inline]
    pub fn f_prime(self, s: f64) -> f64 {
        match self {
            Self::Plain => 3.0 * s * s,
            Self::Shifted => 3.0 * s * s - 1.0,
        }
    }

    #[inline]
    pub fn g(self, s: f64) -> f64 {
        match self {
            Self::Plain => s * s,
            Self::Shifted => s * s - s,
        }
    }
}

/// Bracket `a(u) D^2 u - f(u)` at the interior nodes; it vanishes at both
/// endpoints because `u = D^2 u = 0` there and `f(0) = 0`.
pub(crate) fn bracket_into(u: &[f64], h: f64, spec: &CoefficientSpec, variant: NonlinearityVariant, out: &mut [f64]) {
    laplacian_into(u, h, out);
    for (b, &s) in out.iter_mut().zip(u) {
        *b = spec.a(s) * *b - variant.f(s);
    }
}

/// Slice kernel of [`rhs_divergence_form`]; `scratch` must have the same
/// length as `u`.
pub(crate) fn rhs_divergence_into(
    u: &[f64],
    h: f64,
    spec: &CoefficientSpec,
    variant: NonlinearityVariant,
    out: &mut [f64],
    scratch: &mut [f64],
) {
    bracket_into(u, h, spec, variant, scratch);
    laplacian_into(scratch, h, out);
    for (r, &s) in out.iter_mut().zip(u) {
        *r = -*r - variant.g(s);
    }
}

/// `u_t` assembled as `-D^2[bracket] - g(u)`, the outer second difference
/// acting on the bracket extended by zero.
pub fn rhs_divergence_form(u: &Field, spec: &CoefficientSpec, variant: NonlinearityVariant) -> Result<Field, GridError> {
    if !u.is_pinned() {
        return Err(GridError::NotPinned);
    }
    let n = u.values().len();
    let mut out = vec![0.0; n];
    let mut scratch = vec![0.0; n];
    rhs_divergence_into(u.values(), u.grid().h(), spec, variant, &mut out, &mut scratch);
    Ok(Field::from_parts(u.grid(), out, BcClass::Free { ends: None }))
}

/// `u_t` assembled from the product-rule form
/// `-D[a(u) D^3 u + a'(u) Du D^2 u - f'(u) Du] - g(u)`.
pub fn rhs_expanded_form(u: &Field, spec: &CoefficientSpec, variant: NonlinearityVariant) -> Result<Field, GridError> {
    if !u.is_pinned() {
        return Err(GridError::NotPinned);
    }
    let grid = u.grid();
    let (n, h) = (grid.n_interior(), grid.h());
    let e = extended(u);
    // flux at nodes 0..=n+1, i.e. ext indices 2..=n+3
    let flux: Vec<f64> = (2..=n + 3)
        .map(|k| {
            let s = e[k];
            let d1 = (e[k + 1] - e[k - 1]) / (2.0 * h);
            let d2 = (e[k + 1] - 2.0 * s + e[k - 1]) / (h * h);
            let d3 = (e[k + 2] - 2.0 * e[k + 1] + 2.0 * e[k - 1] - e[k - 2]) / (2.0 * h * h * h);
            spec.a(s) * d3 + spec.a_prime(s) * d1 * d2 - variant.f_prime(s) * d1
        })
        .collect();
    let out = (1..=n)
        .map(|i| -(flux[i + 1] - flux[i - 1]) / (2.0 * h) - variant.g(u.values()[i - 1]))
        .collect();
    Ok(Field::from_parts(grid, out, BcClass::Free { ends: None }))
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrozenCoefficients {
    /// `a(u)`
    pub a1: Field,
    /// `2 a'(u) Du`
    pub a2: Field,
    /// `a''(u) |Du|^2`
    pub a3: Field,
    /// `f'(u)`
    pub a4: Field,
}

pub fn frozen_coefficients(
    u: &Field,
    spec: &CoefficientSpec,
    variant: NonlinearityVariant,
) -> Result<FrozenCoefficients, GridError> {
    let du = apply_derivative(u, 1)?;
    Ok(FrozenCoefficients {
        a1: u.map(|s| spec.a(s)),
        a2: u.zip_map(&du, |s, d| 2.0 * spec.a_prime(s) * d)?,
        a3: u.zip_map(&du, |s, d| spec.a_double_prime(s) * d * d)?,
        a4: u.map(|s| variant.f_prime(s)),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid1D;
    use std::f64::consts::PI;

    fn sine(n: usize, amp: f64, k: f64) -> Field {
        Field::sample_pinned(&Grid1D::new(n).unwrap(), |x| amp * (k * PI * x).sin()).unwrap()
    }

    fn max_diff(a: &Field, b: &Field) -> f64 {
        a.values().iter().zip(b.values()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
    }

    #[test]
    fn zero_is_a_fixed_point() {
        let spec = CoefficientSpec::rational_bump(2.0, 1.0).unwrap();
        let z = Field::zeros(&Grid1D::new(15).unwrap());
        for v in [NonlinearityVariant::Plain, NonlinearityVariant::Shifted] {
            assert!(rhs_divergence_form(&z, &spec, v).unwrap().values().iter().all(|&r| r == 0.0));
            assert!(rhs_expanded_form(&z, &spec, v).unwrap().values().iter().all(|&r| r == 0.0));
        }
    }

    #[test]
    fn linearization_gives_biharmonic_decay() {
        let eps = 1e-6;
        let spec = CoefficientSpec::constant(2.0).unwrap();
        let u = sine(127, eps, 1.0);
        let r = rhs_divergence_form(&u, &spec, NonlinearityVariant::Plain).unwrap();
        let h = u.grid().h();
        // the discrete sine is an exact eigenvector: rate a * lambda_h^2
        let lam_h = 2.0 / (h * h) * (1.0 - (PI * h).cos());
        for (ri, ui) in r.values().iter().zip(u.values()) {
            let lin = -2.0 * lam_h * lam_h * ui;
            assert!((ri - lin).abs() <= 1e-4 * lin.abs() + 1e-20, "{ri} vs {lin}");
            let cont = -2.0 * PI.powi(4) * ui;
            assert!((ri - cont).abs() <= 1e-3 * cont.abs() + 1e-20);
        }
    }

    #[test]
    fn divergence_form_matches_symbolic_evaluation() {
        // -D^2[2(-pi^2 sin) - sin^3] - sin^2, sin^3 = (3 sin t - sin 3t)/4
        let spec = CoefficientSpec::constant(2.0).unwrap();
        let exact = |x: f64| {
            let t = PI * x;
            let d2_sin3 = (-3.0 * PI * PI * t.sin() + 9.0 * PI * PI * (3.0 * t).sin()) / 4.0;
            -2.0 * PI.powi(4) * t.sin() + d2_sin3 - t.sin().powi(2)
        };
        let err = |n| {
            let u = sine(n, 1.0, 1.0);
            let r = rhs_divergence_form(&u, &spec, NonlinearityVariant::Plain).unwrap();
            u.grid().nodes().iter().zip(r.values()).map(|(&x, v)| (v - exact(x)).abs()).fold(0.0, f64::max)
        };
        let (e1, e2) = (err(63), err(127));
        assert!(e2 < 0.05, "{e2}");
        assert!((e1 / e2 - 4.0).abs() < 0.6, "ratio {}", e1 / e2);
    }

    #[test]
    fn forms_agree_for_constant_coefficient() {
        let spec = CoefficientSpec::constant(2.0).unwrap();
        for v in [NonlinearityVariant::Plain, NonlinearityVariant::Shifted] {
            let d = |n| {
                let u = sine(n, 0.8, 1.0);
                let a = rhs_divergence_form(&u, &spec, v).unwrap();
                let b = rhs_expanded_form(&u, &spec, v).unwrap();
                max_diff(&a, &b) / (u.grid().h() * u.grid().h())
            };
            let (k1, k2) = (d(63), d(127));
            assert!((k1 / k2 - 1.0).abs() < 0.2, "{k1} {k2}");
        }
    }

    #[test]
    fn forms_agree_at_second_order_for_rational_bump() {
        let spec = CoefficientSpec::rational_bump(2.0, 1.0).unwrap();
        let ks: Vec<f64> = [63, 127, 255]
            .iter()
            .map(|&n| {
                let u = sine(n, 0.5, 1.0);
                let a = rhs_divergence_form(&u, &spec, NonlinearityVariant::Plain).unwrap();
                let b = rhs_expanded_form(&u, &spec, NonlinearityVariant::Plain).unwrap();
                max_diff(&a, &b) / (u.grid().h() * u.grid().h())
            })
            .collect();
        assert!((ks[0] / ks[1] - 1.0).abs() < 0.2, "{ks:?}");
        assert!((ks[1] / ks[2] - 1.0).abs() < 0.2, "{ks:?}");
    }

    #[test]
    fn requires_pinned_input() {
        let g = Grid1D::new(9).unwrap();
        let u = Field::free(&g, vec![0.0; 9]).unwrap();
        let spec = CoefficientSpec::constant(2.0).unwrap();
        assert_eq!(rhs_divergence_form(&u, &spec, NonlinearityVariant::Plain).unwrap_err(), GridError::NotPinned);
    }

    #[test]
    fn frozen_coefficient_examples() {
        let c = CoefficientSpec::constant(3.0).unwrap();
        let u = sine(31, 1.0, 1.0);
        let fc = frozen_coefficients(&u, &c, NonlinearityVariant::Plain).unwrap();
        assert!(fc.a1.values().iter().all(|&v| v == 3.0));
        assert!(fc.a2.values().iter().all(|&v| v == 0.0));
        assert!(fc.a3.values().iter().all(|&v| v == 0.0));
        for (a4, s) in fc.a4.values().iter().zip(u.values()) {
            assert_eq!(*a4, 3.0 * s * s);
        }
        let shifted = frozen_coefficients(&u, &c, NonlinearityVariant::Shifted).unwrap();
        for (a4, s) in shifted.a4.values().iter().zip(u.values()) {
            assert_eq!(*a4, 3.0 * s * s - 1.0);
        }
    }

    #[test]
    fn frozen_a2_matches_symbolic_oracle() {
        let spec = CoefficientSpec::rational_bump(2.0, 1.0).unwrap();
        let err = |n| {
            let u = sine(n, 0.3, 1.0);
            let fc = frozen_coefficients(&u, &spec, NonlinearityVariant::Plain).unwrap();
            u.grid()
                .nodes()
                .iter()
                .zip(fc.a2.values())
                .map(|(&x, v)| {
                    let s = 0.3 * (PI * x).sin();
                    let ap = 2.0 * s / (1.0 + s * s).powi(2);
                    (v - 2.0 * ap * 0.3 * PI * (PI * x).cos()).abs()
                })
                .fold(0.0, f64::max)
        };
        let (e1, e2) = (err(63), err(127));
        assert!(e2 < 1e-3);
        assert!((e1 / e2 - 4.0).abs() < 0.6);
    }
}
