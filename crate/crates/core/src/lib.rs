//! Finite-difference solver and a priori estimate diagnostics for the 1D
//! generalized Cahn-Hilliard equation with proliferation
//!
//! ```text
//! u_t + D^2[a(u) D^2 u - f(u)] + g(u) = 0   on (0,1),
//! u = D^2 u = 0                              at x = 0, 1,
//! ```
//!
//! with `f(s) = s^3`, `g(s) = s^2` (or the shifted variant
//! `f(s) = s^3 - s`, `g(s) = s^2 - s`).

// NaN-rejecting `!(x > 0.0)` checks and index loops over banded storage are
// deliberate.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub mod banded;
pub mod coefficient;
pub mod diagnostics;
pub mod grid;
pub mod integrator;
pub mod mms;
pub mod model;
pub mod ops;

pub use coefficient::{
    eval_coefficient, khain_sander_coefficient, validate_coefficient, CoefficientError, CoefficientFamily,
    CoefficientQuantity, CoefficientSpec, Hypothesis, ValidationReport,
};
pub use grid::{BcClass, Field, Grid1D, GridError};
pub use model::{frozen_coefficients, rhs_divergence_form, rhs_expanded_form, FrozenCoefficients, NonlinearityVariant};
pub use ops::{apply_derivative, apply_inverse_neg_laplacian, boundary_flux, inner_product, norm, NormKind};
pub use diagnostics::{
    energy_identity_residual, estimate_report, gronwall_fit, holder_modulus_space, holder_modulus_time,
    integrated_dissipations, mass_balance_residual, nirenberg_ratios, record, DiagnosticsError, DiagnosticsRecord,
    EstimateReport,
};
pub use integrator::{
    run, run_forced, select_dt, step, IntegratorError, RunStatus, SchemeConfig, SchemeKind, State, StepError, Stepper,
    Trajectory,
};
pub use mms::{
    convergence_study, manufactured_forcing, manufactured_forcing_symbolic, ConvergenceReport, ForcingKind,
    ManufacturedSolution, MmsError, Resolution,
};
