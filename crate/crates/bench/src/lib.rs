//! Shared fixtures for the benchmarks.

use std::f64::consts::PI;

use chgrow_core::{CoefficientSpec, Field, Grid1D, SchemeConfig, State};

/// Coefficient of the reference benchmark, `a(u) = 2 + u^2 / (1 + u^2)`.
pub fn benchmark_spec() -> CoefficientSpec {
    CoefficientSpec::rational_bump(2.0, 1.0).expect("valid parameters")
}

pub fn benchmark_state(n: usize) -> State {
    let grid = Grid1D::new(n).expect("n >= 7");
    State::new(0.0, Field::sample_pinned(&grid, |x| 0.5 * (PI * x).sin()).expect("pinned sample"))
}

pub fn benchmark_scheme(dt: f64) -> SchemeConfig {
    SchemeConfig::imex_for(dt, &benchmark_spec())
}
