//! Time stepping.
//!
//! `ImexStabilized` moves a constant-coefficient biharmonic surrogate
//! `S D^4` to the implicit side:
//!
//! ```text
//! (I + dt S D^4) u' = u + dt [S D^4 u + rhs(u) + F]
//! ```
//!
//! `LinearizedImplicit` freezes `a(u)` and `f'(u)` at the current iterate and
//! solves the divergence-form linear problem
//!
//! ```text
//! u' + dt D^2[a(v) D^2 u' - f(v) - f'(v)(u' - v)] = u - dt g(u) + dt F
//! ```
//!
//! whose product-rule expansion carries the frozen coefficients `A1..A4`.
//! Both updates are written as `u' - u = -dt (D^2 W + g) + dt F` for a flux
//! potential `W` that vanishes at the walls, so the discrete mass balance
//! telescopes exactly.

use log::warn;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::banded::{BandedError, BandedLu, BandedMatrix};
use crate::coefficient::CoefficientSpec;
use crate::diagnostics::{record, DiagnosticsRecord};
use crate::grid::{BcClass, Field, Grid1D, GridError};
use crate::model::{bracket_into, rhs_divergence_into, NonlinearityVariant};
use crate::ops::laplacian_into;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SchemeKind {
    #[default]
    ImexStabilized,
    LinearizedImplicit,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SchemeConfig {
    pub scheme: SchemeKind,
    pub dt: f64,
    /// Splitting constant `S` of the stabilized scheme; must be at least the
    /// declared upper bound `M2` of the coefficient.
    pub stabilization: f64,
    /// Picard sweeps of the linearized scheme; 1 means a single linear solve.
    pub max_iters: usize,
    pub nonlinear_tol: f64,
}

impl SchemeConfig {
    pub fn imex(dt: f64, stabilization: f64) -> Self {
        Self { scheme: SchemeKind::ImexStabilized, dt, stabilization, max_iters: 1, nonlinear_tol: 1e-10 }
    }

    pub fn linearized(dt: f64) -> Self {
        Self { scheme: SchemeKind::LinearizedImplicit, dt, stabilization: 0.0, max_iters: 1, nonlinear_tol: 1e-10 }
    }

    /// IMEX with `S = M2` of the given coefficient.
    pub fn imex_for(dt: f64, spec: &CoefficientSpec) -> Self {
        Self::imex(dt, spec.declared_m2())
    }

    pub fn with_dt(self, dt: f64) -> Self {
        Self { dt, ..self }
    }

    pub fn validate(&self, spec: &CoefficientSpec) -> Result<(), IntegratorError> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(IntegratorError::InvalidConfig(format!("dt must be positive, got {}", self.dt)));
        }
        if self.scheme == SchemeKind::ImexStabilized && !(self.stabilization >= spec.declared_m2()) {
            return Err(IntegratorError::InvalidConfig(format!(
                "stabilization S = {} is below M2 = {}",
                self.stabilization,
                spec.declared_m2()
            )));
        }
        if self.max_iters == 0 || !(self.nonlinear_tol > 0.0) {
            return Err(IntegratorError::InvalidConfig("max_iters must be >= 1 and nonlinear_tol > 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct State {
    pub t: f64,
    pub u: Field,
}

impl State {
    pub fn new(t: f64, u: Field) -> Self {
        Self { t, u }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Serialize, Deserialize)]
pub enum StepError {
    #[error("solution became non-finite")]
    NonFinite,
    #[error("linear solve failed: {0}")]
    LinearSolveFailure(String),
    #[error("fixed-point iteration did not converge in {iters} sweeps (last update {last_update:e})")]
    NoConvergence { iters: usize, last_update: f64 },
}

impl From<BandedError> for StepError {
    fn from(e: BandedError) -> Self {
        StepError::LinearSolveFailure(e.to_string())
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum IntegratorError {
    #[error("invalid scheme configuration: {0}")]
    InvalidConfig(String),
    #[error("initial condition must be a pinned field")]
    InitialNotPinned,
    #[error("final time must be positive, got {0}")]
    InvalidFinalTime(f64),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error("step {step} (t = {t}) failed: {source}")]
    Step { step: usize, t: f64, source: StepError },
}

/// `I + dt L diag(diffusion) L - dt L diag(drift)` in band storage, where
/// `L` is the Dirichlet three-point Laplacian.
fn assemble(n: usize, h: f64, dt: f64, diffusion: &[f64], drift: Option<&[f64]>) -> BandedMatrix {
    let mut m = BandedMatrix::zeros(n, 2);
    let c4 = dt / h.powi(4);
    for i in 0..n {
        let left = if i > 0 { diffusion[i - 1] } else { 0.0 };
        let right = if i + 1 < n { diffusion[i + 1] } else { 0.0 };
        m.add(i, i, 1.0 + c4 * (left + 4.0 * diffusion[i] + right));
        if i + 1 < n {
            let v = -2.0 * c4 * (diffusion[i] + diffusion[i + 1]);
            m.add(i, i + 1, v);
            m.add(i + 1, i, v);
        }
        if i + 2 < n {
            let v = c4 * diffusion[i + 1];
            m.add(i, i + 2, v);
            m.add(i + 2, i, v);
        }
    }
    if let Some(e) = drift {
        let c2 = dt / (h * h);
        for i in 0..n {
            m.add(i, i, 2.0 * c2 * e[i]);
            if i > 0 {
                m.add(i, i - 1, -c2 * e[i - 1]);
            }
            if i + 1 < n {
                m.add(i, i + 1, -c2 * e[i + 1]);
            }
        }
    }
    m
}

/// Reusable stepping context: caches the constant IMEX factorization per
/// `(grid, dt, S)` and scratch buffers.
pub struct Stepper {
    grid: Grid1D,
    cfg: SchemeConfig,
    spec: CoefficientSpec,
    variant: NonlinearityVariant,
    imex_lu: Option<BandedLu>,
    lap: Vec<f64>,
    scratch: Vec<f64>,
    rhs: Vec<f64>,
}

impl Stepper {
    pub fn new(
        grid: &Grid1D,
        cfg: SchemeConfig,
        spec: &CoefficientSpec,
        variant: NonlinearityVariant,
    ) -> Result<Self, IntegratorError> {
        cfg.validate(spec)?;
        let n = grid.n_interior();
        Ok(Self {
            grid: grid.clone(),
            cfg,
            spec: spec.clone(),
            variant,
            imex_lu: None,
            lap: vec![0.0; n],
            scratch: vec![0.0; n],
            rhs: vec![0.0; n],
        })
    }

    pub fn config(&self) -> &SchemeConfig {
        &self.cfg
    }

    fn imex_factor(&mut self) -> Result<&BandedLu, StepError> {
        if self.imex_lu.is_none() {
            let n = self.grid.n_interior();
            let diffusion = vec![self.cfg.stabilization; n];
            self.imex_lu = Some(assemble(n, self.grid.h(), self.cfg.dt, &diffusion, None).factor()?);
        }
        Ok(self.imex_lu.as_ref().expect("just built"))
    }

    /// Advances one step. `forcing`, when given, is the source term sampled
    /// at the current time and is treated explicitly.
    pub fn step(&mut self, s: &State, forcing: Option<&[f64]>) -> Result<State, StepError> {
        if s.u.grid() != &self.grid {
            return Err(StepError::LinearSolveFailure("state lives on a different grid".into()));
        }
        let next = match self.cfg.scheme {
            SchemeKind::ImexStabilized => self.imex_step(s.u.values(), forcing)?,
            SchemeKind::LinearizedImplicit => self.linearized_step(s.u.values(), forcing)?,
        };
        if next.iter().any(|v| !v.is_finite()) {
            return Err(StepError::NonFinite);
        }
        Ok(State::new(s.t + self.cfg.dt, Field::from_parts(&self.grid, next, BcClass::Pinned)))
    }

    fn imex_step(&mut self, u: &[f64], forcing: Option<&[f64]>) -> Result<Vec<f64>, StepError> {
        let h = self.grid.h();
        let (dt, big_s) = (self.cfg.dt, self.cfg.stabilization);
        // rhs <- rhs_divergence(u); lap <- L L u
        rhs_divergence_into(u, h, &self.spec, self.variant, &mut self.rhs, &mut self.scratch);
        laplacian_into(u, h, &mut self.scratch);
        laplacian_into(&self.scratch, h, &mut self.lap);
        let mut next: Vec<f64> = (0..u.len())
            .map(|i| {
                let src = forcing.map_or(0.0, |f| f[i]);
                u[i] + dt * (big_s * self.lap[i] + self.rhs[i] + src)
            })
            .collect();
        if next.iter().any(|v| !v.is_finite()) {
            return Err(StepError::NonFinite);
        }
        self.imex_factor()?.solve_in_place(&mut next)?;
        Ok(next)
    }

    fn linearized_step(&mut self, u: &[f64], forcing: Option<&[f64]>) -> Result<Vec<f64>, StepError> {
        let n = u.len();
        let (h, dt) = (self.grid.h(), self.cfg.dt);
        let mut frozen = u.to_vec();
        let mut last_update = f64::INFINITY;
        for _ in 0..self.cfg.max_iters {
            let a1: Vec<f64> = frozen.iter().map(|&v| self.spec.a(v)).collect();
            let a4: Vec<f64> = frozen.iter().map(|&v| self.variant.f_prime(v)).collect();
            // explicit part of the flux potential: f(v) - f'(v) v
            for i in 0..n {
                self.scratch[i] = self.variant.f(frozen[i]) - a4[i] * frozen[i];
            }
            laplacian_into(&self.scratch, h, &mut self.lap);
            let mut next: Vec<f64> = (0..n)
                .map(|i| {
                    let src = forcing.map_or(0.0, |f| f[i]);
                    u[i] + dt * (self.lap[i] - self.variant.g(u[i]) + src)
                })
                .collect();
            if next.iter().any(|v| !v.is_finite()) || a1.iter().chain(&a4).any(|v| !v.is_finite()) {
                return Err(StepError::NonFinite);
            }
            assemble(n, h, dt, &a1, Some(&a4)).factor()?.solve_in_place(&mut next)?;
            if self.cfg.max_iters == 1 {
                return Ok(next);
            }
            last_update = next.iter().zip(&frozen).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            let scale = 1.0 + next.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
            frozen = next;
            if last_update <= self.cfg.nonlinear_tol * scale {
                return Ok(frozen);
            }
        }
        Err(StepError::NoConvergence { iters: self.cfg.max_iters, last_update })
    }
}

/// One step from `s` with a throwaway [`Stepper`].
pub fn step(
    s: &State,
    cfg: SchemeConfig,
    spec: &CoefficientSpec,
    variant: NonlinearityVariant,
) -> Result<State, IntegratorError> {
    let mut stepper = Stepper::new(s.u.grid(), cfg, spec, variant)?;
    stepper.step(s, None).map_err(|source| IntegratorError::Step { step: 1, t: s.t + cfg.dt, source })
}

/// Left/right values `(Phi_l, Phi_r)` of the discrete flux `D W` the scheme
/// used between `prev` and `next` (single linearization for the implicit
/// scheme), so that `h sum(next - prev) = -dt (h sum g(prev) + Phi_r - Phi_l)`.
pub fn scheme_fluxes(
    prev: &[f64],
    next: &[f64],
    h: f64,
    cfg: &SchemeConfig,
    spec: &CoefficientSpec,
    variant: NonlinearityVariant,
) -> (f64, f64) {
    let n = prev.len();
    let mut w = vec![0.0; n];
    match cfg.scheme {
        SchemeKind::ImexStabilized => {
            let delta: Vec<f64> = next.iter().zip(prev).map(|(a, b)| a - b).collect();
            let mut ld = vec![0.0; n];
            laplacian_into(&delta, h, &mut ld);
            bracket_into(prev, h, spec, variant, &mut w);
            for (wi, li) in w.iter_mut().zip(&ld) {
                *wi += cfg.stabilization * li;
            }
        }
        SchemeKind::LinearizedImplicit => {
            let mut lnext = vec![0.0; n];
            laplacian_into(next, h, &mut lnext);
            for i in 0..n {
                let v = prev[i];
                w[i] = spec.a(v) * lnext[i] - variant.f(v) - variant.f_prime(v) * (next[i] - v);
            }
        }
    }
    (w[0] / h, -w[n - 1] / h)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum RunStatus {
    Completed,
    Failed { step: usize, t: f64, error: StepError },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub states: Vec<State>,
    pub records: Vec<DiagnosticsRecord>,
    pub scheme: SchemeConfig,
    pub spec: CoefficientSpec,
    pub variant: NonlinearityVariant,
    /// Steps between recorded states (the final state is always recorded).
    pub cadence: usize,
    pub status: RunStatus,
    /// Last finite state when the run aborted between recordings.
    pub last_finite: Option<State>,
    pub warnings: Vec<String>,
}

impl Trajectory {
    pub fn grid(&self) -> &Grid1D {
        self.states[0].u.grid()
    }

    pub fn completed(&self) -> bool {
        self.status == RunStatus::Completed
    }

    pub fn final_state(&self) -> &State {
        self.states.last().expect("trajectory holds the initial state")
    }
}

/// Source term `F(t)` sampled on the interior nodes.
pub type Forcing<'a> = &'a (dyn Fn(f64, &Grid1D) -> Vec<f64> + Sync);

/// Largest one-sided estimate of `D^2 u` at the walls relative to the
/// interior second differences; the odd extension assumes it is small.
pub fn endpoint_curvature_mismatch(u: &Field) -> f64 {
    let v = u.values();
    let n = v.len();
    let h2 = u.grid().h().powi(2);
    let left = (-5.0 * v[0] + 4.0 * v[1] - v[2]) / h2;
    let right = (-5.0 * v[n - 1] + 4.0 * v[n - 2] - v[n - 3]) / h2;
    let mut lap = vec![0.0; n];
    laplacian_into(v, u.grid().h(), &mut lap);
    let scale = lap.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
    if scale == 0.0 {
        return 0.0;
    }
    left.abs().max(right.abs()) / scale
}

const ENDPOINT_MISMATCH_WARN: f64 = 0.05;

pub fn run(
    u0: &Field,
    t_final: f64,
    cfg: SchemeConfig,
    spec: &CoefficientSpec,
    variant: NonlinearityVariant,
    cadence: usize,
) -> Result<Trajectory, IntegratorError> {
    run_forced(u0, t_final, cfg, spec, variant, cadence, None)
}

pub fn run_forced(
    u0: &Field,
    t_final: f64,
    cfg: SchemeConfig,
    spec: &CoefficientSpec,
    variant: NonlinearityVariant,
    cadence: usize,
    forcing: Option<Forcing<'_>>,
) -> Result<Trajectory, IntegratorError> {
    if !u0.is_pinned() {
        return Err(IntegratorError::InitialNotPinned);
    }
    if !(t_final > 0.0 && t_final.is_finite()) {
        return Err(IntegratorError::InvalidFinalTime(t_final));
    }
    if cadence == 0 {
        return Err(IntegratorError::InvalidConfig("cadence must be >= 1".into()));
    }
    let grid = u0.grid().clone();
    let mut stepper = Stepper::new(&grid, cfg, spec, variant)?;

    let mut warnings = Vec::new();
    let mismatch = endpoint_curvature_mismatch(u0);
    if mismatch > ENDPOINT_MISMATCH_WARN {
        let msg = format!("initial data violates D^2u0 = 0 at the walls (relative mismatch {mismatch:.3})");
        warn!("{msg}");
        warnings.push(msg);
    }

    let n_steps = (t_final / cfg.dt - 1e-9).ceil().max(1.0) as usize;
    let mut state = State::new(0.0, u0.clone());
    let mut states = vec![state.clone()];
    let mut records = vec![record(&state, None, spec, variant)];
    let mut status = RunStatus::Completed;
    let mut last_finite = None;

    for m in 1..=n_steps {
        let src = forcing.map(|f| f(state.t, &grid));
        match stepper.step(&state, src.as_deref()) {
            Ok(mut next) => {
                next.t = m as f64 * cfg.dt;
                if m % cadence == 0 || m == n_steps {
                    records.push(record(&next, Some(&state), spec, variant));
                    states.push(next.clone());
                }
                state = next;
            }
            Err(error) => {
                let t = m as f64 * cfg.dt;
                warn!("step {m} (t = {t}) failed: {error}");
                if states.last().map(|s| s.t) != Some(state.t) {
                    last_finite = Some(state.clone());
                }
                status = RunStatus::Failed { step: m, t, error };
                break;
            }
        }
    }

    Ok(Trajectory { states, records, scheme: cfg, spec: spec.clone(), variant, cadence, status, last_finite, warnings })
}

/// L2 distance between one step of size `dt` and two steps of `dt/2`.
pub fn step_doubling_estimate(
    s: &State,
    cfg: SchemeConfig,
    spec: &CoefficientSpec,
    variant: NonlinearityVariant,
) -> Result<f64, IntegratorError> {
    let grid = s.u.grid();
    let mut full = Stepper::new(grid, cfg, spec, variant)?;
    let mut half = Stepper::new(grid, cfg.with_dt(0.5 * cfg.dt), spec, variant)?;
    let err = |source| IntegratorError::Step { step: 1, t: s.t, source };
    let one = full.step(s, None).map_err(err)?;
    let mid = half.step(s, None).map_err(err)?;
    let two = half.step(&mid, None).map_err(err)?;
    let diff = one.u.sub(&two.u)?;
    Ok(crate::ops::norm(&diff, crate::ops::NormKind::L2))
}

/// Step-doubling step-size proposal `dt (target / estimate)^(1/2)`, clamped
/// to `[dt/4, 2 dt]`; falls back to `dt` if a probe step fails.
pub fn select_dt(
    s: &State,
    cfg: SchemeConfig,
    spec: &CoefficientSpec,
    variant: NonlinearityVariant,
    target_local_error: f64,
) -> f64 {
    let dt = cfg.dt;
    match step_doubling_estimate(s, cfg, spec, variant) {
        Ok(0.0) => 2.0 * dt,
        Ok(est) => (dt * (target_local_error / est).sqrt()).clamp(0.25 * dt, 2.0 * dt),
        Err(_) => dt,
    }
}
