//! Manufactured solutions and convergence studies.
//!
//! The exact solution is `u_e = A e^{-lambda t} sin(k pi x)`, which satisfies
//! `u = D^2 u = 0` at both walls. Two forcings are provided:
//!
//! * [`manufactured_forcing`] applies the discrete spatial operator to the
//!   sampled `u_e`, so the semi-discrete problem is solved exactly by the
//!   samples and only the time error remains (temporal studies, any `a`);
//! * [`manufactured_forcing_symbolic`] evaluates the continuous operator in
//!   closed form for constant `a` (spatial studies).

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::coefficient::CoefficientSpec;
use crate::grid::{Field, Grid1D, GridError};
use crate::integrator::{run_forced, IntegratorError, RunStatus, SchemeConfig, SchemeKind};
use crate::model::{rhs_divergence_form, NonlinearityVariant};
use crate::ops::{norm, NormKind};

/// Errors at or below this level count as exact; orders are then not fitted.
pub const DEGENERATE_ERROR: f64 = 1e-13;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MmsError {
    #[error("invalid manufactured solution: {0}")]
    InvalidSolution(String),
    #[error("symbolic forcing needs a constant coefficient")]
    NonConstantCoefficient,
    #[error("a convergence study needs at least 3 resolutions, got {0}")]
    TooFewResolutions(usize),
    #[error("resolutions must refine in space or in time only")]
    MixedRefinement,
    #[error("run at n = {n}, dt = {dt} failed: {source}")]
    Run { n: usize, dt: f64, source: IntegratorError },
    #[error("run at n = {n}, dt = {dt} aborted: {status}")]
    Aborted { n: usize, dt: f64, status: String },
    #[error(transparent)]
    Grid(#[from] GridError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ManufacturedForm {
    #[default]
    DecayingMode,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ManufacturedSolution {
    #[serde(default)]
    pub form: ManufacturedForm,
    pub amplitude: f64,
    pub decay_rate: f64,
    pub mode: u32,
}

impl ManufacturedSolution {
    pub fn decaying_mode(amplitude: f64, decay_rate: f64, mode: u32) -> Result<Self, MmsError> {
        let ms = Self { form: ManufacturedForm::DecayingMode, amplitude, decay_rate, mode };
        ms.validate()?;
        Ok(ms)
    }

    pub fn validate(&self) -> Result<(), MmsError> {
        if self.mode == 0 {
            return Err(MmsError::InvalidSolution("mode must be >= 1".into()));
        }
        if !self.amplitude.is_finite() || !self.decay_rate.is_finite() {
            return Err(MmsError::InvalidSolution("amplitude and decay rate must be finite".into()));
        }
        Ok(())
    }

    fn wavenumber(&self) -> f64 {
        self.mode as f64 * PI
    }

    fn envelope(&self, t: f64) -> f64 {
        self.amplitude * (-self.decay_rate * t).exp()
    }

    pub fn eval(&self, x: f64, t: f64) -> f64 {
        self.envelope(t) * (self.wavenumber() * x).sin()
    }

    pub fn sample(&self, grid: &Grid1D, t: f64) -> Field {
        Field::sample_pinned(grid, |x| self.eval(x, t)).expect("finite samples")
    }
}

/// `-lambda u_e - rhs_h(u_e)`: the source making the sampled exact solution
/// an exact solution of the semi-discrete system.
pub fn manufactured_forcing(
    ms: &ManufacturedSolution,
    spec: &CoefficientSpec,
    variant: NonlinearityVariant,
    t: f64,
    grid: &Grid1D,
) -> Field {
    let ue = ms.sample(grid, t);
    let rhs = rhs_divergence_form(&ue, spec, variant).expect("samples are pinned");
    ue.zip_map(&rhs, |u, r| -ms.decay_rate * u - r).expect("same grid")
}

/// Closed-form `u_t + M D^4 u - D^2 f(u) + g(u)` at the nodes for constant
/// `a = M`, using `D^2 sin^3(theta) = kpi^2 (9 sin 3theta - 3 sin theta) / 4`.
pub fn manufactured_forcing_symbolic(
    ms: &ManufacturedSolution,
    spec: &CoefficientSpec,
    variant: NonlinearityVariant,
    t: f64,
    grid: &Grid1D,
) -> Result<Field, MmsError> {
    let m = spec.constant_value().ok_or(MmsError::NonConstantCoefficient)?;
    let k = ms.wavenumber();
    let w = ms.envelope(t);
    let values = grid
        .nodes()
        .into_iter()
        .map(|x| {
            let th = k * x;
            let u = w * th.sin();
            let d2_cube = w.powi(3) * k * k * (9.0 * (3.0 * th).sin() - 3.0 * th.sin()) / 4.0;
            let d2_u = -k * k * u;
            let minus_d2_f = match variant {
                NonlinearityVariant::Plain => -d2_cube,
                NonlinearityVariant::Shifted => -d2_cube + d2_u,
            };
            -ms.decay_rate * u + m * k.powi(4) * u + minus_d2_f + variant.g(u)
        })
        .collect();
    Ok(Field::free(grid, values)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ForcingKind {
    #[default]
    Discrete,
    Symbolic,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Resolution {
    pub n: usize,
    pub dt: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub resolutions: Vec<Resolution>,
    /// `||u - u_e(T)||_{L2}` per resolution.
    pub errors: Vec<f64>,
    pub fitted_spatial_order: Option<f64>,
    pub fitted_temporal_order: Option<f64>,
    /// RMS residual of the log-log fit.
    pub fit_residual: Option<f64>,
}

/// Least-squares slope and RMS residual of `y` against `x`.
pub fn fit_slope(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let slope = sxy / sxx;
    let rss: f64 = x.iter().zip(y).map(|(a, b)| (b - my - slope * (a - mx)).powi(2)).sum();
    (slope, (rss / n).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Refinement {
    Space,
    Time,
}

fn classify(resolutions: &[Resolution]) -> Result<Refinement, MmsError> {
    let n0 = resolutions[0].n;
    let dt0 = resolutions[0].dt;
    if resolutions.iter().all(|r| r.n == n0) {
        if resolutions.iter().any(|r| r.dt != dt0) {
            return Ok(Refinement::Time);
        }
        return Err(MmsError::MixedRefinement);
    }
    let mut ns: Vec<usize> = resolutions.iter().map(|r| r.n).collect();
    ns.sort_unstable();
    ns.dedup();
    if ns.len() == resolutions.len() {
        Ok(Refinement::Space)
    } else {
        Err(MmsError::MixedRefinement)
    }
}

/// Runs the forced problem from `u_e(0)` at each resolution (concurrently)
/// and fits the observed order against `h` (when `n` varies) or `dt` (when
/// only `dt` varies).
pub fn convergence_study(
    ms: &ManufacturedSolution,
    spec: &CoefficientSpec,
    variant: NonlinearityVariant,
    resolutions: &[Resolution],
    t_final: f64,
    forcing: ForcingKind,
    scheme: SchemeKind,
) -> Result<ConvergenceReport, MmsError> {
    ms.validate()?;
    if resolutions.len() < 3 {
        return Err(MmsError::TooFewResolutions(resolutions.len()));
    }
    let kind = classify(resolutions)?;
    if forcing == ForcingKind::Symbolic && spec.constant_value().is_none() {
        return Err(MmsError::NonConstantCoefficient);
    }

    let solve = |r: Resolution| -> Result<f64, MmsError> {
        let grid = Grid1D::new(r.n)?;
        let cfg = match scheme {
            SchemeKind::ImexStabilized => SchemeConfig::imex_for(r.dt, spec),
            SchemeKind::LinearizedImplicit => SchemeConfig::linearized(r.dt),
        };
        let src = |t: f64, g: &Grid1D| -> Vec<f64> {
            match forcing {
                ForcingKind::Discrete => manufactured_forcing(ms, spec, variant, t, g).into_values(),
                ForcingKind::Symbolic => {
                    manufactured_forcing_symbolic(ms, spec, variant, t, g).expect("checked constant").into_values()
                }
            }
        };
        let steps = (t_final / r.dt - 1e-9).ceil().max(1.0) as usize;
        let traj = run_forced(&ms.sample(&grid, 0.0), t_final, cfg, spec, variant, steps, Some(&src))
            .map_err(|source| MmsError::Run { n: r.n, dt: r.dt, source })?;
        if let RunStatus::Failed { error, .. } = &traj.status {
            return Err(MmsError::Aborted { n: r.n, dt: r.dt, status: error.to_string() });
        }
        let last = traj.final_state();
        let diff = last.u.sub(&ms.sample(&grid, last.t))?;
        Ok(norm(&diff, NormKind::L2))
    };

    let errors: Vec<f64> = std::thread::scope(|scope| {
        let handles: Vec<_> = resolutions.iter().map(|&r| scope.spawn(move || solve(r))).collect();
        handles.into_iter().map(|h| h.join().expect("study worker panicked")).collect::<Result<_, _>>()
    })?;

    let (mut spatial, mut temporal, mut residual) = (None, None, None);
    if errors.iter().any(|&e| e > DEGENERATE_ERROR) {
        let x: Vec<f64> = match kind {
            Refinement::Space => resolutions.iter().map(|r| (1.0 / (r.n as f64 + 1.0)).ln()).collect(),
            Refinement::Time => resolutions.iter().map(|r| r.dt.ln()).collect(),
        };
        let y: Vec<f64> = errors.iter().map(|e| e.max(f64::MIN_POSITIVE).ln()).collect();
        let (slope, res) = fit_slope(&x, &y);
        match kind {
            Refinement::Space => spatial = Some(slope),
            Refinement::Time => temporal = Some(slope),
        }
        residual = Some(res);
    }
    Ok(ConvergenceReport {
        resolutions: resolutions.to_vec(),
        errors,
        fitted_spatial_order: spatial,
        fitted_temporal_order: temporal,
        fit_residual: residual,
    })
}
