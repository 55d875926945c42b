//! Run, sweep and study configuration documents (JSON).

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use chgrow_core::coefficient::CoefficientFamily;
use chgrow_core::mms::ManufacturedSolution;
use chgrow_core::{
    validate_coefficient, CoefficientSpec, Field, ForcingKind, Grid1D, NonlinearityVariant, Resolution, SchemeConfig,
    SchemeKind, ValidationReport,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

pub const DEFAULT_CADENCE: usize = 100;
pub const VALIDATION_SAMPLES: usize = 2001;

fn default_cadence() -> usize {
    DEFAULT_CADENCE
}

fn default_max_iters() -> usize {
    1
}

fn default_tol() -> f64 {
    1e-10
}

fn default_validation_range() -> [f64; 2] {
    [-10.0, 10.0]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "preset", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialCondition {
    /// `A sin(k pi x)`
    ScaledSine {
        #[serde(alias = "A")]
        amplitude: f64,
        #[serde(alias = "k")]
        mode: u32,
    },
    /// `sum_k c_k sin(k pi x) / k^2` with `c_k` uniform on (-1, 1), scaled so
    /// that the peak equals `amplitude`. Falls back to the run seed when
    /// `seed` is absent.
    RandomSmooth {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        seed: Option<u64>,
        modes: u32,
        amplitude: f64,
    },
}

impl InitialCondition {
    pub fn amplitude(&self) -> f64 {
        match self {
            InitialCondition::ScaledSine { amplitude, .. } | InitialCondition::RandomSmooth { amplitude, .. } => {
                *amplitude
            }
        }
    }

    pub fn with_amplitude(&self, a: f64) -> Self {
        let mut ic = self.clone();
        match &mut ic {
            InitialCondition::ScaledSine { amplitude, .. } | InitialCondition::RandomSmooth { amplitude, .. } => {
                *amplitude = a
            }
        }
        ic
    }

    pub fn sample(&self, grid: &Grid1D, run_seed: u64) -> Result<Field> {
        let field = match *self {
            InitialCondition::ScaledSine { amplitude, mode } => {
                let k = mode as f64;
                Field::sample_pinned(grid, |x| amplitude * (k * PI * x).sin())
            }
            InitialCondition::RandomSmooth { seed, modes, amplitude } => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed.unwrap_or(run_seed));
                let coef: Vec<f64> =
                    (1..=modes).map(|k| rng.gen_range(-1.0..1.0) / (k as f64 * k as f64)).collect();
                let raw = Field::sample_pinned(grid, |x| {
                    coef.iter().enumerate().map(|(j, c)| c * ((j + 1) as f64 * PI * x).sin()).sum()
                })
                .map_err(|e| CliError::Config(e.to_string()))?;
                let peak = raw.max_abs();
                let scale = if peak > 0.0 { amplitude / peak } else { 0.0 };
                Ok(raw.scaled(scale))
            }
        };
        field.map_err(|e| CliError::Config(e.to_string()))
    }

    fn check(&self) -> Result<()> {
        let ok = match *self {
            InitialCondition::ScaledSine { amplitude, mode } => amplitude.is_finite() && mode >= 1,
            InitialCondition::RandomSmooth { modes, amplitude, .. } => amplitude.is_finite() && modes >= 1,
        };
        if ok {
            Ok(())
        } else {
            Err(CliError::Config("initial_condition: amplitude must be finite and the mode count >= 1".into()))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub n_interior: usize,
    #[serde(default)]
    pub scheme: SchemeKind,
    pub dt: f64,
    /// Defaults to the declared `M2` of the coefficient.
    #[serde(rename = "stabilization_S", default, skip_serializing_if = "Option::is_none")]
    pub stabilization_s: Option<f64>,
    #[serde(default = "default_cadence")]
    pub cadence: usize,
    #[serde(default = "default_max_iters")]
    pub max_iters: usize,
    #[serde(default = "default_tol")]
    pub nonlinear_tol: f64,
    #[serde(alias = "T_final")]
    pub t_final: f64,
    pub coefficient: CoefficientSpec,
    #[serde(default)]
    pub variant: NonlinearityVariant,
    pub initial_condition: InitialCondition,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub override_hypotheses: bool,
    #[serde(default)]
    pub seed: u64,
    /// Interval of `u` on which the coefficient hypotheses are sampled.
    #[serde(default = "default_validation_range")]
    pub validation_range: [f64; 2],
}

/// Command-line settings that take precedence over the document.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub override_hypotheses: bool,
    pub seed: Option<u64>,
}

impl RunConfig {
    pub fn scheme_config(&self) -> SchemeConfig {
        let base = match self.scheme {
            SchemeKind::ImexStabilized => {
                SchemeConfig::imex(self.dt, self.stabilization_s.unwrap_or(self.coefficient.declared_m2()))
            }
            SchemeKind::LinearizedImplicit => SchemeConfig::linearized(self.dt),
        };
        SchemeConfig { max_iters: self.max_iters, nonlinear_tol: self.nonlinear_tol, ..base }
    }

    pub fn grid(&self) -> Result<Grid1D> {
        Grid1D::new(self.n_interior).map_err(|e| CliError::Config(format!("n_interior: {e}")))
    }

    pub fn initial_field(&self) -> Result<Field> {
        self.initial_condition.sample(&self.grid()?, self.seed)
    }

    /// Fills the stabilization constant so the echoed document fully
    /// determines the run.
    pub fn normalized(mut self) -> Self {
        if self.scheme == SchemeKind::ImexStabilized && self.stabilization_s.is_none() {
            self.stabilization_s = Some(self.coefficient.declared_m2());
        }
        self
    }

    pub fn apply(mut self, o: &Overrides) -> Self {
        self.override_hypotheses |= o.override_hypotheses;
        if let Some(s) = o.seed {
            self.seed = s;
        }
        self
    }

    /// Structural checks; coefficient hypotheses are checked separately.
    pub fn check(&self) -> Result<()> {
        self.grid()?;
        if !(self.t_final > 0.0 && self.t_final.is_finite()) {
            return Err(CliError::Config(format!("t_final must be positive, got {}", self.t_final)));
        }
        if self.cadence == 0 {
            return Err(CliError::Config("cadence must be >= 1".into()));
        }
        let [lo, hi] = self.validation_range;
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(CliError::Config(format!("validation_range [{lo}, {hi}] is empty")));
        }
        self.initial_condition.check()?;
        self.scheme_config().validate(&self.coefficient).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn validation(&self) -> Result<ValidationReport> {
        let [lo, hi] = self.validation_range;
        validate_coefficient(&self.coefficient, (lo, hi), VALIDATION_SAMPLES).map_err(|e| CliError::Config(e.to_string()))
    }

    /// Rejects configs whose coefficient fails the hypotheses unless the
    /// override is set; returns the report either way.
    pub fn gate(&self) -> Result<ValidationReport> {
        let report = self.validation()?;
        if !report.passed && !self.override_hypotheses {
            return Err(CliError::Hypothesis(report.violation_messages()));
        }
        Ok(report)
    }
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

/// Reads and structurally validates a run config. Hypotheses are left to
/// [`RunConfig::gate`].
pub fn parse_config(path: &Path, o: &Overrides) -> Result<RunConfig> {
    let cfg: RunConfig = read_json(path)?;
    let cfg = cfg.apply(o).normalized();
    cfg.check()?;
    Ok(cfg)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParameter {
    /// Adhesion parameter of the constant `-ln(1-q)` coefficient.
    Q,
    Amplitude,
    Dt,
    NInterior,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub base: RunConfig,
    pub parameter: SweepParameter,
    pub values: Vec<f64>,
}

impl SweepConfig {
    /// Config of one sweep point.
    pub fn point(&self, value: f64) -> Result<RunConfig> {
        let mut cfg = self.base.clone();
        match self.parameter {
            SweepParameter::Q => {
                cfg.coefficient = CoefficientSpec::new(CoefficientFamily::KhainSander { q: value }, None, None)
                    .map_err(|e| CliError::Config(e.to_string()))?;
                if cfg.scheme == SchemeKind::ImexStabilized {
                    cfg.stabilization_s = None;
                }
            }
            SweepParameter::Amplitude => cfg.initial_condition = cfg.initial_condition.with_amplitude(value),
            SweepParameter::Dt => cfg.dt = value,
            SweepParameter::NInterior => {
                if value.fract() != 0.0 || value < 0.0 {
                    return Err(CliError::Config(format!("n_interior must be a whole number, got {value}")));
                }
                cfg.n_interior = value as usize;
            }
        }
        cfg.output_dir = None;
        let cfg = cfg.normalized();
        cfg.check()?;
        Ok(cfg)
    }
}

pub fn parse_sweep(path: &Path, o: &Overrides) -> Result<SweepConfig> {
    let mut sweep: SweepConfig = read_json(path)?;
    sweep.base = sweep.base.apply(o);
    if sweep.values.is_empty() {
        return Err(CliError::Config("sweep needs at least one value".into()));
    }
    Ok(sweep)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudyConfig {
    pub manufactured: ManufacturedSolution,
    pub coefficient: CoefficientSpec,
    #[serde(default)]
    pub variant: NonlinearityVariant,
    #[serde(default)]
    pub scheme: SchemeKind,
    pub forcing: ForcingKind,
    #[serde(alias = "T_final")]
    pub t_final: f64,
    pub resolutions: Vec<Resolution>,
}
