//! Nonlinear diffusion coefficient `a(u)`: families, evaluation of `a`,
//! `a'`, `a''` and the antiderivative `A(u) = int_0^u a(s) ds`, and the
//! runtime check of the coefficient hypotheses
//! `1 < M1 <= a(u) <= M2`, `a'(u) u >= 0`.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::Field;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CoefficientError {
    #[error("adhesion parameter q must lie in (0,1), got {0}")]
    AdhesionDomain(f64),
    #[error("invalid coefficient table: {0}")]
    InvalidTable(String),
    #[error("invalid declared bounds M1={m1}, M2={m2}")]
    InvalidBounds { m1: f64, m2: f64 },
    #[error("invalid coefficient parameter: {0}")]
    InvalidParameter(String),
    #[error("validation needs a nonempty range and at least 101 samples (range [{lo}, {hi}], {samples} samples)")]
    InvalidValidationRange { lo: f64, hi: f64, samples: usize },
}

/// Piecewise cubic Hermite interpolant with Fritsch-Carlson style monotone
/// slopes. Outside the table the coefficient is extended by its end values.
#[derive(Debug, Clone, PartialEq)]
pub struct MonotoneSpline {
    xs: Vec<f64>,
    ys: Vec<f64>,
    slopes: Vec<f64>,
    /// `int_{xs[0]}^{xs[k]} p(s) ds`
    cumulative: Vec<f64>,
}

impl MonotoneSpline {
    pub fn new(points: &[[f64; 2]]) -> Result<Self, CoefficientError> {
        if points.len() < 2 {
            return Err(CoefficientError::InvalidTable("need at least two points".into()));
        }
        if points.iter().flatten().any(|v| !v.is_finite()) {
            return Err(CoefficientError::InvalidTable("non-finite entry".into()));
        }
        if points.windows(2).any(|w| w[1][0] <= w[0][0]) {
            return Err(CoefficientError::InvalidTable("abscissae must be strictly increasing".into()));
        }
        let xs: Vec<f64> = points.iter().map(|p| p[0]).collect();
        let ys: Vec<f64> = points.iter().map(|p| p[1]).collect();
        let n = xs.len();
        let hs: Vec<f64> = xs.windows(2).map(|w| w[1] - w[0]).collect();
        let ds: Vec<f64> = (0..n - 1).map(|k| (ys[k + 1] - ys[k]) / hs[k]).collect();

        let mut slopes = vec![0.0; n];
        if n == 2 {
            slopes = vec![ds[0], ds[0]];
        } else {
            for k in 1..n - 1 {
                if ds[k - 1] * ds[k] > 0.0 {
                    let w1 = 2.0 * hs[k] + hs[k - 1];
                    let w2 = hs[k] + 2.0 * hs[k - 1];
                    slopes[k] = (w1 + w2) / (w1 / ds[k - 1] + w2 / ds[k]);
                }
            }
            slopes[0] = edge_slope(hs[0], hs[1], ds[0], ds[1]);
            slopes[n - 1] = edge_slope(hs[n - 2], hs[n - 3], ds[n - 2], ds[n - 3]);
        }

        let mut spline = Self { xs, ys, slopes, cumulative: vec![0.0; n] };
        for k in 1..n {
            spline.cumulative[k] = spline.cumulative[k - 1] + spline.segment_integral(k - 1, 1.0);
        }
        Ok(spline)
    }

    pub fn points(&self) -> Vec<[f64; 2]> {
        self.xs.iter().zip(&self.ys).map(|(&x, &y)| [x, y]).collect()
    }

    fn locate(&self, x: f64) -> (usize, f64) {
        let k = match self.xs.partition_point(|&xk| xk <= x) {
            0 => 0,
            p => (p - 1).min(self.xs.len() - 2),
        };
        let h = self.xs[k + 1] - self.xs[k];
        (k, (x - self.xs[k]) / h)
    }

    fn segment_integral(&self, k: usize, t: f64) -> f64 {
        let h = self.xs[k + 1] - self.xs[k];
        let (t2, t3, t4) = (t * t, t * t * t, t * t * t * t);
        let h00 = 0.5 * t4 - t3 + t;
        let h10 = 0.25 * t4 - 2.0 * t3 / 3.0 + 0.5 * t2;
        let h01 = -0.5 * t4 + t3;
        let h11 = 0.25 * t4 - t3 / 3.0;
        h * (self.ys[k] * h00 + h * self.slopes[k] * h10 + self.ys[k + 1] * h01 + h * self.slopes[k + 1] * h11)
    }

    fn first(&self) -> f64 {
        self.xs[0]
    }

    fn last(&self) -> f64 {
        self.xs[self.xs.len() - 1]
    }

    pub fn eval(&self, x: f64) -> f64 {
        if x <= self.first() {
            return self.ys[0];
        }
        if x >= self.last() {
            return self.ys[self.ys.len() - 1];
        }
        let (k, t) = self.locate(x);
        let h = self.xs[k + 1] - self.xs[k];
        let (t2, t3) = (t * t, t * t * t);
        self.ys[k] * (2.0 * t3 - 3.0 * t2 + 1.0)
            + h * self.slopes[k] * (t3 - 2.0 * t2 + t)
            + self.ys[k + 1] * (-2.0 * t3 + 3.0 * t2)
            + h * self.slopes[k + 1] * (t3 - t2)
    }

    pub fn derivative(&self, x: f64) -> f64 {
        if x <= self.first() || x >= self.last() {
            return 0.0;
        }
        let (k, t) = self.locate(x);
        let h = self.xs[k + 1] - self.xs[k];
        let t2 = t * t;
        (self.ys[k] * (6.0 * t2 - 6.0 * t) + self.ys[k + 1] * (-6.0 * t2 + 6.0 * t)) / h
            + self.slopes[k] * (3.0 * t2 - 4.0 * t + 1.0)
            + self.slopes[k + 1] * (3.0 * t2 - 2.0 * t)
    }

    pub fn second_derivative(&self, x: f64) -> f64 {
        if x <= self.first() || x >= self.last() {
            return 0.0;
        }
        let (k, t) = self.locate(x);
        let h = self.xs[k + 1] - self.xs[k];
        ((self.ys[k] - self.ys[k + 1]) * (12.0 * t - 6.0) / h
            + self.slopes[k] * (6.0 * t - 4.0)
            + self.slopes[k + 1] * (6.0 * t - 2.0))
            / h
    }

    /// `int_{x_first}^{x} p(s) ds` with constant extension outside the table.
    pub fn integral_from_start(&self, x: f64) -> f64 {
        if x <= self.first() {
            return (x - self.first()) * self.ys[0];
        }
        let n = self.xs.len();
        if x >= self.last() {
            return self.cumulative[n - 1] + (x - self.last()) * self.ys[n - 1];
        }
        let (k, t) = self.locate(x);
        self.cumulative[k] + self.segment_integral(k, t)
    }
}

fn edge_slope(h0: f64, h1: f64, d0: f64, d1: f64) -> f64 {
    let m = ((2.0 * h0 + h1) * d0 - h0 * d1) / (h0 + h1);
    if m.signum() != d0.signum() || d0 == 0.0 {
        0.0
    } else if d0.signum() != d1.signum() && m.abs() > 3.0 * d0.abs() {
        3.0 * d0
    } else {
        m
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum CoefficientFamily {
    Constant { value: f64 },
    /// `a(u) = base + gain * u^2 / (1 + u^2)`
    RationalBump { base: f64, gain: f64 },
    /// Constant `a = -ln(1 - q)` from the adhesion parameter `q`.
    KhainSander { q: f64 },
    Tabulated(MonotoneSpline),
}

/// Serialized layout: the family fields tagged by `family`, plus the
/// declared bounds `m1`, `m2` (filled from the family when omitted).
#[derive(Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
enum FamilyRepr {
    Constant { value: f64 },
    RationalBump { base: f64, gain: f64 },
    KhainSander { q: f64 },
    Tabulated { points: Vec<[f64; 2]> },
}

#[derive(Serialize, Deserialize)]
struct SpecRepr {
    #[serde(flatten)]
    family: FamilyRepr,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    m1: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    m2: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SpecRepr", into = "SpecRepr")]
pub struct CoefficientSpec {
    family: CoefficientFamily,
    declared_m1: f64,
    declared_m2: f64,
}

impl TryFrom<SpecRepr> for CoefficientSpec {
    type Error = CoefficientError;

    fn try_from(r: SpecRepr) -> Result<Self, Self::Error> {
        let family = match r.family {
            FamilyRepr::Constant { value } => CoefficientFamily::Constant { value },
            FamilyRepr::RationalBump { base, gain } => CoefficientFamily::RationalBump { base, gain },
            FamilyRepr::KhainSander { q } => CoefficientFamily::KhainSander { q },
            FamilyRepr::Tabulated { points } => CoefficientFamily::Tabulated(MonotoneSpline::new(&points)?),
        };
        CoefficientSpec::new(family, r.m1, r.m2)
    }
}

impl From<CoefficientSpec> for SpecRepr {
    fn from(s: CoefficientSpec) -> Self {
        let family = match s.family {
            CoefficientFamily::Constant { value } => FamilyRepr::Constant { value },
            CoefficientFamily::RationalBump { base, gain } => FamilyRepr::RationalBump { base, gain },
            CoefficientFamily::KhainSander { q } => FamilyRepr::KhainSander { q },
            CoefficientFamily::Tabulated(sp) => FamilyRepr::Tabulated { points: sp.points() },
        };
        SpecRepr { family, m1: Some(s.declared_m1), m2: Some(s.declared_m2) }
    }
}

impl CoefficientSpec {
    /// Builds a spec; omitted bounds default to the family's exact range.
    pub fn new(family: CoefficientFamily, m1: Option<f64>, m2: Option<f64>) -> Result<Self, CoefficientError> {
        let (lo, hi) = match &family {
            CoefficientFamily::Constant { value } => {
                if !value.is_finite() || *value <= 0.0 {
                    return Err(CoefficientError::InvalidParameter(format!("constant value {value} must be positive")));
                }
                (*value, *value)
            }
            CoefficientFamily::RationalBump { base, gain } => {
                if !base.is_finite() || !gain.is_finite() || base.min(base + gain) <= 0.0 {
                    return Err(CoefficientError::InvalidParameter(format!(
                        "rational bump base {base}, gain {gain} must keep a(u) positive"
                    )));
                }
                (base.min(base + gain), base.max(base + gain))
            }
            CoefficientFamily::KhainSander { q } => {
                let m = adhesion_to_diffusion(*q)?;
                (m, m)
            }
            CoefficientFamily::Tabulated(sp) => {
                let lo = sp.ys.iter().copied().fold(f64::INFINITY, f64::min);
                let hi = sp.ys.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                if lo <= 0.0 {
                    return Err(CoefficientError::InvalidTable("tabulated a(u) must be positive".into()));
                }
                (lo, hi)
            }
        };
        let declared_m1 = m1.unwrap_or(lo);
        let declared_m2 = m2.unwrap_or(hi);
        if !declared_m1.is_finite() || !declared_m2.is_finite() || declared_m1 <= 0.0 || declared_m2 < declared_m1 {
            return Err(CoefficientError::InvalidBounds { m1: declared_m1, m2: declared_m2 });
        }
        Ok(Self { family, declared_m1, declared_m2 })
    }

    pub fn constant(value: f64) -> Result<Self, CoefficientError> {
        Self::new(CoefficientFamily::Constant { value }, None, None)
    }

    pub fn rational_bump(base: f64, gain: f64) -> Result<Self, CoefficientError> {
        Self::new(CoefficientFamily::RationalBump { base, gain }, None, None)
    }

    pub fn tabulated(points: &[[f64; 2]]) -> Result<Self, CoefficientError> {
        Self::new(CoefficientFamily::Tabulated(MonotoneSpline::new(points)?), None, None)
    }

    pub fn family(&self) -> &CoefficientFamily {
        &self.family
    }

    pub fn family_name(&self) -> &'static str {
        match self.family {
            CoefficientFamily::Constant { .. } => "constant",
            CoefficientFamily::RationalBump { .. } => "rational_bump",
            CoefficientFamily::KhainSander { .. } => "khain_sander",
            CoefficientFamily::Tabulated(_) => "tabulated",
        }
    }

    pub fn declared_m1(&self) -> f64 {
        self.declared_m1
    }

    pub fn declared_m2(&self) -> f64 {
        self.declared_m2
    }

    /// Constant value when `a` does not depend on `u`.
    pub fn constant_value(&self) -> Option<f64> {
        match self.family {
            CoefficientFamily::Constant { value } => Some(value),
            CoefficientFamily::KhainSander { q } => Some(-(1.0 - q).ln()),
            _ => None,
        }
    }

    pub fn a(&self, u: f64) -> f64 {
        match &self.family {
            CoefficientFamily::RationalBump { base, gain } => {
                let u2 = u * u;
                base + gain * u2 / (1.0 + u2)
            }
            CoefficientFamily::Tabulated(sp) => sp.eval(u),
            _ => self.constant_value().expect("constant family"),
        }
    }

    pub fn a_prime(&self, u: f64) -> f64 {
        match &self.family {
            CoefficientFamily::RationalBump { gain, .. } => {
                let d = 1.0 + u * u;
                2.0 * gain * u / (d * d)
            }
            CoefficientFamily::Tabulated(sp) => sp.derivative(u),
            _ => 0.0,
        }
    }

    pub fn a_double_prime(&self, u: f64) -> f64 {
        match &self.family {
            CoefficientFamily::RationalBump { gain, .. } => {
                let d = 1.0 + u * u;
                2.0 * gain * (1.0 - 3.0 * u * u) / (d * d * d)
            }
            CoefficientFamily::Tabulated(sp) => sp.second_derivative(u),
            _ => 0.0,
        }
    }

    /// `A(u) = int_0^u a(s) ds`.
    pub fn antiderivative(&self, u: f64) -> f64 {
        match &self.family {
            CoefficientFamily::RationalBump { base, gain } => base * u + gain * (u - u.atan()),
            CoefficientFamily::Tabulated(sp) => sp.integral_from_start(u) - sp.integral_from_start(0.0),
            _ => self.constant_value().expect("constant family") * u,
        }
    }

    pub fn eval(&self, u: f64, which: CoefficientQuantity) -> f64 {
        match which {
            CoefficientQuantity::A => self.a(u),
            CoefficientQuantity::APrime => self.a_prime(u),
            CoefficientQuantity::ADoublePrime => self.a_double_prime(u),
            CoefficientQuantity::Antiderivative => self.antiderivative(u),
        }
    }
}

/// Converts the adhesion parameter `q` into the diffusion constant
/// `-ln(1 - q)`.
pub fn adhesion_to_diffusion(q: f64) -> Result<f64, CoefficientError> {
    if !(q > 0.0 && q < 1.0) {
        return Err(CoefficientError::AdhesionDomain(q));
    }
    Ok(-(1.0 - q).ln())
}

/// Constant coefficient preset from the adhesion parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct AdhesionPreset {
    pub spec: CoefficientSpec,
    /// False when `-ln(1-q) <= 1`, i.e. `q <= 1 - 1/e`.
    pub admissible: bool,
}

pub fn khain_sander_coefficient(q: f64) -> Result<AdhesionPreset, CoefficientError> {
    let spec = CoefficientSpec::new(CoefficientFamily::KhainSander { q }, None, None)?;
    let admissible = spec.declared_m1 > 1.0;
    Ok(AdhesionPreset { spec, admissible })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CoefficientQuantity {
    A,
    APrime,
    ADoublePrime,
    Antiderivative,
}

/// Pointwise evaluation over a field.
pub fn eval_coefficient(spec: &CoefficientSpec, u: &Field, which: CoefficientQuantity) -> Field {
    u.map(|s| spec.eval(s, which))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Hypothesis {
    M1GreaterThanOne,
    LowerBound,
    UpperBound,
    SignCondition,
}

impl fmt::Display for Hypothesis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Hypothesis::M1GreaterThanOne => "M1>1 violated",
            Hypothesis::LowerBound => "a(u)>=M1 violated",
            Hypothesis::UpperBound => "a(u)<=M2 violated",
            Hypothesis::SignCondition => "a'(u)u>=0 violated",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Smoothness {
    ClosedForm,
    Assumed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub family: String,
    pub u_range: [f64; 2],
    pub samples: usize,
    pub declared_m1: f64,
    pub declared_m2: f64,
    pub min_a: f64,
    pub max_a: f64,
    pub min_a_prime_u: f64,
    /// Strict monotonicity `a'(u) > 0` on the sample; reported only, never
    /// part of the pass/fail decision.
    pub a_prime_positive: bool,
    pub smoothness: Smoothness,
    pub violations: Vec<Hypothesis>,
    pub passed: bool,
}

impl ValidationReport {
    pub fn violation_messages(&self) -> Vec<String> {
        self.violations.iter().map(ToString::to_string).collect()
    }
}

pub const SIGN_CONDITION_TOLERANCE: f64 = 1e-12;

pub fn validate_coefficient(
    spec: &CoefficientSpec,
    u_range: (f64, f64),
    samples: usize,
) -> Result<ValidationReport, CoefficientError> {
    let (lo, hi) = u_range;
    if !(lo.is_finite() && hi.is_finite() && lo < hi) || samples < 101 {
        return Err(CoefficientError::InvalidValidationRange { lo, hi, samples });
    }
    let mut min_a = f64::INFINITY;
    let mut max_a = f64::NEG_INFINITY;
    let mut min_apu = f64::INFINITY;
    let mut a_prime_positive = true;
    for k in 0..samples {
        let u = lo + (hi - lo) * k as f64 / (samples - 1) as f64;
        let a = spec.a(u);
        let ap = spec.a_prime(u);
        min_a = min_a.min(a);
        max_a = max_a.max(a);
        min_apu = min_apu.min(ap * u);
        a_prime_positive &= ap > 0.0;
    }
    let mut violations = Vec::new();
    if spec.declared_m1 <= 1.0 {
        violations.push(Hypothesis::M1GreaterThanOne);
    }
    if min_a < spec.declared_m1 {
        violations.push(Hypothesis::LowerBound);
    }
    if max_a > spec.declared_m2 {
        violations.push(Hypothesis::UpperBound);
    }
    if min_apu < -SIGN_CONDITION_TOLERANCE {
        violations.push(Hypothesis::SignCondition);
    }
    let smoothness = match spec.family {
        CoefficientFamily::Tabulated(_) => Smoothness::Assumed,
        _ => Smoothness::ClosedForm,
    };
    Ok(ValidationReport {
        family: spec.family_name().to_string(),
        u_range: [lo, hi],
        samples,
        declared_m1: spec.declared_m1,
        declared_m2: spec.declared_m2,
        min_a,
        max_a,
        min_a_prime_u: min_apu,
        a_prime_positive,
        smoothness,
        passed: violations.is_empty(),
        violations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid1D;
    use std::f64::consts::PI;

    fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
        let h = (b - a) / n as f64;
        let mut s = f(a) + f(b);
        for k in 1..n {
            s += f(a + k as f64 * h) * if k % 2 == 1 { 4.0 } else { 2.0 };
        }
        s * h / 3.0
    }

    #[test]
    fn constant_passes() {
        let r = validate_coefficient(&CoefficientSpec::constant(2.5).unwrap(), (-3.0, 3.0), 101).unwrap();
        assert!(r.passed);
        assert_eq!((r.min_a, r.max_a), (2.5, 2.5));
        assert_eq!(r.min_a_prime_u, 0.0);
        assert!(!r.a_prime_positive);
    }

    #[test]
    fn rational_bump_passes() {
        let spec = CoefficientSpec::rational_bump(2.0, 1.0).unwrap();
        let r = validate_coefficient(&spec, (-5.0, 5.0), 1001).unwrap();
        assert!(r.passed, "{:?}", r.violations);
        assert_eq!(r.min_a, 2.0);
        assert!(r.max_a < 3.0);
        assert!(r.min_a_prime_u >= 0.0);
        // symbolic a'(u) u = 2u^2/(1+u^2)^2
        for &u in &[-2.0, -0.3, 0.0, 0.7, 4.0] {
            let exact = 2.0 * u * u / (1.0_f64 + u * u).powi(2);
            assert!((spec.a_prime(u) * u - exact).abs() < 1e-15);
        }
    }

    #[test]
    fn small_constant_fails_m1() {
        let r = validate_coefficient(&CoefficientSpec::constant(0.5).unwrap(), (-3.0, 3.0), 101).unwrap();
        assert!(!r.passed);
        assert_eq!(r.violation_messages(), vec!["M1>1 violated".to_string()]);
    }

    #[test]
    fn negative_gain_fails_sign_condition() {
        let spec = CoefficientSpec::rational_bump(3.0, -0.5).unwrap();
        let r = validate_coefficient(&spec, (-3.0, 3.0), 101).unwrap();
        assert!(r.violations.contains(&Hypothesis::SignCondition));
    }

    #[test]
    fn overstated_lower_bound_fails() {
        let spec = CoefficientSpec::new(CoefficientFamily::RationalBump { base: 2.0, gain: 1.0 }, Some(2.2), None).unwrap();
        let r = validate_coefficient(&spec, (-1.0, 1.0), 101).unwrap();
        assert_eq!(r.violations, vec![Hypothesis::LowerBound]);
    }

    #[test]
    fn validation_preconditions() {
        let spec = CoefficientSpec::constant(2.0).unwrap();
        assert!(validate_coefficient(&spec, (1.0, 1.0), 101).is_err());
        assert!(validate_coefficient(&spec, (-1.0, 1.0), 100).is_err());
    }

    #[test]
    fn adhesion_presets() {
        let p = khain_sander_coefficient(1.0 - (-2.0f64).exp()).unwrap();
        assert!((p.spec.a(0.3) - 2.0).abs() < 1e-14);
        assert!(p.admissible);
        let p = khain_sander_coefficient(0.5).unwrap();
        assert!((p.spec.a(0.0) - 2.0f64.ln()).abs() < 1e-15);
        assert!(!p.admissible);
        let r = validate_coefficient(&p.spec, (-1.0, 1.0), 101).unwrap();
        assert!(r.violations.contains(&Hypothesis::M1GreaterThanOne));
        assert_eq!(khain_sander_coefficient(1.2).unwrap_err(), CoefficientError::AdhesionDomain(1.2));
        assert!(khain_sander_coefficient(0.0).is_err());
    }

    #[test]
    fn evaluation_examples() {
        let g = Grid1D::new(9).unwrap();
        let u = Field::sample_pinned(&g, |x| x - 0.3).unwrap();
        let c = eval_coefficient(&CoefficientSpec::constant(2.0).unwrap(), &u, CoefficientQuantity::A);
        assert!(c.values().iter().all(|&v| v == 2.0));

        let bump = CoefficientSpec::rational_bump(2.0, 1.0).unwrap();
        assert_eq!(bump.a(1.0), 2.5);
        let quad = simpson(|s| bump.a(s), 0.0, 1.0, 2000);
        assert!((bump.antiderivative(1.0) - quad).abs() < 1e-12);
        assert!((bump.antiderivative(1.0) - (3.0 - PI / 4.0)).abs() < 1e-15);
        assert!((bump.antiderivative(1.0) - 2.2146).abs() < 1e-4);
    }

    #[test]
    fn antiderivative_differentiates_back() {
        let specs = [
            CoefficientSpec::constant(1.7).unwrap(),
            CoefficientSpec::rational_bump(2.0, 1.0).unwrap(),
            khain_sander_coefficient(0.9).unwrap().spec,
        ];
        let eps = 1e-5;
        for spec in &specs {
            for k in 0..=40 {
                let u = -5.0 + 0.25 * k as f64;
                let d = (spec.antiderivative(u + eps) - spec.antiderivative(u - eps)) / (2.0 * eps);
                assert!((d - spec.a(u)).abs() < 1e-8, "{} at {u}", spec.family_name());
            }
        }
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let bump = CoefficientSpec::rational_bump(2.0, 1.0).unwrap();
        let eps = 1e-6;
        for k in 0..=20 {
            let u = -3.0 + 0.3 * k as f64;
            let d1 = (bump.a(u + eps) - bump.a(u - eps)) / (2.0 * eps);
            let d2 = (bump.a_prime(u + eps) - bump.a_prime(u - eps)) / (2.0 * eps);
            assert!((d1 - bump.a_prime(u)).abs() < 1e-8);
            assert!((d2 - bump.a_double_prime(u)).abs() < 1e-8);
        }
    }

    #[test]
    fn spline_reproduces_data_and_stays_monotone() {
        let pts = [[-2.0, 2.0], [-1.0, 2.0], [0.0, 2.0], [0.5, 2.3], [1.0, 2.8], [3.0, 3.0]];
        let spec = CoefficientSpec::tabulated(&pts).unwrap();
        for p in &pts {
            assert!((spec.a(p[0]) - p[1]).abs() < 1e-14);
        }
        let mut prev = spec.a(0.0);
        for k in 1..=300 {
            let u = 0.01 * k as f64;
            let a = spec.a(u);
            assert!(a >= prev - 1e-14 && a <= 3.0 + 1e-14);
            prev = a;
        }
        assert_eq!(spec.a(10.0), 3.0);
        assert_eq!(spec.a_prime(10.0), 0.0);
        let r = validate_coefficient(&spec, (-4.0, 4.0), 801).unwrap();
        assert!(r.passed, "{:?}", r);
        assert_eq!(r.smoothness, Smoothness::Assumed);
    }

    #[test]
    fn spline_integral_and_derivatives_are_consistent() {
        let pts = [[-1.0, 1.5], [0.0, 1.6], [0.4, 2.0], [1.5, 2.1], [2.0, 2.9]];
        let spec = CoefficientSpec::tabulated(&pts).unwrap();
        let quad = simpson(|s| spec.a(s), 0.0, 1.7, 3400);
        assert!((spec.antiderivative(1.7) - quad).abs() < 1e-9);
        let quad_neg = simpson(|s| spec.a(s), -1.5, 0.0, 3000);
        assert!((spec.antiderivative(-1.5) + quad_neg).abs() < 1e-9);
        let eps = 1e-6;
        for &u in &[-0.7, 0.2, 0.9, 1.8] {
            let d1 = (spec.a(u + eps) - spec.a(u - eps)) / (2.0 * eps);
            assert!((d1 - spec.a_prime(u)).abs() < 1e-6);
            let d2 = (spec.a_prime(u + eps) - spec.a_prime(u - eps)) / (2.0 * eps);
            assert!((d2 - spec.a_double_prime(u)).abs() < 1e-5);
        }
    }

    #[test]
    fn invalid_specs() {
        assert!(CoefficientSpec::tabulated(&[[0.0, 2.0]]).is_err());
        assert!(CoefficientSpec::tabulated(&[[0.0, 2.0], [0.0, 3.0]]).is_err());
        assert!(CoefficientSpec::constant(-1.0).is_err());
        assert!(CoefficientSpec::new(CoefficientFamily::Constant { value: 2.0 }, Some(3.0), Some(2.5)).is_err());
    }

    #[test]
    fn json_layout_fills_bounds_and_round_trips() {
        let spec: CoefficientSpec =
            serde_json::from_str(r#"{"family":"rational_bump","base":2.0,"gain":1.0}"#).unwrap();
        assert_eq!((spec.declared_m1(), spec.declared_m2()), (2.0, 3.0));
        let back: CoefficientSpec = serde_json::from_str(&serde_json::to_string(&spec).unwrap()).unwrap();
        assert_eq!(back, spec);
        let bad = serde_json::from_str::<CoefficientSpec>(r#"{"family":"khain_sander","q":1.5}"#);
        assert!(bad.unwrap_err().to_string().contains("(0,1)"));
    }
}
