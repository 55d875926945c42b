//! Uniform grid on (0,1) and sampled fields.

use std::fmt;
use std::sync::{Arc, OnceLock};

use thiserror::Error;

use crate::banded::ThomasFactor;

/// Smallest grid that supports the one-sided five-point third-derivative
/// stencil at both boundaries without overlap.
pub const MIN_INTERIOR_NODES: usize = 7;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GridError {
    #[error("grid needs at least {MIN_INTERIOR_NODES} interior nodes, got {0}")]
    Sizing(usize),
    #[error("fields live on different grids ({0} vs {1} interior nodes)")]
    GridMismatch(usize, usize),
    #[error("expected {expected} samples, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("non-finite value at node {0}")]
    NonFinite(usize),
    #[error("derivative order must be 1..=4, got {0}")]
    InvalidOrder(u8),
    #[error("operation requires a pinned field")]
    NotPinned,
}

/// Uniform partition of (0,1): nodes `x_i = i h`, `i = 1..=n`, `h = 1/(n+1)`.
///
/// Cloning is cheap; clones share the cached Dirichlet-Laplacian
/// factorization.
#[derive(Clone)]
pub struct Grid1D {
    n: usize,
    h: f64,
    laplacian: Arc<OnceLock<ThomasFactor>>,
}

impl Grid1D {
    pub fn new(n_interior: usize) -> Result<Self, GridError> {
        if n_interior < MIN_INTERIOR_NODES {
            return Err(GridError::Sizing(n_interior));
        }
        Ok(Self {
            n: n_interior,
            h: 1.0 / (n_interior as f64 + 1.0),
            laplacian: Arc::new(OnceLock::new()),
        })
    }

    pub fn n_interior(&self) -> usize {
        self.n
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    /// Coordinate of node `i` (0 and n+1 are the endpoints).
    pub fn x(&self, i: usize) -> f64 {
        if i == self.n + 1 {
            1.0
        } else {
            i as f64 * self.h
        }
    }

    /// Interior node coordinates.
    pub fn nodes(&self) -> Vec<f64> {
        (1..=self.n).map(|i| self.x(i)).collect()
    }

    /// Thomas factorization of tridiag(-1, 2, -1); the 1/h^2 scale is
    /// applied by the caller.
    pub(crate) fn neg_laplacian_factor(&self) -> &ThomasFactor {
        self.laplacian.get_or_init(|| {
            ThomasFactor::new(self.n, 2.0, -1.0).expect("tridiag(-1,2,-1) is SPD")
        })
    }

    pub fn check_same(&self, other: &Grid1D) -> Result<(), GridError> {
        if self.n == other.n {
            Ok(())
        } else {
            Err(GridError::GridMismatch(self.n, other.n))
        }
    }
}

impl PartialEq for Grid1D {
    fn eq(&self, other: &Self) -> bool {
        self.n == other.n
    }
}

impl fmt::Debug for Grid1D {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Grid1D").field("n_interior", &self.n).field("h", &self.h).finish()
    }
}

/// Pinned fields vanish together with their second derivative at both
/// endpoints and are extended oddly across them. Free fields carry no
/// boundary constraint; they may know their endpoint values.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BcClass {
    Pinned,
    Free { ends: Option<[f64; 2]> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    grid: Grid1D,
    values: Vec<f64>,
    bc: BcClass,
}

impl Field {
    fn check(grid: &Grid1D, values: &[f64]) -> Result<(), GridError> {
        if values.len() != grid.n {
            return Err(GridError::LengthMismatch { expected: grid.n, got: values.len() });
        }
        match values.iter().position(|v| !v.is_finite()) {
            Some(i) => Err(GridError::NonFinite(i + 1)),
            None => Ok(()),
        }
    }

    pub fn pinned(grid: &Grid1D, values: Vec<f64>) -> Result<Self, GridError> {
        Self::check(grid, &values)?;
        Ok(Self { grid: grid.clone(), values, bc: BcClass::Pinned })
    }

    pub fn free(grid: &Grid1D, values: Vec<f64>) -> Result<Self, GridError> {
        Self::check(grid, &values)?;
        Ok(Self { grid: grid.clone(), values, bc: BcClass::Free { ends: None } })
    }

    pub fn free_with_ends(grid: &Grid1D, values: Vec<f64>, ends: [f64; 2]) -> Result<Self, GridError> {
        Self::check(grid, &values)?;
        if !ends.iter().all(|v| v.is_finite()) {
            return Err(GridError::NonFinite(0));
        }
        Ok(Self { grid: grid.clone(), values, bc: BcClass::Free { ends: Some(ends) } })
    }

    pub fn zeros(grid: &Grid1D) -> Self {
        Self { grid: grid.clone(), values: vec![0.0; grid.n], bc: BcClass::Pinned }
    }

    /// Samples `f` at the interior nodes as a pinned field.
    pub fn sample_pinned(grid: &Grid1D, f: impl Fn(f64) -> f64) -> Result<Self, GridError> {
        Self::pinned(grid, grid.nodes().into_iter().map(f).collect())
    }

    /// Samples `f` at the interior nodes and both endpoints.
    pub fn sample_free(grid: &Grid1D, f: impl Fn(f64) -> f64) -> Result<Self, GridError> {
        let ends = [f(0.0), f(1.0)];
        Self::free_with_ends(grid, grid.nodes().into_iter().map(&f).collect(), ends)
    }

    /// Unchecked constructor for crate-internal results whose finiteness is
    /// checked where it matters (the integrator).
    pub(crate) fn from_parts(grid: &Grid1D, values: Vec<f64>, bc: BcClass) -> Self {
        debug_assert_eq!(values.len(), grid.n);
        Self { grid: grid.clone(), values, bc }
    }

    pub fn grid(&self) -> &Grid1D {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn bc(&self) -> BcClass {
        self.bc
    }

    pub fn is_pinned(&self) -> bool {
        matches!(self.bc, BcClass::Pinned)
    }

    /// Endpoint values when known: zero for pinned fields.
    pub fn end_values(&self) -> Option<[f64; 2]> {
        match self.bc {
            BcClass::Pinned => Some([0.0, 0.0]),
            BcClass::Free { ends } => ends,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
            && self.end_values().is_none_or(|e| e.iter().all(|v| v.is_finite()))
    }

    /// Reinterprets the samples as pinned (e.g. a derived quantity known to
    /// vanish with its second derivative at the endpoints).
    pub fn into_pinned(self) -> Self {
        Self { bc: BcClass::Pinned, ..self }
    }

    /// Pointwise map; endpoint values are mapped too when known. The result
    /// is free.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Field {
        let ends = self.end_values().map(|[l, r]| [f(l), f(r)]);
        Field::from_parts(&self.grid, self.values.iter().map(|&v| f(v)).collect(), BcClass::Free { ends })
    }

    /// Pointwise binary combination of two fields on the same grid.
    pub fn zip_map(&self, other: &Field, f: impl Fn(f64, f64) -> f64) -> Result<Field, GridError> {
        self.grid.check_same(&other.grid)?;
        let ends = match (self.end_values(), other.end_values()) {
            (Some([a, b]), Some([c, d])) => Some([f(a, c), f(b, d)]),
            _ => None,
        };
        let values = self.values.iter().zip(&other.values).map(|(&a, &b)| f(a, b)).collect();
        Ok(Field::from_parts(&self.grid, values, BcClass::Free { ends }))
    }

    /// Multiplies by a constant, keeping the boundary class.
    pub fn scaled(&self, c: f64) -> Field {
        let bc = match self.bc {
            BcClass::Pinned => BcClass::Pinned,
            BcClass::Free { ends } => BcClass::Free { ends: ends.map(|[l, r]| [c * l, c * r]) },
        };
        Field::from_parts(&self.grid, self.values.iter().map(|v| c * v).collect(), bc)
    }

    /// Sum of two fields; pinned + pinned stays pinned.
    pub fn add(&self, other: &Field) -> Result<Field, GridError> {
        let mut out = self.zip_map(other, |a, b| a + b)?;
        if self.is_pinned() && other.is_pinned() {
            out.bc = BcClass::Pinned;
        }
        Ok(out)
    }

    pub fn sub(&self, other: &Field) -> Result<Field, GridError> {
        let mut out = self.zip_map(other, |a, b| a - b)?;
        if self.is_pinned() && other.is_pinned() {
            out.bc = BcClass::Pinned;
        }
        Ok(out)
    }

    /// Largest absolute nodal value (interior nodes only).
    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}
