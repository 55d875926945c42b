//! Banded linear solvers: a Thomas factorization for symmetric tridiagonal
//! Toeplitz systems and a general banded LU without pivoting.

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BandedError {
    #[error("zero pivot at row {row} (|pivot| = {pivot:e})")]
    SingularPivot { row: usize, pivot: f64 },
    #[error("right-hand side has length {got}, system size is {expected}")]
    LengthMismatch { expected: usize, got: usize },
}

/// Pre-factored Thomas sweep for `tridiag(off, diag, off)`.
#[derive(Debug, Clone)]
pub struct ThomasFactor {
    off: f64,
    /// Modified super-diagonal c'_i.
    c_prime: Vec<f64>,
    /// 1 / (diag - off * c'_{i-1}).
    inv_denom: Vec<f64>,
}

impl ThomasFactor {
    pub fn new(n: usize, diag: f64, off: f64) -> Result<Self, BandedError> {
        let mut c_prime = vec![0.0; n];
        let mut inv_denom = vec![0.0; n];
        let mut prev_c = 0.0;
        for i in 0..n {
            let denom = diag - off * prev_c;
            if denom.abs() <= f64::EPSILON * diag.abs() {
                return Err(BandedError::SingularPivot { row: i, pivot: denom });
            }
            inv_denom[i] = 1.0 / denom;
            c_prime[i] = off * inv_denom[i];
            prev_c = c_prime[i];
        }
        Ok(Self { off, c_prime, inv_denom })
    }

    pub fn len(&self) -> usize {
        self.c_prime.len()
    }

    pub fn is_empty(&self) -> bool {
        self.c_prime.is_empty()
    }

    pub fn solve_in_place(&self, rhs: &mut [f64]) -> Result<(), BandedError> {
        let n = self.len();
        if rhs.len() != n {
            return Err(BandedError::LengthMismatch { expected: n, got: rhs.len() });
        }
        let mut prev = 0.0;
        for i in 0..n {
            rhs[i] = (rhs[i] - self.off * prev) * self.inv_denom[i];
            prev = rhs[i];
        }
        for i in (0..n.saturating_sub(1)).rev() {
            rhs[i] -= self.c_prime[i] * rhs[i + 1];
        }
        Ok(())
    }
}

/// Square banded matrix with equal lower/upper bandwidth, row-major band
/// storage: entry `(i, j)` lives at `rows[i][j + p - i]`.
#[derive(Debug, Clone)]
pub struct BandedMatrix {
    n: usize,
    p: usize,
    data: Vec<f64>,
}

impl BandedMatrix {
    pub fn zeros(n: usize, bandwidth: usize) -> Self {
        Self { n, p: bandwidth, data: vec![0.0; n * (2 * bandwidth + 1)] }
    }

    pub fn size(&self) -> usize {
        self.n
    }

    pub fn bandwidth(&self) -> usize {
        self.p
    }

    #[inline]
    fn idx(&self, i: usize, j: usize) -> usize {
        debug_assert!(i.abs_diff(j) <= self.p);
        i * (2 * self.p + 1) + (j + self.p - i)
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        if i.abs_diff(j) > self.p || i >= self.n || j >= self.n {
            0.0
        } else {
            self.data[self.idx(i, j)]
        }
    }

    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let k = self.idx(i, j);
        self.data[k] += v;
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n)
            .map(|i| {
                let lo = i.saturating_sub(self.p);
                let hi = (i + self.p).min(self.n - 1);
                (lo..=hi).map(|j| self.data[self.idx(i, j)] * x[j]).sum()
            })
            .collect()
    }

    /// Doolittle LU in band storage. No pivoting: the systems assembled by
    /// the integrator are diagonally dominant or SPD.
    pub fn factor(mut self) -> Result<BandedLu, BandedError> {
        let (n, p) = (self.n, self.p);
        let scale = self.data.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        for k in 0..n {
            let pivot = self.data[self.idx(k, k)];
            if !pivot.is_finite() || pivot.abs() <= 1e3 * f64::EPSILON * scale {
                return Err(BandedError::SingularPivot { row: k, pivot });
            }
            let last = (k + p).min(n - 1);
            for i in (k + 1)..=last {
                let ik = self.idx(i, k);
                let l = self.data[ik] / pivot;
                self.data[ik] = l;
                for j in (k + 1)..=last {
                    let kj = self.idx(k, j);
                    let ij = self.idx(i, j);
                    self.data[ij] -= l * self.data[kj];
                }
            }
        }
        Ok(BandedLu { lu: self })
    }
}

#[derive(Debug, Clone)]
pub struct BandedLu {
    lu: BandedMatrix,
}

impl BandedLu {
    pub fn size(&self) -> usize {
        self.lu.n
    }

    pub fn solve_in_place(&self, rhs: &mut [f64]) -> Result<(), BandedError> {
        let (n, p) = (self.lu.n, self.lu.p);
        if rhs.len() != n {
            return Err(BandedError::LengthMismatch { expected: n, got: rhs.len() });
        }
        for i in 0..n {
            let lo = i.saturating_sub(p);
            let mut acc = rhs[i];
            for j in lo..i {
                acc -= self.lu.data[self.lu.idx(i, j)] * rhs[j];
            }
            rhs[i] = acc;
        }
        for i in (0..n).rev() {
            let hi = (i + p).min(n - 1);
            let mut acc = rhs[i];
            for j in (i + 1)..=hi {
                acc -= self.lu.data[self.lu.idx(i, j)] * rhs[j];
            }
            rhs[i] = acc / self.lu.data[self.lu.idx(i, i)];
        }
        Ok(())
    }
}
