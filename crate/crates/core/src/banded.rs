//! Symmetric pentadiagonal matrices and their LDLᵀ factorization.
//!
//! Storage is by diagonals: `diag[i] = A[i][i]`, `off1[i] = A[i+1][i]`,
//! `off2[i] = A[i+2][i]`.

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct SymmetricPentadiagonal {
    pub diag: Vec<f64>,
    pub off1: Vec<f64>,
    pub off2: Vec<f64>,
}

impl SymmetricPentadiagonal {
    pub fn new(diag: Vec<f64>, off1: Vec<f64>, off2: Vec<f64>) -> Self {
        let n = diag.len();
        assert_eq!(off1.len(), n.saturating_sub(1), "first off-diagonal length");
        assert_eq!(off2.len(), n.saturating_sub(2), "second off-diagonal length");
        Self { diag, off1, off2 }
    }

    pub fn dim(&self) -> usize {
        self.diag.len()
    }

    /// `y = A x`.
    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let n = self.dim();
        assert_eq!(x.len(), n);
        let mut y = vec![0.0; n];
        for i in 0..n {
            let mut s = self.diag[i] * x[i];
            if i >= 1 {
                s += self.off1[i - 1] * x[i - 1];
            }
            if i >= 2 {
                s += self.off2[i - 2] * x[i - 2];
            }
            if i + 1 < n {
                s += self.off1[i] * x[i + 1];
            }
            if i + 2 < n {
                s += self.off2[i] * x[i + 2];
            }
            y[i] = s;
        }
        y
    }

    /// Entry `A[i][j]`, zero outside the band.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (lo, hi) = if i <= j { (i, j) } else { (j, i) };
        match hi - lo {
            0 => self.diag[lo],
            1 => self.off1[lo],
            2 => self.off2[lo],
            _ => 0.0,
        }
    }

    /// Factors `A = L D Lᵀ`. Fails unless every pivot is positive.
    pub fn factor(&self) -> Result<LdlFactor> {
        let n = self.dim();
        let mut d = vec![0.0; n];
        // l1[i] = L[i][i-1], l2[i] = L[i][i-2]
        let mut l1 = vec![0.0; n];
        let mut l2 = vec![0.0; n];
        for i in 0..n {
            let mut di = self.diag[i];
            if i >= 1 {
                di -= l1[i] * l1[i] * d[i - 1];
            }
            if i >= 2 {
                di -= l2[i] * l2[i] * d[i - 2];
            }
            if !(di > 0.0 && di.is_finite()) {
                return Err(Error::InternalSolverFailure(format!(
                    "non-positive pivot {di:e} at row {i} of a {n}x{n} banded system"
                )));
            }
            d[i] = di;
            if i + 2 < n {
                l2[i + 2] = self.off2[i] / di;
            }
            if i + 1 < n {
                let mut e = self.off1[i];
                if i >= 1 {
                    e -= l2[i + 1] * l1[i] * d[i - 1];
                }
                l1[i + 1] = e / di;
            }
        }
        Ok(LdlFactor { d, l1, l2 })
    }
}

#[derive(Clone, Debug)]
pub struct LdlFactor {
    d: Vec<f64>,
    l1: Vec<f64>,
    l2: Vec<f64>,
}

impl LdlFactor {
    pub fn dim(&self) -> usize {
        self.d.len()
    }

    /// Overwrites `b` with `A⁻¹ b`.
    pub fn solve_in_place(&self, b: &mut [f64]) {
        let n = self.dim();
        assert_eq!(b.len(), n);
        for i in 0..n {
            let mut z = b[i];
            if i >= 1 {
                z -= self.l1[i] * b[i - 1];
            }
            if i >= 2 {
                z -= self.l2[i] * b[i - 2];
            }
            b[i] = z;
        }
        for i in 0..n {
            b[i] /= self.d[i];
        }
        for i in (0..n).rev() {
            let mut x = b[i];
            if i + 1 < n {
                x -= self.l1[i + 1] * b[i + 1];
            }
            if i + 2 < n {
                x -= self.l2[i + 2] * b[i + 2];
            }
            b[i] = x;
        }
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut x = b.to_vec();
        self.solve_in_place(&mut x);
        x
    }
}
