//! Small dense / tridiagonal linear algebra used by the time steppers.
//!
//! Spaces here are tiny (n ≤ 2000 by design), so a row-major dense matrix
//! with LU and a Thomas solver for path graphs cover every need.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Row-major dense matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct Mat<T> {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<T>,
}

impl<T: Scalar> Mat<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![T::zero(); rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = T::one();
        }
        m
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [T] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn matvec(&self, x: &[T]) -> Vec<T> {
        assert_eq!(x.len(), self.cols);
        (0..self.rows)
            .map(|i| self.row(i).iter().zip(x).map(|(&a, &b)| a * b).sum())
            .collect()
    }

    /// `self^T * x` without forming the transpose.
    pub fn matvec_transpose(&self, x: &[T]) -> Vec<T> {
        assert_eq!(x.len(), self.rows);
        let mut out = vec![T::zero(); self.cols];
        for i in 0..self.rows {
            let xi = x[i];
            for (o, &a) in out.iter_mut().zip(self.row(i)) {
                *o = *o + a * xi;
            }
        }
        out
    }

    pub fn matmul(&self, rhs: &Mat<T>) -> Mat<T> {
        assert_eq!(self.cols, rhs.rows);
        let mut out = Mat::zeros(self.rows, rhs.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == T::zero() {
                    continue;
                }
                let rrow = rhs.row(k);
                let orow = out.row_mut(i);
                for (o, &b) in orow.iter_mut().zip(rrow) {
                    *o = *o + a * b;
                }
            }
        }
        out
    }

    pub fn max_abs_diff(&self, other: &Mat<T>) -> T {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| (a - b).abs())
            .fold(T::zero(), T::max)
    }
}

impl<T> std::ops::Index<(usize, usize)> for Mat<T> {
    type Output = T;
    fn index(&self, (i, j): (usize, usize)) -> &T {
        &self.data[i * self.cols + j]
    }
}

impl<T> std::ops::IndexMut<(usize, usize)> for Mat<T> {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut T {
        &mut self.data[i * self.cols + j]
    }
}

/// Dense LU factorization with partial pivoting.
pub struct DenseLu<T> {
    lu: Mat<T>,
    perm: Vec<usize>,
}

impl<T: Scalar> DenseLu<T> {
    pub fn factor(mut a: Mat<T>) -> Result<Self> {
        assert_eq!(a.rows, a.cols);
        let n = a.rows;
        let mut perm: Vec<usize> = (0..n).collect();
        for k in 0..n {
            let mut p = k;
            let mut best = a[(k, k)].abs();
            for i in k + 1..n {
                let v = a[(i, k)].abs();
                if v > best {
                    best = v;
                    p = i;
                }
            }
            if best == T::zero() {
                return Err(Error::NumericalFailure("singular matrix in LU".into()));
            }
            if p != k {
                perm.swap(k, p);
                for j in 0..n {
                    let tmp = a[(k, j)];
                    a[(k, j)] = a[(p, j)];
                    a[(p, j)] = tmp;
                }
            }
            let piv = a[(k, k)];
            for i in k + 1..n {
                let m = a[(i, k)] / piv;
                a[(i, k)] = m;
                if m != T::zero() {
                    for j in k + 1..n {
                        let akj = a[(k, j)];
                        a[(i, j)] = a[(i, j)] - m * akj;
                    }
                }
            }
        }
        Ok(Self { lu: a, perm })
    }

    /// Solve `A x = b`.
    pub fn solve(&self, b: &[T]) -> Vec<T> {
        let n = self.lu.rows;
        let mut x: Vec<T> = self.perm.iter().map(|&p| b[p]).collect();
        // forward: L y = P b
        for i in 1..n {
            let mut s = x[i];
            for j in 0..i {
                s = s - self.lu[(i, j)] * x[j];
            }
            x[i] = s;
        }
        // backward: U x = y
        for i in (0..n).rev() {
            let mut s = x[i];
            for j in i + 1..n {
                s = s - self.lu[(i, j)] * x[j];
            }
            x[i] = s / self.lu[(i, i)];
        }
        x
    }

    /// Solve `A^T x = b` using the same factorization.
    pub fn solve_transpose(&self, b: &[T]) -> Vec<T> {
        let n = self.lu.rows;
        let mut y = b.to_vec();
        // U^T z = b (lower triangular)
        for i in 0..n {
            let mut s = y[i];
            for j in 0..i {
                s = s - self.lu[(j, i)] * y[j];
            }
            y[i] = s / self.lu[(i, i)];
        }
        // L^T w = z (upper triangular, unit diagonal)
        for i in (0..n).rev() {
            let mut s = y[i];
            for j in i + 1..n {
                s = s - self.lu[(j, i)] * y[j];
            }
            y[i] = s;
        }
        // x = P^T w
        let mut x = vec![T::zero(); n];
        for (k, &p) in self.perm.iter().enumerate() {
            x[p] = y[k];
        }
        x
    }
}

/// Prefactored tridiagonal system (no pivoting; callers guarantee diagonal
/// dominance).
pub struct TridiagFactor<T> {
    /// multipliers l_i = sub_i / u_{i-1}
    mult: Vec<T>,
    /// modified diagonal
    diag: Vec<T>,
    /// original superdiagonal
    sup: Vec<T>,
}

impl<T: Scalar> TridiagFactor<T> {
    /// `sub` has length n-1 (entry i couples row i+1 to i), `diag` length n,
    /// `sup` length n-1.
    pub fn factor(sub: &[T], diag: &[T], sup: &[T]) -> Result<Self> {
        let n = diag.len();
        assert_eq!(sub.len(), n - 1);
        assert_eq!(sup.len(), n - 1);
        let mut mult = vec![T::zero(); n - 1];
        let mut d = diag.to_vec();
        for i in 0..n - 1 {
            if d[i] == T::zero() {
                return Err(Error::NumericalFailure("zero pivot in Thomas solve".into()));
            }
            let m = sub[i] / d[i];
            mult[i] = m;
            d[i + 1] = d[i + 1] - m * sup[i];
        }
        if d[n - 1] == T::zero() {
            return Err(Error::NumericalFailure("zero pivot in Thomas solve".into()));
        }
        Ok(Self { mult, diag: d, sup: sup.to_vec() })
    }

    pub fn solve(&self, b: &[T]) -> Vec<T> {
        let n = self.diag.len();
        let mut x = b.to_vec();
        for i in 0..n - 1 {
            let m = self.mult[i];
            let xi = x[i];
            x[i + 1] = x[i + 1] - m * xi;
        }
        x[n - 1] = x[n - 1] / self.diag[n - 1];
        for i in (0..n - 1).rev() {
            x[i] = (x[i] - self.sup[i] * x[i + 1]) / self.diag[i];
        }
        x
    }
}

/// A factorized `A`, picked by sparsity structure.
pub enum Factorized<T> {
    Tridiag {
        fwd: TridiagFactor<T>,
        /// factorization of `A^T` for dual flows
        trans: TridiagFactor<T>,
    },
    Dense(DenseLu<T>),
}

impl<T: Scalar> Factorized<T> {
    pub fn from_tridiag(sub: &[T], diag: &[T], sup: &[T]) -> Result<Self> {
        Ok(Factorized::Tridiag {
            fwd: TridiagFactor::factor(sub, diag, sup)?,
            trans: TridiagFactor::factor(sup, diag, sub)?,
        })
    }

    pub fn solve(&self, b: &[T]) -> Vec<T> {
        match self {
            Factorized::Tridiag { fwd, .. } => fwd.solve(b),
            Factorized::Dense(lu) => lu.solve(b),
        }
    }

    pub fn solve_transpose(&self, b: &[T]) -> Vec<T> {
        match self {
            Factorized::Tridiag { trans, .. } => trans.solve(b),
            Factorized::Dense(lu) => lu.solve_transpose(b),
        }
    }
}
