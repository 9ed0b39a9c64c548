//! Dense factorizations shared by the teacher, student and solver modules.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen, LU};

use crate::error::{Error, Result};
use crate::scalar::{lit, to_f64, Real};

/// Replaces `m` with `(m + mᵀ)/2`.
pub(crate) fn symmetrize<T: Real>(m: &mut DMatrix<T>) {
    let n = m.nrows();
    let half = lit::<T>(0.5);
    for i in 0..n {
        for j in (i + 1)..n {
            let v = (m[(i, j)] + m[(j, i)]) * half;
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

/// 2-norm condition number via singular values; only used on failure paths.
pub(crate) fn condition_estimate<T: Real>(m: &DMatrix<T>) -> f64 {
    if m.is_empty() {
        return f64::NAN;
    }
    let sv = m.clone().singular_values();
    let max = sv.iter().fold(0.0_f64, |a, &s| a.max(to_f64(s)));
    let min = sv.iter().fold(f64::INFINITY, |a, &s| a.min(to_f64(s)));
    if min == 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Cholesky factor of a symmetric positive-definite matrix.
pub(crate) struct SpdFactor<T: Real> {
    chol: Cholesky<T, Dyn>,
}

impl<T: Real> SpdFactor<T> {
    /// Factorizes `a`; fails with a condition estimate when `a` is not PD.
    pub(crate) fn new(a: DMatrix<T>, context: &'static str) -> Result<Self> {
        match Cholesky::new(a.clone()) {
            Some(chol) => Ok(Self { chol }),
            None => Err(Error::Numerical {
                context,
                detail: "matrix is not numerically positive definite".into(),
                condition: Some(condition_estimate(&a)),
            }),
        }
    }

    /// Like [`SpdFactor::new`] but retries once with `1e-12·trace/n` added to
    /// the diagonal.
    pub(crate) fn with_jitter(a: DMatrix<T>, context: &'static str) -> Result<Self> {
        if let Some(chol) = Cholesky::new(a.clone()) {
            return Ok(Self { chol });
        }
        let n = a.nrows();
        let jitter = lit::<T>(1e-12) * a.trace() / crate::scalar::from_usize::<T>(n.max(1));
        let mut b = a.clone();
        for i in 0..n {
            b[(i, i)] += jitter;
        }
        match Cholesky::new(b) {
            Some(chol) => Ok(Self { chol }),
            None => Err(Error::Numerical {
                context,
                detail: "matrix is not positive definite even after diagonal jitter".into(),
                condition: Some(condition_estimate(&a)),
            }),
        }
    }

    pub(crate) fn solve_vec(&self, b: &DVector<T>) -> DVector<T> {
        self.chol.solve(b)
    }

    pub(crate) fn solve_mat(&self, b: &DMatrix<T>) -> DMatrix<T> {
        self.chol.solve(b)
    }
}

/// LU factor with partial pivoting of a general square matrix.
pub(crate) struct LuFactor<T: Real> {
    lu: LU<T, Dyn, Dyn>,
}

impl<T: Real> LuFactor<T> {
    /// Factorizes `a`, rejecting matrices whose pivots collapse relative to the
    /// largest pivot (numerically singular).
    pub(crate) fn new(a: DMatrix<T>, context: &'static str) -> Result<Self> {
        let n = a.nrows();
        let lu = LU::new(a.clone());
        let u = lu.u();
        let mut max_p = 0.0_f64;
        let mut min_p = f64::INFINITY;
        for i in 0..n {
            let p = to_f64(u[(i, i)].abs());
            max_p = max_p.max(p);
            min_p = min_p.min(p);
        }
        let eps = to_f64(T::default_epsilon());
        if !(max_p.is_finite() && min_p.is_finite()) || min_p <= eps * max_p {
            return Err(Error::Numerical {
                context,
                detail: "matrix is numerically singular".into(),
                condition: Some(condition_estimate(&a)),
            });
        }
        Ok(Self { lu })
    }

    pub(crate) fn solve_vec(&self, b: &DVector<T>) -> DVector<T> {
        self.lu.solve(b).expect("pivots checked at factorization")
    }

    pub(crate) fn solve_mat(&self, b: &DMatrix<T>) -> DMatrix<T> {
        self.lu.solve(b).expect("pivots checked at factorization")
    }
}

/// Eigenvalues of a symmetric matrix, sorted in decreasing order.
pub(crate) fn sym_eigenvalues_desc<T: Real>(m: &DMatrix<T>) -> Vec<T> {
    let mut ev: Vec<T> = SymmetricEigen::new(m.clone()).eigenvalues.iter().copied().collect();
    ev.sort_by(|a, b| b.partial_cmp(a).unwrap_or(std::cmp::Ordering::Equal));
    ev
}

/// `tr(Xᵀ C X)` computed as `Σ_ij X_ij (C X)_ij`.
pub(crate) fn quad_trace<T: Real>(x: &DMatrix<T>, c: &DMatrix<T>) -> T {
    let cx = c * x;
    x.component_mul(&cx).sum()
}

pub(crate) fn with_diagonal_shift<T: Real>(a: &DMatrix<T>, shift: T) -> DMatrix<T> {
    let mut b = a.clone();
    for i in 0..b.nrows().min(b.ncols()) {
        b[(i, i)] += shift;
    }
    b
}
