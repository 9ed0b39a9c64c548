use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg::{sym_eigenvalues_desc, symmetrize};
use crate::scalar::{from_usize, lit, Real};
use crate::teacher::TeacherOperator;

/// Power-law fit `σ_j ≍ j^(−2α)` of a spectrum.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EigendecayFit<T: Real> {
    pub alpha: T,
    /// Root-mean-square residual of the log–log regression.
    pub residual: T,
    /// Eigenvalues that entered the fit.
    pub used: usize,
}

/// Ordinary least squares of `log σ_j` on `log j`; `α̂ = −slope/2`.
///
/// Eigenvalues below `1e-12·σ_max` and the last 10% of indices are dropped.
pub fn fit_eigendecay<T: Real>(spectrum: &[T]) -> Result<EigendecayFit<T>> {
    let mut s: Vec<T> = spectrum.to_vec();
    if s.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("spectrum contains non-finite values"));
    }
    s.sort_by(|a, b| b.partial_cmp(a).unwrap_or(std::cmp::Ordering::Equal));
    let keep = s.len() - s.len() / 10;
    let max = s.first().copied().unwrap_or(T::zero());
    let floor = lit::<T>(1e-12) * max;
    let pts: Vec<(T, T)> = s[..keep]
        .iter()
        .enumerate()
        .filter(|(_, &v)| v > floor && v > T::zero())
        .map(|(j, &v)| (from_usize::<T>(j + 1).ln(), v.ln()))
        .collect();
    if pts.len() < 4 {
        return Err(Error::invalid(format!("eigendecay fit needs at least 4 usable eigenvalues, got {}", pts.len())));
    }
    let (slope, _, rms) = ols(&pts);
    Ok(EigendecayFit { alpha: -slope / lit(2.0), residual: rms, used: pts.len() })
}

/// Returns `(slope, intercept, rms residual)`.
pub(crate) fn ols<T: Real>(pts: &[(T, T)]) -> (T, T, T) {
    let k = from_usize::<T>(pts.len());
    let mx = pts.iter().fold(T::zero(), |a, p| a + p.0) / k;
    let my = pts.iter().fold(T::zero(), |a, p| a + p.1) / k;
    let sxy = pts.iter().fold(T::zero(), |a, p| a + (p.0 - mx) * (p.1 - my));
    let sxx = pts.iter().fold(T::zero(), |a, p| a + (p.0 - mx) * (p.0 - mx));
    let slope = if sxx > T::zero() { sxy / sxx } else { T::zero() };
    let intercept = my - slope * mx;
    let ss = pts.iter().fold(T::zero(), |a, p| {
        let r = p.1 - intercept - slope * p.0;
        a + r * r
    });
    (slope, intercept, (ss / k).sqrt())
}

/// `γ = (1/λ)(σ²/(R²n))^(2(α+β)/(2α+1))`.
pub fn optimal_gamma<T: Real>(lambda: T, sigma2: T, radius: T, n: usize, alpha: T, beta: T) -> Result<T> {
    let half = lit::<T>(0.5);
    if !(lambda > T::zero()) {
        return Err(Error::invalid("optimal gamma needs lambda > 0"));
    }
    if !(sigma2 > T::zero()) || !(radius > T::zero()) || n == 0 {
        return Err(Error::invalid("optimal gamma needs sigma2 > 0, R > 0, n > 0"));
    }
    if !(alpha > half) || !(beta > half && beta < half + alpha) {
        return Err(Error::invalid("optimal gamma needs alpha > 1/2 and beta in (1/2, 1/2 + alpha)"));
    }
    let two = lit::<T>(2.0);
    let base = sigma2 / (radius * radius * from_usize::<T>(n));
    Ok(base.powf(two * (alpha + beta) / (two * alpha + T::one())) / lambda)
}

/// Covariance `C = (n/m)TTᵀ` of the teacher-propagated noise.
#[derive(Debug, Clone)]
pub struct NoiseDiagnostics<T: Real> {
    pub c: DMatrix<T>,
    pub opnorm: T,
}

pub fn noise_covariance<T: Real>(teacher: &TeacherOperator<T>) -> NoiseDiagnostics<T> {
    let (m, n) = teacher.dims();
    let t = teacher.matrix();
    let mut c = t * t.transpose() * (from_usize::<T>(n) / from_usize::<T>(m));
    symmetrize(&mut c);
    let opnorm = sym_eigenvalues_desc(&c).first().copied().unwrap_or(T::zero()).max(T::zero());
    NoiseDiagnostics { c, opnorm }
}
