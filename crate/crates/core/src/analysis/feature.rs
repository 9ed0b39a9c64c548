//! Bias and variance in feature space, for teacher and student sharing a
//! feature-linear kernel with moments `Σ` (source) and `Σ̃` (target).
//!
//! With `Σ_λ = Σ + λI`, `P = ΣΣ_λ⁻¹`, `M = Σ̃P + γI` and `Σ̃_γ = Σ̃ + γI`:
//!
//! * RaT bias `γM⁻¹v*`, noise map `M⁻¹Σ̃Σ_λ⁻¹Φᵀ/n`;
//! * SM bias `(λΣ_λ⁻¹ + γΣ̃_γ⁻¹P)v*`, noise map `Σ̃_γ⁻¹Σ̃Σ_λ⁻¹Φᵀ/n`;
//!
//! errors are measured in the `Σ̃` norm.

use nalgebra::{DMatrix, DVector};

use super::mse::{Estimator, MseReport};
use crate::error::{Error, Result};
use crate::kernels::SecondMoments;
use crate::linalg::{with_diagonal_shift, LuFactor, SpdFactor};
use crate::scalar::{from_usize, Real};

struct Resolvents<T: Real> {
    sigma_til: DMatrix<T>,
    /// `ΣΣ_λ⁻¹`.
    p: DMatrix<T>,
    /// `λΣ_λ⁻¹`.
    lam_res: DMatrix<T>,
    /// `Σ_λ⁻¹ΣΣ_λ⁻¹`.
    s: DMatrix<T>,
}

fn resolvents<T: Real>(moments: &SecondMoments<T>, lambda: T) -> Result<Resolvents<T>> {
    if !(lambda >= T::zero()) {
        return Err(Error::invalid("teacher lambda must be non-negative"));
    }
    let d = moments.dim();
    let f = SpdFactor::new(with_diagonal_shift(&moments.sigma, lambda), "feature moments (Σ + λI)")?;
    // Σ_λ⁻¹Σ = ΣΣ_λ⁻¹ since both are functions of Σ.
    let p = f.solve_mat(&moments.sigma);
    let lam_res = DMatrix::identity(d, d) - &p;
    let s = f.solve_mat(&f.solve_mat(&moments.sigma).transpose());
    Ok(Resolvents { sigma_til: moments.sigma_til.clone(), p, lam_res, s })
}

fn sigma_quad<T: Real>(sigma_til: &DMatrix<T>, v: &DVector<T>) -> T {
    v.dot(&(sigma_til * v)).max(T::zero())
}

fn check_dims<T: Real>(moments: &SecondMoments<T>, v: &DVector<T>, n: usize) -> Result<()> {
    if v.len() != moments.dim() {
        return Err(Error::dims("feature truth", moments.dim(), v.len()));
    }
    if n == 0 {
        return Err(Error::invalid("source size must be positive"));
    }
    Ok(())
}

/// RaT bias² and variance from commuting feature moments.
pub fn feature_mse_rat<T: Real>(
    moments: &SecondMoments<T>,
    lambda: T,
    gamma: T,
    v_star: &DVector<T>,
    sigma2: T,
    n: usize,
) -> Result<MseReport<T>> {
    if !moments.shared_eigenbasis {
        return Err(Error::invalid("feature-space RaT formula requires commuting source and target moments"));
    }
    check_dims(moments, v_star, n)?;
    let r = resolvents(moments, lambda)?;
    let mmat = with_diagonal_shift(&(&r.sigma_til * &r.p), gamma);
    let lu = LuFactor::new(mmat, "feature RaT (Σ̃ΣΣ_λ⁻¹ + γI)")?;
    let mv = lu.solve_vec(v_star);
    let bias_sq = gamma * gamma * sigma_quad(&r.sigma_til, &mv);
    // Tr(Σ̃ M⁻¹ Σ̃ ΣΣ_λ⁻² Σ̃ M⁻¹), valid when everything commutes.
    let st = &r.sigma_til;
    // Cyclic form Tr(M⁻¹ W M⁻¹Σ̃) with W = Σ̃SΣ̃.
    let w = st * &r.s * st;
    let u = lu.solve_mat(st);
    let variance = lu.solve_mat(&(w * u)).trace() * sigma2 / from_usize::<T>(n);
    Ok(MseReport::new(bias_sq, variance.max(T::zero()), Estimator::Rat))
}

/// Squared soft-matching bias `‖Σ̃^{1/2}(λΣ_λ⁻¹ + γΣ̃_γ⁻¹ΣΣ_λ⁻¹)v*‖²`.
pub fn feature_bias_sm<T: Real>(moments: &SecondMoments<T>, lambda: T, gamma: T, v_star: &DVector<T>) -> Result<T> {
    check_dims(moments, v_star, 1)?;
    let r = resolvents(moments, lambda)?;
    Ok(sigma_quad(&r.sigma_til, &sm_bias_vector(&r, gamma, v_star)?))
}

fn sm_bias_vector<T: Real>(r: &Resolvents<T>, gamma: T, v: &DVector<T>) -> Result<DVector<T>> {
    let lam_part = &r.lam_res * v;
    if gamma == T::zero() {
        return Ok(lam_part);
    }
    let f = SpdFactor::new(with_diagonal_shift(&r.sigma_til, gamma), "feature SM (Σ̃ + γI)")?;
    Ok(lam_part + f.solve_vec(&(&r.p * v)) * gamma)
}

/// Feature-space MSE for general (possibly non-commuting) moments.
pub struct FeatureMse<T: Real> {
    r: Resolvents<T>,
    v: DVector<T>,
    sigma2: T,
    n: usize,
}

impl<T: Real> FeatureMse<T> {
    pub fn new(moments: &SecondMoments<T>, lambda: T, v_star: DVector<T>, sigma2: T, n: usize) -> Result<Self> {
        check_dims(moments, &v_star, n)?;
        Ok(Self { r: resolvents(moments, lambda)?, v: v_star, sigma2, n })
    }

    pub fn evaluate(&self, estimator: Estimator, gamma: T) -> Result<MseReport<T>> {
        match estimator {
            Estimator::Rat => self.rat(gamma),
            Estimator::Sm => self.sm(gamma),
        }
    }

    /// Bias `γ²v*ᵀM⁻ᵀΣ̃M⁻¹v*`, variance `σ²/n·Tr(Σ̃M⁻¹Σ̃SΣ̃M⁻ᵀ)`.
    pub fn rat(&self, gamma: T) -> Result<MseReport<T>> {
        let st = &self.r.sigma_til;
        let mmat = with_diagonal_shift(&(st * &self.r.p), gamma);
        let lu = LuFactor::new(mmat, "feature RaT (Σ̃ΣΣ_λ⁻¹ + γI)")?;
        let bias_sq = gamma * gamma * sigma_quad(st, &lu.solve_vec(&self.v));
        // N = M⁻¹Σ̃; variance ∝ Tr(Σ̃ N S Nᵀ).
        let nmat = lu.solve_mat(st);
        let variance = (st * &nmat * &self.r.s * nmat.transpose()).trace() * self.sigma2 / from_usize::<T>(self.n);
        Ok(MseReport::new(bias_sq, variance.max(T::zero()), Estimator::Rat))
    }

    pub fn sm(&self, gamma: T) -> Result<MseReport<T>> {
        let st = &self.r.sigma_til;
        let bias_sq = sigma_quad(st, &sm_bias_vector(&self.r, gamma, &self.v)?);
        let f = SpdFactor::new(with_diagonal_shift(st, gamma), "feature SM (Σ̃ + γI)")?;
        let nmat = f.solve_mat(st);
        let variance = (st * &nmat * &self.r.s * nmat.transpose()).trace() * self.sigma2 / from_usize::<T>(self.n);
        Ok(MseReport::new(bias_sq, variance.max(T::zero()), Estimator::Sm))
    }
}

/// Closed forms when both moments are diagonal in one basis, with source
/// eigenvalues `μ_k`, target eigenvalues `μ̃_k` and truth coordinates `v_k`.
#[derive(Debug, Clone)]
pub struct SpectralMse<T: Real> {
    pub mu: Vec<T>,
    pub mu_til: Vec<T>,
    pub v: Vec<T>,
    pub lambda: T,
    pub sigma2: T,
    pub n: usize,
}

impl<T: Real> SpectralMse<T> {
    pub fn new(mu: Vec<T>, mu_til: Vec<T>, v: Vec<T>, lambda: T, sigma2: T, n: usize) -> Result<Self> {
        if mu.len() != mu_til.len() || mu.len() != v.len() {
            return Err(Error::dims("spectral mse", mu.len(), mu_til.len().max(v.len())));
        }
        if !(lambda > T::zero()) || !(sigma2 >= T::zero()) || n == 0 {
            return Err(Error::invalid("spectral mse needs lambda > 0, sigma2 >= 0, n > 0"));
        }
        Ok(Self { mu, mu_til, v, lambda, sigma2, n })
    }

    pub fn evaluate(&self, estimator: Estimator, gamma: T) -> MseReport<T> {
        match estimator {
            Estimator::Rat => self.rat(gamma),
            Estimator::Sm => self.sm(gamma),
        }
    }

    pub fn rat(&self, gamma: T) -> MseReport<T> {
        let (mut b, mut var) = (T::zero(), T::zero());
        for k in 0..self.mu.len() {
            let (mu, mt, v) = (self.mu[k], self.mu_til[k], self.v[k]);
            let r = mu / (mu + self.lambda);
            let a = mt * r;
            let den = (a + gamma) * (a + gamma);
            b += gamma * gamma * mt * v * v / den;
            var += mt * mt * mt * mu / ((mu + self.lambda) * (mu + self.lambda)) / den;
        }
        MseReport::new(b, self.sigma2 * var / from_usize::<T>(self.n), Estimator::Rat)
    }

    pub fn sm(&self, gamma: T) -> MseReport<T> {
        let (mut b, mut var) = (T::zero(), T::zero());
        for k in 0..self.mu.len() {
            let (mu, mt, v) = (self.mu[k], self.mu_til[k], self.v[k]);
            let r = mu / (mu + self.lambda);
            let coef = self.lambda / (mu + self.lambda) + gamma / (mt + gamma) * r;
            b += mt * coef * coef * v * v;
            let s = mt / (mt + gamma);
            var += mu / ((mu + self.lambda) * (mu + self.lambda)) * mt * s * s;
        }
        MseReport::new(b, self.sigma2 * var / from_usize::<T>(self.n), Estimator::Sm)
    }
}
