//! RKHS student in representer form `f_θ = Σ_j θ_j k̃(·, x̃_j)` with penalty
//! `(γm/2)‖f‖²_H`.

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::kernels::{cross_kernel, GramSet, KernelSpec};
use crate::linalg::{with_diagonal_shift, SpdFactor};
use crate::scalar::{from_usize, lit, Real};

#[derive(Debug, Clone, PartialEq)]
pub struct StudentConfig<T: Real> {
    pub gamma: T,
    pub kernel: KernelSpec<T>,
}

impl<T: Real> StudentConfig<T> {
    pub fn new(gamma: T, kernel: KernelSpec<T>) -> Result<Self> {
        if !(gamma >= T::zero()) {
            return Err(Error::invalid("student gamma must be non-negative"));
        }
        Ok(Self { gamma, kernel })
    }
}

/// Representer coefficients over the target set.
#[derive(Debug, Clone, PartialEq)]
pub struct StudentWeights<T: Real> {
    pub theta: DVector<T>,
}

impl<T: Real> StudentWeights<T> {
    pub fn new(theta: DVector<T>) -> Result<Self> {
        if theta.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical {
                context: "student weights",
                detail: "non-finite coefficient".into(),
                condition: None,
            });
        }
        Ok(Self { theta })
    }

    pub fn zeros(m: usize) -> Self {
        Self { theta: DVector::zeros(m) }
    }

    pub fn len(&self) -> usize {
        self.theta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.theta.is_empty()
    }

    /// Fitted values `K̃_mm θ` on the target set.
    pub fn fitted(&self, gram: &GramSet<T>) -> DVector<T> {
        &gram.kt_mm * &self.theta
    }

    /// Predictions `K̃_nm θ` at the source points.
    pub fn at_source(&self, gram: &GramSet<T>) -> DVector<T> {
        &gram.kt_nm * &self.theta
    }
}

/// Factorized proximal map `u ↦ (K̃_mm + mγηI)⁻¹u` for a fixed `γη`.
pub struct ProxOperator<T: Real> {
    factor: SpdFactor<T>,
    m: usize,
    eta: T,
}

impl<T: Real> ProxOperator<T> {
    pub fn new(config: &StudentConfig<T>, gram: &GramSet<T>, eta: T) -> Result<Self> {
        if !(eta > T::zero()) {
            return Err(Error::invalid("prox stepsize must be positive"));
        }
        if !(config.gamma >= T::zero()) {
            return Err(Error::invalid("student gamma must be non-negative"));
        }
        let m = gram.m();
        let shift = from_usize::<T>(m) * config.gamma * eta;
        let factor = SpdFactor::new(with_diagonal_shift(&gram.kt_mm, shift), "student prox (K̃_mm + mγηI)")?;
        Ok(Self { factor, m, eta })
    }

    pub fn eta(&self) -> T {
        self.eta
    }

    pub fn apply(&self, u: &DVector<T>) -> Result<StudentWeights<T>> {
        if u.len() != self.m {
            return Err(Error::dims("prox input", self.m, u.len()));
        }
        StudentWeights::new(self.factor.solve_vec(u))
    }
}

/// `argmin_θ (1/2m)‖K̃θ − u‖² + (γη/2)θᵀK̃θ`; minimizer `(K̃ + mγηI)⁻¹u`.
pub fn prox<T: Real>(
    config: &StudentConfig<T>,
    gram: &GramSet<T>,
    u: &DVector<T>,
    eta: T,
) -> Result<StudentWeights<T>> {
    ProxOperator::new(config, gram, eta)?.apply(u)
}

/// Evaluates `f_θ` at arbitrary query points.
pub fn predict<T: Real>(
    weights: &StudentWeights<T>,
    kernel: &KernelSpec<T>,
    target_x: &[Vec<T>],
    queries: &[Vec<T>],
) -> Result<DVector<T>> {
    if weights.len() != target_x.len() {
        return Err(Error::dims("student weights", target_x.len(), weights.len()));
    }
    if queries.is_empty() {
        return Ok(DVector::zeros(0));
    }
    Ok(cross_kernel(kernel, queries, target_x)? * &weights.theta)
}

/// `‖f_θ‖_H = √(θᵀK̃_mm θ)`.
pub fn hilbert_norm<T: Real>(weights: &StudentWeights<T>, gram: &GramSet<T>) -> Result<T> {
    if weights.len() != gram.m() {
        return Err(Error::dims("student weights", gram.m(), weights.len()));
    }
    let q = weights.theta.dot(&(&gram.kt_mm * &weights.theta));
    let scale = gram.kt_mm.norm() * weights.theta.norm_squared();
    if q < -lit::<T>(1e-10) * scale {
        return Err(Error::Numerical {
            context: "hilbert norm",
            detail: "negative quadratic form; student Gram is not PSD".into(),
            condition: None,
        });
    }
    Ok(q.max(T::zero()).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::DMatrix;

    fn gram_with(kt: DMatrix<f64>) -> GramSet<f64> {
        GramSet {
            k_nn: kt.clone(),
            k_mn: kt.clone(),
            kt_nm: kt.clone(),
            kt_mm: kt,
            teacher_kernel: KernelSpec::gaussian(1.0).unwrap(),
            student_kernel: KernelSpec::gaussian(1.0).unwrap(),
        }
    }

    fn cfg(gamma: f64) -> StudentConfig<f64> {
        StudentConfig::new(gamma, KernelSpec::gaussian(1.0).unwrap()).unwrap()
    }

    // Golden-section minimization of a 1-D convex function.
    fn golden(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
        let r = (5f64.sqrt() - 1.0) / 2.0;
        for _ in 0..200 {
            let c = b - r * (b - a);
            let d = a + r * (b - a);
            if f(c) < f(d) {
                b = d;
            } else {
                a = c;
            }
        }
        (a + b) / 2.0
    }

    #[test]
    fn prox_scalar_matches_direct_minimization() {
        let g = gram_with(DMatrix::from_element(1, 1, 2.0));
        let w = prox(&cfg(1.0), &g, &DVector::from_element(1, 4.0), 1.0).unwrap();
        assert_relative_eq!(w.theta[0], 4.0 / 3.0, epsilon = 1e-14);
        assert_relative_eq!(w.fitted(&g)[0], 8.0 / 3.0, epsilon = 1e-14);
        let obj = |t: f64| 0.5 * (2.0 * t - 4.0).powi(2) + 0.5 * 2.0 * t * t;
        // Golden section resolves a minimizer only to about √ε_mach.
        assert_relative_eq!(golden(obj, -10.0, 10.0), w.theta[0], epsilon = 1e-6);
    }

    #[test]
    fn prox_interpolates_at_zero_gamma() {
        let kt = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        let g = gram_with(kt);
        let u = DVector::from_vec(vec![1.0, -3.0]);
        let w = prox(&cfg(0.0), &g, &u, 1.0).unwrap();
        assert!((w.fitted(&g) - &u).amax() < 1e-12);
        let w0 = prox(&cfg(0.7), &g, &DVector::zeros(2), 0.3).unwrap();
        assert_eq!(w0.theta, DVector::zeros(2));
    }

    #[test]
    fn prox_rejects_singular_unpenalized() {
        let g = gram_with(DMatrix::from_element(2, 2, 1.0));
        assert!(matches!(prox(&cfg(0.0), &g, &DVector::zeros(2), 1.0), Err(Error::Numerical { .. })));
        assert!(prox(&cfg(1.0), &g, &DVector::zeros(2), 0.0).is_err());
    }

    #[test]
    fn prediction_and_norm() {
        let kernel = KernelSpec::gaussian(1.0).unwrap();
        let targets = vec![vec![0.0], vec![1.0]];
        let w = StudentWeights::new(DVector::from_vec(vec![0.5, -1.0])).unwrap();
        let p = predict(&w, &kernel, &targets, &targets).unwrap();
        let e = (-0.5f64).exp();
        assert_relative_eq!(p[0], 0.5 - e, epsilon = 1e-15);
        assert_relative_eq!(p[1], 0.5 * e - 1.0, epsilon = 1e-15);
        let z = StudentWeights::zeros(2);
        assert!(predict(&z, &kernel, &targets, &[vec![3.0]]).unwrap().iter().all(|&v| v == 0.0));

        // k̃(z, x̃₁) = 2 via a linear kernel at x̃₁ = 1, z = 2.
        let lin = KernelSpec::feature_linear(crate::kernels::FeatureMap::identity(1).unwrap());
        let w = StudentWeights::new(DVector::from_element(1, 6.0 / 7.0)).unwrap();
        let p = predict(&w, &lin, &[vec![1.0]], &[vec![2.0]]).unwrap();
        assert_relative_eq!(p[0], 12.0 / 7.0, epsilon = 1e-15);

        let g = gram_with(DMatrix::from_element(1, 1, 4.0));
        let w = StudentWeights::new(DVector::from_element(1, 0.5)).unwrap();
        assert_relative_eq!(hilbert_norm(&w, &g).unwrap(), 1.0, epsilon = 1e-15);
        let g = gram_with(DMatrix::identity(3, 3));
        let w = StudentWeights::new(DVector::from_vec(vec![3.0, 0.0, 4.0])).unwrap();
        assert_relative_eq!(hilbert_norm(&w, &g).unwrap(), 5.0, epsilon = 1e-15);
        assert_eq!(hilbert_norm(&StudentWeights::zeros(3), &g).unwrap(), 0.0);
        let bad = gram_with(-DMatrix::identity(3, 3));
        assert!(hilbert_norm(&w, &bad).is_err());
    }
}
