//! Kernels, explicit feature maps, datasets and Gram assembly.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::{sym_eigenvalues_desc, symmetrize};
use crate::scalar::{from_usize, lit, Real};

/// Explicit finite-dimensional feature maps.
#[derive(Debug, Clone, PartialEq)]
pub enum FeatureMap<T: Real> {
    /// Normalized probabilists' Hermite polynomials `He_j(x)/√(j!)`, `j = 0..=degree`,
    /// on scalar covariates.
    Hermite { degree: usize },
    /// Diagonal construction on `n` basis directions. Covariates are encoded
    /// as `[k, domain]` with `k ∈ 1..=n` and `domain` 0 (source) or 1
    /// (target); source point `k` maps to `√n·k^(-α)·e_k` and target point
    /// `k` to `√n·k^(-β)·e_k`.
    Diagonal { alpha: T, beta: T, n: usize },
    /// `φ(x) = x` on `dim`-dimensional covariates (the linear kernel).
    Identity { dim: usize },
}

impl<T: Real> FeatureMap<T> {
    pub fn hermite(degree: usize) -> Result<Self> {
        if degree == 0 {
            return Err(Error::invalid("hermite degree must be positive"));
        }
        Ok(Self::Hermite { degree })
    }

    pub fn diagonal(alpha: T, beta: T, n: usize) -> Result<Self> {
        let half = lit::<T>(0.5);
        if !(alpha > half) {
            return Err(Error::invalid("diagonal map requires alpha > 1/2"));
        }
        if !(beta > half && beta < half + alpha) {
            return Err(Error::invalid("diagonal map requires beta in (1/2, 1/2 + alpha)"));
        }
        if n == 0 {
            return Err(Error::invalid("diagonal map requires n >= 1"));
        }
        Ok(Self::Diagonal { alpha, beta, n })
    }

    pub fn identity(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("identity map requires dim >= 1"));
        }
        Ok(Self::Identity { dim })
    }

    /// Output dimension.
    pub fn dim(&self) -> usize {
        match *self {
            Self::Hermite { degree } => degree + 1,
            Self::Diagonal { n, .. } => n,
            Self::Identity { dim } => dim,
        }
    }

    /// Covariate dimension the map expects.
    pub fn input_dim(&self) -> usize {
        match *self {
            Self::Hermite { .. } => 1,
            Self::Diagonal { .. } => 2,
            Self::Identity { dim } => dim,
        }
    }

    pub fn features(&self, x: &[T]) -> Result<DVector<T>> {
        if x.len() != self.input_dim() {
            return Err(Error::dims("feature map input", self.input_dim(), x.len()));
        }
        match *self {
            Self::Hermite { degree } => Ok(hermite_features(x[0], degree)),
            Self::Diagonal { alpha, beta, n } => {
                let k = x[0];
                let kk = k.to_f64().unwrap_or(f64::NAN);
                if kk.fract() != 0.0 || kk < 1.0 || kk > n as f64 {
                    return Err(Error::invalid(format!("diagonal covariate index must be an integer in 1..={n}")));
                }
                let exponent = match x[1].to_f64() {
                    Some(0.0) => alpha,
                    Some(1.0) => beta,
                    _ => return Err(Error::invalid("diagonal covariate domain must be 0 or 1")),
                };
                let mut v = DVector::zeros(n);
                v[kk as usize - 1] = from_usize::<T>(n).sqrt() * k.powf(-exponent);
                Ok(v)
            }
            Self::Identity { .. } => Ok(DVector::from_column_slice(x)),
        }
    }

    /// Feature matrix with one row per point.
    pub fn feature_matrix(&self, points: &[Vec<T>]) -> Result<DMatrix<T>> {
        let mut phi = DMatrix::zeros(points.len(), self.dim());
        for (i, p) in points.iter().enumerate() {
            phi.set_row(i, &self.features(p)?.transpose());
        }
        Ok(phi)
    }
}

/// `[He_0(x)/√0!, …, He_D(x)/√D!]` via `He_{j+1} = x·He_j − j·He_{j−1}`.
pub fn hermite_features<T: Real>(x: T, degree: usize) -> DVector<T> {
    let mut he = vec![T::zero(); degree + 1];
    he[0] = T::one();
    if degree >= 1 {
        he[1] = x;
    }
    for j in 1..degree {
        he[j + 1] = x * he[j] - from_usize::<T>(j) * he[j - 1];
    }
    let mut fact = T::one();
    let mut out = DVector::zeros(degree + 1);
    for j in 0..=degree {
        if j > 0 {
            fact *= from_usize::<T>(j);
        }
        out[j] = he[j] / fact.sqrt();
    }
    out
}

/// Positive-definite kernels on `R^d`.
#[derive(Debug, Clone, PartialEq)]
pub enum KernelSpec<T: Real> {
    /// `exp(−‖x−y‖²/(2σ²))`.
    Gaussian { bandwidth: T },
    /// `exp(−‖x−y‖/ν)`.
    Laplace { scale: T },
    /// `φ(x)ᵀφ(y)`.
    FeatureLinear(FeatureMap<T>),
}

impl<T: Real> KernelSpec<T> {
    pub fn gaussian(bandwidth: T) -> Result<Self> {
        if !(bandwidth > T::zero()) {
            return Err(Error::invalid("gaussian bandwidth must be positive"));
        }
        Ok(Self::Gaussian { bandwidth })
    }

    pub fn laplace(scale: T) -> Result<Self> {
        if !(scale > T::zero()) {
            return Err(Error::invalid("laplace scale must be positive"));
        }
        Ok(Self::Laplace { scale })
    }

    pub fn feature_linear(map: FeatureMap<T>) -> Self {
        Self::FeatureLinear(map)
    }

    fn validate(&self) -> Result<()> {
        match self {
            Self::Gaussian { bandwidth } if !(*bandwidth > T::zero()) => {
                Err(Error::invalid("gaussian bandwidth must be positive"))
            }
            Self::Laplace { scale } if !(*scale > T::zero()) => Err(Error::invalid("laplace scale must be positive")),
            _ => Ok(()),
        }
    }
}

fn sq_dist<T: Real>(x: &[T], y: &[T]) -> T {
    x.iter().zip(y).fold(T::zero(), |acc, (&a, &b)| acc + (a - b) * (a - b))
}

pub fn eval_kernel<T: Real>(spec: &KernelSpec<T>, x: &[T], y: &[T]) -> Result<T> {
    if x.len() != y.len() {
        return Err(Error::dims("kernel arguments", x.len(), y.len()));
    }
    spec.validate()?;
    Ok(match spec {
        KernelSpec::Gaussian { bandwidth } => (-sq_dist(x, y) / (lit::<T>(2.0) * *bandwidth * *bandwidth)).exp(),
        KernelSpec::Laplace { scale } => (-sq_dist(x, y).sqrt() / *scale).exp(),
        KernelSpec::FeatureLinear(map) => map.features(x)?.dot(&map.features(y)?),
    })
}

/// Source covariates and responses plus unlabeled target covariates.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset<T: Real> {
    source_x: Vec<Vec<T>>,
    source_y: DVector<T>,
    target_x: Vec<Vec<T>>,
}

impl<T: Real> Dataset<T> {
    pub fn new(source_x: Vec<Vec<T>>, source_y: Vec<T>, target_x: Vec<Vec<T>>) -> Result<Self> {
        if source_x.is_empty() {
            return Err(Error::invalid("dataset needs at least one source point"));
        }
        if target_x.is_empty() {
            return Err(Error::invalid("dataset needs at least one target point"));
        }
        if source_y.len() != source_x.len() {
            return Err(Error::dims("source responses", source_x.len(), source_y.len()));
        }
        let d = source_x[0].len();
        if d == 0 {
            return Err(Error::invalid("covariates must have positive dimension"));
        }
        for p in source_x.iter().chain(&target_x) {
            if p.len() != d {
                return Err(Error::dims("covariate dimension", d, p.len()));
            }
        }
        Ok(Self { source_x, source_y: DVector::from_vec(source_y), target_x })
    }

    /// Same covariates with new responses.
    pub fn with_responses(&self, y: DVector<T>) -> Result<Self> {
        if y.len() != self.n() {
            return Err(Error::dims("source responses", self.n(), y.len()));
        }
        Ok(Self { source_x: self.source_x.clone(), source_y: y, target_x: self.target_x.clone() })
    }

    pub fn n(&self) -> usize {
        self.source_x.len()
    }

    pub fn m(&self) -> usize {
        self.target_x.len()
    }

    pub fn dim(&self) -> usize {
        self.source_x[0].len()
    }

    pub fn source_x(&self) -> &[Vec<T>] {
        &self.source_x
    }

    pub fn source_y(&self) -> &DVector<T> {
        &self.source_y
    }

    pub fn target_x(&self) -> &[Vec<T>] {
        &self.target_x
    }
}

/// The four kernel blocks used by teacher and student.
///
/// `k_nn`, `k_mn` use the teacher kernel; `kt_mm`, `kt_nm` the student kernel.
#[derive(Debug, Clone)]
pub struct GramSet<T: Real> {
    pub k_nn: DMatrix<T>,
    pub k_mn: DMatrix<T>,
    pub kt_mm: DMatrix<T>,
    pub kt_nm: DMatrix<T>,
    pub teacher_kernel: KernelSpec<T>,
    pub student_kernel: KernelSpec<T>,
}

/// Smallest eigenvalues of the symmetric Gram blocks, relative to the largest.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PsdReport<T: Real> {
    pub k_nn_min_relative: T,
    pub kt_mm_min_relative: T,
}

impl<T: Real> PsdReport<T> {
    /// True when both blocks are PSD up to `1e-10` relative round-off.
    pub fn within_tolerance(&self) -> bool {
        let tol = -lit::<T>(1e-10);
        self.k_nn_min_relative >= tol && self.kt_mm_min_relative >= tol
    }
}

impl<T: Real> GramSet<T> {
    pub fn n(&self) -> usize {
        self.k_nn.nrows()
    }

    pub fn m(&self) -> usize {
        self.kt_mm.nrows()
    }

    /// Checks positive semi-definiteness of `K_nn` and `K̃_mm` (eigen-decomposes both).
    pub fn psd_report(&self) -> PsdReport<T> {
        fn rel<T: Real>(m: &DMatrix<T>) -> T {
            let ev = sym_eigenvalues_desc(m);
            let max = ev.first().copied().unwrap_or(T::zero());
            let min = ev.last().copied().unwrap_or(T::zero());
            if max > T::zero() {
                min / max
            } else {
                min
            }
        }
        PsdReport { k_nn_min_relative: rel(&self.k_nn), kt_mm_min_relative: rel(&self.kt_mm) }
    }
}

/// Cross-kernel matrix `[k(a_i, b_j)]`, rows computed in parallel.
pub(crate) fn cross_kernel<T: Real>(spec: &KernelSpec<T>, a: &[Vec<T>], b: &[Vec<T>]) -> Result<DMatrix<T>> {
    spec.validate()?;
    if let KernelSpec::FeatureLinear(map) = spec {
        let pa = map.feature_matrix(a)?;
        let pb = map.feature_matrix(b)?;
        return Ok(&pa * pb.transpose());
    }
    let rows: Vec<Vec<T>> = a
        .par_iter()
        .map(|x| b.iter().map(|y| eval_kernel(spec, x, y)).collect::<Result<Vec<T>>>())
        .collect::<Result<Vec<_>>>()?;
    Ok(DMatrix::from_fn(a.len(), b.len(), |i, j| rows[i][j]))
}

pub(crate) fn sym_kernel<T: Real>(spec: &KernelSpec<T>, a: &[Vec<T>]) -> Result<DMatrix<T>> {
    let mut k = cross_kernel(spec, a, a)?;
    symmetrize(&mut k);
    Ok(k)
}

pub fn build_gram<T: Real>(
    teacher_kernel: &KernelSpec<T>,
    student_kernel: &KernelSpec<T>,
    data: &Dataset<T>,
) -> Result<GramSet<T>> {
    let (xs, xt) = (data.source_x(), data.target_x());
    let k_nn = sym_kernel(teacher_kernel, xs)?;
    let k_mn = cross_kernel(teacher_kernel, xt, xs)?;
    let kt_mm =
        if student_kernel == teacher_kernel && xs == xt { k_nn.clone() } else { sym_kernel(student_kernel, xt)? };
    let kt_nm = if student_kernel == teacher_kernel { k_mn.transpose() } else { cross_kernel(student_kernel, xs, xt)? };
    Ok(GramSet {
        k_nn,
        k_mn,
        kt_mm,
        kt_nm,
        teacher_kernel: teacher_kernel.clone(),
        student_kernel: student_kernel.clone(),
    })
}

/// Empirical source/target second-moment matrices of a feature map.
#[derive(Debug, Clone)]
pub struct SecondMoments<T: Real> {
    /// `ΦᵀΦ/n` over source points.
    pub sigma: DMatrix<T>,
    /// `Φ̃ᵀΦ̃/m` over target points.
    pub sigma_til: DMatrix<T>,
    /// `‖ΣΣ̃ − Σ̃Σ‖_F`.
    pub commutator_norm: T,
    /// Commutator below `1e-8·‖Σ‖_F‖Σ̃‖_F`.
    pub shared_eigenbasis: bool,
}

impl<T: Real> SecondMoments<T> {
    pub fn from_matrices(sigma: DMatrix<T>, sigma_til: DMatrix<T>) -> Result<Self> {
        if !sigma.is_square() || sigma.shape() != sigma_til.shape() {
            return Err(Error::dims("second moments", sigma.nrows(), sigma_til.nrows()));
        }
        let mut sigma = sigma;
        let mut sigma_til = sigma_til;
        symmetrize(&mut sigma);
        symmetrize(&mut sigma_til);
        let comm = (&sigma * &sigma_til - &sigma_til * &sigma).norm();
        let tol = lit::<T>(1e-8) * sigma.norm() * sigma_til.norm();
        Ok(Self { shared_eigenbasis: comm <= tol, commutator_norm: comm, sigma, sigma_til })
    }

    pub fn dim(&self) -> usize {
        self.sigma.nrows()
    }
}

pub fn second_moments<T: Real>(map: &FeatureMap<T>, data: &Dataset<T>) -> Result<SecondMoments<T>> {
    let phi = map.feature_matrix(data.source_x())?;
    let phit = map.feature_matrix(data.target_x())?;
    let sigma = phi.transpose() * &phi / from_usize::<T>(data.n());
    let sigma_til = phit.transpose() * &phit / from_usize::<T>(data.m());
    SecondMoments::from_matrices(sigma, sigma_til)
}

/// Covariates `[k, domain]` for the diagonal map: source `1..=n` and target `1..=n`.
pub fn diagonal_covariates<T: Real>(n: usize) -> (Vec<Vec<T>>, Vec<Vec<T>>) {
    let src = (1..=n).map(|k| vec![from_usize::<T>(k), T::zero()]).collect();
    let tgt = (1..=n).map(|k| vec![from_usize::<T>(k), T::one()]).collect();
    (src, tgt)
}
