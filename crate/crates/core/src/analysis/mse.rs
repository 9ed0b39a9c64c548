use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::kernels::{Dataset, GramSet, KernelSpec};
use crate::linalg::{quad_trace, with_diagonal_shift, LuFactor, SpdFactor};
use crate::rng::{stream, BoxMuller};
use crate::scalar::{from_usize, lit, to_f64, Real};
use crate::solver::{RatSystem, SmSystem};
use crate::student::StudentConfig;
use crate::teacher::TeacherOperator;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Estimator {
    Rat,
    Sm,
}

impl Estimator {
    pub fn label(&self) -> &'static str {
        match self {
            Self::Rat => "RAT",
            Self::Sm => "SM",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum GroundTruth<T: Real> {
    /// `f* = Σ_j θ*_j k̃(·, x̃_j)`.
    Representer(DVector<T>),
    /// `f* = ⟨v*, φ(·)⟩` for a feature-linear student kernel, optionally with `‖v*‖ ≤ R`.
    Feature { v: DVector<T>, radius: Option<T> },
}

/// Synthetic regression problem `y_i = f*(x_i) + g*(x_i) + σ w_i`.
#[derive(Debug, Clone)]
pub struct ProblemInstance<T: Real> {
    pub data: Dataset<T>,
    pub truth: GroundTruth<T>,
    pub sigma2: T,
    /// `g*` at the source points.
    pub misspecification: Option<DVector<T>>,
}

impl<T: Real> ProblemInstance<T> {
    pub fn new(
        data: Dataset<T>,
        truth: GroundTruth<T>,
        sigma2: T,
        misspecification: Option<DVector<T>>,
    ) -> Result<Self> {
        if !(sigma2 >= T::zero()) {
            return Err(Error::invalid("noise variance must be non-negative"));
        }
        if let GroundTruth::Feature { v, radius: Some(r) } = &truth {
            if v.norm() > *r * (T::one() + lit(1e-12)) {
                return Err(Error::invalid("feature truth exceeds its radius"));
            }
        }
        if let GroundTruth::Representer(theta) = &truth {
            if theta.len() != data.m() {
                return Err(Error::dims("true representer weights", data.m(), theta.len()));
            }
        }
        if let Some(g) = &misspecification {
            if g.len() != data.n() {
                return Err(Error::dims("misspecification", data.n(), g.len()));
            }
        }
        Ok(Self { data, truth, sigma2, misspecification })
    }

    pub fn theta_star(&self) -> Result<&DVector<T>> {
        match &self.truth {
            GroundTruth::Representer(t) => Ok(t),
            GroundTruth::Feature { .. } => Err(Error::invalid("operation needs a representer-form ground truth")),
        }
    }

    /// Noiseless source means `f*(x) + g*(x)` and target values `f*(x̃)`.
    pub fn truth_values(&self, gram: &GramSet<T>) -> Result<(DVector<T>, DVector<T>)> {
        if gram.n() != self.data.n() || gram.m() != self.data.m() {
            return Err(Error::dims("gram vs instance source size", self.data.n(), gram.n()));
        }
        let (mut source, target) = match &self.truth {
            GroundTruth::Representer(theta) => (&gram.kt_nm * theta, &gram.kt_mm * theta),
            GroundTruth::Feature { v, .. } => match &gram.student_kernel {
                KernelSpec::FeatureLinear(map) => {
                    if v.len() != map.dim() {
                        return Err(Error::dims("feature truth", map.dim(), v.len()));
                    }
                    (map.feature_matrix(self.data.source_x())? * v, map.feature_matrix(self.data.target_x())? * v)
                }
                _ => return Err(Error::invalid("feature-space truth requires a feature-linear student kernel")),
            },
        };
        if let Some(g) = &self.misspecification {
            source += g;
        }
        Ok((source, target))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MseReport<T: Real> {
    pub bias_sq: T,
    pub variance: T,
    pub total: T,
    pub estimator: Estimator,
}

impl<T: Real> MseReport<T> {
    pub(crate) fn new(bias_sq: T, variance: T, estimator: Estimator) -> Self {
        Self { bias_sq, variance, total: bias_sq + variance, estimator }
    }
}

/// Soft-matching bias `f*(x̃) − E f̂_SM` split into a distribution-shift part
/// `f*(x̃) − T·E y` and a regularization part `mγ(K̃ + mγI)⁻¹T·E y`.
#[derive(Debug, Clone, PartialEq)]
pub struct BiasSplit<T: Real> {
    pub shift: DVector<T>,
    pub ridge: DVector<T>,
    pub total: DVector<T>,
}

fn sq_norm_q<T: Real>(v: &DVector<T>) -> T {
    v.norm_squared() / from_usize::<T>(v.len())
}

fn check_teacher<T: Real>(gram: &GramSet<T>, teacher: &TeacherOperator<T>) -> Result<()> {
    if teacher.dims() != (gram.m(), gram.n()) {
        return Err(Error::dims("teacher vs gram", gram.m(), teacher.dims().0));
    }
    Ok(())
}

/// Exact bias² and variance of the closed-form RaT estimate on the target set.
pub fn exact_mse_rat<T: Real>(
    gram: &GramSet<T>,
    teacher: &TeacherOperator<T>,
    student: &StudentConfig<T>,
    instance: &ProblemInstance<T>,
) -> Result<MseReport<T>> {
    check_teacher(gram, teacher)?;
    let m = gram.m();
    let (mu, f_t) = instance.truth_values(gram)?;
    let a = teacher.matrix() * &gram.kt_nm;
    let lu = LuFactor::new(with_diagonal_shift(&a, from_usize::<T>(m) * student.gamma), "RaT closed form (A + mγI)")?;
    let mean = &gram.kt_mm * lu.solve_vec(&(teacher.matrix() * mu));
    let bias_sq = sq_norm_q(&(f_t - mean));
    let w = &gram.kt_mm * lu.solve_mat(teacher.matrix());
    let variance = instance.sigma2 * w.norm_squared() / from_usize::<T>(m);
    Ok(MseReport::new(bias_sq, variance, Estimator::Rat))
}

/// Exact bias² and variance of soft matching, with the bias split.
pub fn exact_mse_sm<T: Real>(
    gram: &GramSet<T>,
    teacher: &TeacherOperator<T>,
    student: &StudentConfig<T>,
    instance: &ProblemInstance<T>,
) -> Result<(MseReport<T>, BiasSplit<T>)> {
    check_teacher(gram, teacher)?;
    let m = gram.m();
    let (mu, f_t) = instance.truth_values(gram)?;
    let mg = from_usize::<T>(m) * student.gamma;
    let chol = SpdFactor::new(with_diagonal_shift(&gram.kt_mm, mg), "soft matching (K̃_mm + mγI)")?;
    let pseudo = teacher.matrix() * mu;
    let total = &f_t - &gram.kt_mm * chol.solve_vec(&pseudo);
    let shift = f_t - &pseudo;
    let ridge = chol.solve_vec(&pseudo) * mg;
    let bias_sq = sq_norm_q(&total);
    let w = &gram.kt_mm * chol.solve_mat(teacher.matrix());
    let variance = instance.sigma2 * w.norm_squared() / from_usize::<T>(m);
    Ok((MseReport::new(bias_sq, variance, Estimator::Sm), BiasSplit { shift, ridge, total }))
}

/// Exact MSE evaluator for a fixed instance across many student penalties.
///
/// RaT costs two `m × m` LU factorizations per `γ`; soft matching reuses one
/// eigendecomposition of `K̃_mm` and costs `O(m)` per `γ`.
pub struct KernelMse<T: Real> {
    m: usize,
    kt: DMatrix<T>,
    a: DMatrix<T>,
    /// `T·T ᵀ`.
    c: DMatrix<T>,
    pseudo: DVector<T>,
    f_t: DVector<T>,
    eig: Vec<T>,
    c_diag: Vec<T>,
    pseudo_rot: DVector<T>,
    f_rot: DVector<T>,
    sigma2: T,
}

impl<T: Real> KernelMse<T> {
    pub fn new(gram: &GramSet<T>, teacher: &TeacherOperator<T>, instance: &ProblemInstance<T>) -> Result<Self> {
        check_teacher(gram, teacher)?;
        let (mu, f_t) = instance.truth_values(gram)?;
        let t = teacher.matrix();
        let c = t * t.transpose();
        let pseudo = t * mu;
        let se = SymmetricEigen::new(gram.kt_mm.clone());
        let q = &se.eigenvectors;
        let c_rot = q.transpose() * &c * q;
        Ok(Self {
            m: gram.m(),
            kt: gram.kt_mm.clone(),
            a: t * &gram.kt_nm,
            c_diag: (0..gram.m()).map(|i| c_rot[(i, i)]).collect(),
            eig: se.eigenvalues.iter().map(|&l| l.max(T::zero())).collect(),
            pseudo_rot: q.transpose() * &pseudo,
            f_rot: q.transpose() * &f_t,
            c,
            pseudo,
            f_t,
            sigma2: instance.sigma2,
        })
    }

    pub fn evaluate(&self, estimator: Estimator, gamma: T) -> Result<MseReport<T>> {
        match estimator {
            Estimator::Rat => self.rat(gamma),
            Estimator::Sm => Ok(self.sm(gamma)),
        }
    }

    pub fn rat(&self, gamma: T) -> Result<MseReport<T>> {
        let mg = from_usize::<T>(self.m) * gamma;
        let mat = with_diagonal_shift(&self.a, mg);
        let lu = LuFactor::new(mat.clone(), "RaT closed form (A + mγI)")?;
        let bias = &self.f_t - &self.kt * lu.solve_vec(&self.pseudo);
        // Y = M⁻ᵀK̃, so that ‖K̃M⁻¹T‖²_F = tr(Yᵀ C Y).
        let lu_t = LuFactor::new(mat.transpose(), "RaT closed form (A + mγI)ᵀ")?;
        let y = lu_t.solve_mat(&self.kt);
        let var = self.sigma2 * quad_trace(&y, &self.c) / from_usize::<T>(self.m);
        Ok(MseReport::new(sq_norm_q(&bias), var.max(T::zero()), Estimator::Rat))
    }

    pub fn sm(&self, gamma: T) -> MseReport<T> {
        let mg = from_usize::<T>(self.m) * gamma;
        let mut bias = T::zero();
        let mut var = T::zero();
        for i in 0..self.m {
            let l = self.eig[i];
            let d = if l + mg > T::zero() { l / (l + mg) } else { T::zero() };
            let b = self.f_rot[i] - d * self.pseudo_rot[i];
            bias += b * b;
            var += d * d * self.c_diag[i];
        }
        let mm = from_usize::<T>(self.m);
        MseReport::new(bias / mm, self.sigma2 * var / mm, Estimator::Sm)
    }
}

/// Empirical MSE over independent noise draws, with its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McEstimate<T: Real> {
    pub mean: T,
    pub std_err: T,
    pub trials: usize,
}

/// Monte Carlo estimate of `E‖f̂(x̃) − f*(x̃)‖²_Q` over the noise, using the
/// closed-form estimator. Trial `t` draws from stream `(seed, t)`.
pub fn monte_carlo_mse<T: Real>(
    estimator: Estimator,
    gram: &GramSet<T>,
    teacher: &TeacherOperator<T>,
    student: &StudentConfig<T>,
    instance: &ProblemInstance<T>,
    trials: usize,
    seed: u64,
) -> Result<McEstimate<T>> {
    if trials == 0 {
        return Err(Error::invalid("monte carlo needs at least one trial"));
    }
    check_teacher(gram, teacher)?;
    let (mu, f_t) = instance.truth_values(gram)?;
    let sigma = instance.sigma2.sqrt();
    enum Sys<T: Real> {
        Rat(RatSystem<T>),
        Sm(SmSystem<T>),
    }
    let sys = match estimator {
        Estimator::Rat => Sys::Rat(RatSystem::new(gram, teacher, student)?),
        Estimator::Sm => Sys::Sm(SmSystem::new(gram, teacher, student)?),
    };
    let n = gram.n();
    let losses: Vec<T> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = stream(seed, &[t as u64]);
            let mut g = BoxMuller::new();
            let y = DVector::from_fn(n, |i, _| mu[i] + sigma * lit::<T>(g.sample(&mut rng)));
            let w = match &sys {
                Sys::Rat(s) => s.solve(&y)?,
                Sys::Sm(s) => s.solve(&y)?,
            };
            Ok(sq_norm_q(&(&gram.kt_mm * w.theta - &f_t)))
        })
        .collect::<Result<Vec<T>>>()?;
    let k = from_usize::<T>(trials);
    let mean = losses.iter().fold(T::zero(), |a, &b| a + b) / k;
    let std_err = if trials > 1 {
        let ss = losses.iter().fold(T::zero(), |a, &b| a + (b - mean) * (b - mean));
        (ss / (k - T::one()) / k).sqrt()
    } else {
        T::zero()
    };
    debug_assert!(to_f64(mean).is_finite());
    Ok(McEstimate { mean, std_err, trials })
}
