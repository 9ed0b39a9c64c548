//! Response-linear teachers materialized as dense `m × n` matrices.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::kernels::{cross_kernel, sym_kernel, Dataset, GramSet, KernelSpec};
use crate::linalg::{with_diagonal_shift, SpdFactor};
use crate::scalar::{from_usize, lit, Real};

#[derive(Debug, Clone, PartialEq)]
pub enum TeacherSpec<T: Real> {
    /// Kernel ridge regression `T = K_mn (K_nn + nλI)⁻¹`.
    Krr { lambda: T, kernel: KernelSpec<T> },
    /// Nadaraya–Watson smoother with a Gaussian density base kernel.
    Nw { bandwidth: T },
    /// Any explicit `m × n` matrix.
    Custom(DMatrix<T>),
}

/// The teacher as a linear map from source responses to target predictions.
#[derive(Debug, Clone)]
pub struct TeacherOperator<T: Real> {
    matrix: DMatrix<T>,
    spec: TeacherSpec<T>,
}

impl<T: Real> TeacherOperator<T> {
    /// Wraps an explicit matrix.
    pub fn from_matrix(matrix: DMatrix<T>) -> Self {
        Self { spec: TeacherSpec::Custom(matrix.clone()), matrix }
    }

    pub fn matrix(&self) -> &DMatrix<T> {
        &self.matrix
    }

    pub fn spec(&self) -> &TeacherSpec<T> {
        &self.spec
    }

    /// `(m, n)`.
    pub fn dims(&self) -> (usize, usize) {
        self.matrix.shape()
    }

    pub fn apply(&self, v: &DVector<T>) -> Result<DVector<T>> {
        apply_teacher(self, v)
    }
}

impl<T: Real> TeacherSpec<T> {
    /// Materializes the operator for `data`.
    pub fn build(&self, data: &Dataset<T>) -> Result<TeacherOperator<T>> {
        match self {
            Self::Krr { lambda, kernel } => {
                let k_nn = sym_kernel(kernel, data.source_x())?;
                let k_mn = cross_kernel(kernel, data.target_x(), data.source_x())?;
                krr_from_blocks(&k_nn, &k_mn, *lambda, kernel.clone())
            }
            Self::Nw { bandwidth } => build_nw_teacher(data, *bandwidth),
            Self::Custom(t) => {
                if t.nrows() != data.m() {
                    return Err(Error::dims("custom teacher rows", data.m(), t.nrows()));
                }
                if t.ncols() != data.n() {
                    return Err(Error::dims("custom teacher columns", data.n(), t.ncols()));
                }
                Ok(TeacherOperator::from_matrix(t.clone()))
            }
        }
    }
}

fn krr_from_blocks<T: Real>(
    k_nn: &DMatrix<T>,
    k_mn: &DMatrix<T>,
    lambda: T,
    kernel: KernelSpec<T>,
) -> Result<TeacherOperator<T>> {
    if !(lambda >= T::zero()) {
        return Err(Error::invalid("teacher lambda must be non-negative"));
    }
    let n = k_nn.nrows();
    let reg = with_diagonal_shift(k_nn, from_usize::<T>(n) * lambda);
    let factor = SpdFactor::with_jitter(reg, "KRR teacher (K_nn + nλI)")?;
    // T = K_mn M⁻¹ with M symmetric, so Tᵀ = M⁻¹ K_nm.
    let t = factor.solve_mat(&k_mn.transpose()).transpose();
    Ok(TeacherOperator { matrix: t, spec: TeacherSpec::Krr { lambda, kernel } })
}

/// KRR teacher from the teacher-kernel blocks of `gram`.
pub fn build_krr_teacher<T: Real>(gram: &GramSet<T>, lambda: T) -> Result<TeacherOperator<T>> {
    krr_from_blocks(&gram.k_nn, &gram.k_mn, lambda, gram.teacher_kernel.clone())
}

/// Nadaraya–Watson teacher `T_ji = φ_h(x̃_j − x_i) / Σ_l φ_h(x̃_j − x_l)`.
///
/// If the denominator underflows, the row becomes the nearest-neighbour
/// indicator (split evenly between tied neighbours).
pub fn build_nw_teacher<T: Real>(data: &Dataset<T>, bandwidth: T) -> Result<TeacherOperator<T>> {
    if !(bandwidth > T::zero()) {
        return Err(Error::invalid("NW bandwidth must be positive"));
    }
    let (n, m, d) = (data.n(), data.m(), data.dim());
    let two_h2 = lit::<T>(2.0) * bandwidth * bandwidth;
    let norm = (bandwidth * T::two_pi().sqrt()).powi(d as i32);
    let mut t = DMatrix::zeros(m, n);
    for (j, xt) in data.target_x().iter().enumerate() {
        let dist: Vec<T> = data
            .source_x()
            .iter()
            .map(|xs| xs.iter().zip(xt).fold(T::zero(), |a, (&p, &q)| a + (p - q) * (p - q)))
            .collect();
        let w: Vec<T> = dist.iter().map(|&r| (-r / two_h2).exp() / norm).collect();
        let denom = w.iter().fold(T::zero(), |a, &b| a + b);
        if denom > T::zero() && denom.is_finite() {
            for i in 0..n {
                t[(j, i)] = w[i] / denom;
            }
        } else {
            let best = dist.iter().copied().fold(dist[0], |a, b| if b < a { b } else { a });
            let ties = dist.iter().filter(|&&r| r == best).count();
            let share = T::one() / from_usize::<T>(ties);
            for i in 0..n {
                if dist[i] == best {
                    t[(j, i)] = share;
                }
            }
        }
    }
    Ok(TeacherOperator { matrix: t, spec: TeacherSpec::Nw { bandwidth } })
}

pub fn apply_teacher<T: Real>(teacher: &TeacherOperator<T>, v: &DVector<T>) -> Result<DVector<T>> {
    let (_, n) = teacher.dims();
    if v.len() != n {
        return Err(Error::dims("teacher input", n, v.len()));
    }
    Ok(&teacher.matrix * v)
}

/// Fits the teacher to `residuals` (treated as responses) and returns its
/// predictions on the target set.
pub fn fit_residual_teacher<T: Real>(
    spec: &TeacherSpec<T>,
    data: &Dataset<T>,
    residuals: &DVector<T>,
) -> Result<DVector<T>> {
    if residuals.len() != data.n() {
        return Err(Error::dims("teacher residuals", data.n(), residuals.len()));
    }
    apply_teacher(&spec.build(data)?, residuals)
}
