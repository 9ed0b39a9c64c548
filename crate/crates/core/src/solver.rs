//! Losses, the teacher-based gradient estimate, Picard iteration and closed forms.

use nalgebra::{DMatrix, DVector};

use crate::analysis::estimate_stability;
use crate::error::{Error, Result};
use crate::kernels::GramSet;
use crate::linalg::{with_diagonal_shift, LuFactor, SpdFactor};
use crate::scalar::{from_usize, lit, to_f64, Real};
use crate::student::{ProxOperator, StudentConfig, StudentWeights};
use crate::teacher::{apply_teacher, TeacherOperator};

/// Traces keep full iterates for at most this many records.
pub const DENSE_TRACE_LIMIT: usize = 10_000;

const DIVERGENCE_FACTOR: f64 = 1e6;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossModel {
    LeastSquares,
    /// Labels in `{0, 1}`, predictions are logits.
    Logistic,
}

impl LossModel {
    /// `∂ℓ(z, y)/∂z`.
    pub fn residual<T: Real>(&self, z: T, y: T) -> Result<T> {
        match self {
            Self::LeastSquares => Ok(z - y),
            Self::Logistic => {
                if y != T::zero() && y != T::one() {
                    return Err(Error::invalid("logistic labels must be 0 or 1"));
                }
                Ok(T::one() / (T::one() + (-z).exp()) - y)
            }
        }
    }

    /// Default defect tolerance certifying an approximate fixed point.
    pub fn default_tolerance<T: Real>(&self) -> T {
        match self {
            Self::LeastSquares => lit(1e-10),
            Self::Logistic => lit(1e-8),
        }
    }
}

pub fn residuals<T: Real>(loss: LossModel, predictions: &DVector<T>, y: &DVector<T>) -> Result<DVector<T>> {
    if predictions.len() != y.len() {
        return Err(Error::dims("residuals", y.len(), predictions.len()));
    }
    let e: Result<Vec<T>> = predictions.iter().zip(y.iter()).map(|(&z, &t)| loss.residual(z, t)).collect();
    Ok(DVector::from_vec(e?))
}

/// `Ĝ(f_θ) = T·e(f_θ(x), y)`: the teacher applied to the student's source residuals.
pub fn grad_hat<T: Real>(
    teacher: &TeacherOperator<T>,
    y: &DVector<T>,
    loss: LossModel,
    weights: &StudentWeights<T>,
    gram: &GramSet<T>,
) -> Result<DVector<T>> {
    if weights.len() != gram.m() {
        return Err(Error::dims("student weights", gram.m(), weights.len()));
    }
    let e = residuals(loss, &weights.at_source(gram), y)?;
    apply_teacher(teacher, &e)
}

/// Everything the RaT iteration needs, borrowed.
#[derive(Clone, Copy)]
pub struct RatProblem<'a, T: Real> {
    pub gram: &'a GramSet<T>,
    pub teacher: &'a TeacherOperator<T>,
    pub student: &'a StudentConfig<T>,
    pub y: &'a DVector<T>,
    pub loss: LossModel,
}

impl<'a, T: Real> RatProblem<'a, T> {
    pub fn new(
        gram: &'a GramSet<T>,
        teacher: &'a TeacherOperator<T>,
        student: &'a StudentConfig<T>,
        y: &'a DVector<T>,
        loss: LossModel,
    ) -> Result<Self> {
        check_dims(gram, teacher, y)?;
        Ok(Self { gram, teacher, student, y, loss })
    }

    pub fn grad(&self, weights: &StudentWeights<T>) -> Result<DVector<T>> {
        grad_hat(self.teacher, self.y, self.loss, weights, self.gram)
    }
}

fn check_dims<T: Real>(gram: &GramSet<T>, teacher: &TeacherOperator<T>, y: &DVector<T>) -> Result<()> {
    let (m, n) = teacher.dims();
    if m != gram.m() {
        return Err(Error::dims("teacher rows vs target set", gram.m(), m));
    }
    if n != gram.n() {
        return Err(Error::dims("teacher columns vs source set", gram.n(), n));
    }
    if y.len() != n {
        return Err(Error::dims("responses", n, y.len()));
    }
    Ok(())
}

fn empirical_norm<T: Real>(v: &DVector<T>) -> T {
    v.norm() / from_usize::<T>(v.len().max(1)).sqrt()
}

/// One proximal step `θ⁺ = prox_η(f_θ − ηĜ(f_θ))`, with the defect norm
/// `‖f_θ⁺ − f_θ‖` in the empirical target norm.
pub fn picard_step<T: Real>(
    problem: &RatProblem<'_, T>,
    prox: &ProxOperator<T>,
    current: &StudentWeights<T>,
) -> Result<(StudentWeights<T>, T)> {
    let fitted = current.fitted(problem.gram);
    let g = problem.grad(current)?;
    let next = prox.apply(&(&fitted - g * prox.eta()))?;
    let d = next.fitted(problem.gram) - fitted;
    Ok((next, empirical_norm(&d)))
}

/// Defect vector `D_η(f_θ)` and its empirical norm.
pub fn defect<T: Real>(problem: &RatProblem<'_, T>, weights: &StudentWeights<T>, eta: T) -> Result<(DVector<T>, T)> {
    let prox = ProxOperator::new(problem.student, problem.gram, eta)?;
    let fitted = weights.fitted(problem.gram);
    let g = problem.grad(weights)?;
    let next = prox.apply(&(&fitted - g * eta))?;
    let d = next.fitted(problem.gram) - fitted;
    let norm = empirical_norm(&d);
    Ok((d, norm))
}

#[derive(Debug, Clone, PartialEq)]
pub enum StepSize<T: Real> {
    Fixed(T),
    /// `1/L̂` from a probe-based stability estimate, falling back to 0.1.
    Auto,
}

#[derive(Debug, Clone)]
pub struct RatRunConfig<T: Real> {
    pub step: StepSize<T>,
    pub max_iter: usize,
    pub defect_tol: T,
    /// Starting point; zero when absent.
    pub init: Option<StudentWeights<T>>,
    /// Probe count and seed for the automatic stepsize.
    pub stability_probes: usize,
    pub stability_seed: u64,
}

impl<T: Real> RatRunConfig<T> {
    pub fn for_loss(loss: LossModel) -> Self {
        Self {
            step: StepSize::Auto,
            max_iter: 10_000,
            defect_tol: loss.default_tolerance(),
            init: None,
            stability_probes: 64,
            stability_seed: 0,
        }
    }

    pub fn with_eta(mut self, eta: T) -> Self {
        self.step = StepSize::Fixed(eta);
        self
    }

    pub fn with_tol(mut self, tol: T) -> Self {
        self.defect_tol = tol;
        self
    }

    pub fn with_max_iter(mut self, max_iter: usize) -> Self {
        self.max_iter = max_iter;
        self
    }

    pub fn with_init(mut self, init: StudentWeights<T>) -> Self {
        self.init = Some(init);
        self
    }
}

impl<T: Real> Default for RatRunConfig<T> {
    fn default() -> Self {
        Self::for_loss(LossModel::LeastSquares)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterRecord<T: Real> {
    pub k: usize,
    /// Omitted past [`DENSE_TRACE_LIMIT`] records.
    pub theta: Option<DVector<T>>,
    /// `‖D_η(f_k)‖` in the empirical target norm.
    pub defect: T,
    pub fitted: Option<DVector<T>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterateTrace<T: Real> {
    pub eta: T,
    pub records: Vec<IterRecord<T>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    RatClosedForm,
    RatPicard,
    SmClosedForm,
}

#[derive(Debug, Clone)]
pub struct Solution<T: Real> {
    pub weights: StudentWeights<T>,
    pub method: Method,
    pub trace: Option<IterateTrace<T>>,
    pub converged: bool,
    /// Proximal steps taken (0 for closed forms).
    pub iterations: usize,
    /// Defect norm at the returned iterate (Picard only).
    pub final_defect: Option<T>,
}

fn resolve_eta<T: Real>(config: &RatRunConfig<T>, problem: &RatProblem<'_, T>, init: &StudentWeights<T>) -> Result<T> {
    match config.step {
        StepSize::Fixed(eta) => {
            if !(eta > T::zero()) {
                return Err(Error::invalid("stepsize must be positive"));
            }
            Ok(eta)
        }
        StepSize::Auto => {
            let est = estimate_stability(problem, init, config.stability_probes.max(10), config.stability_seed)?;
            Ok(match est.l_hat {
                Some(l) if l > T::zero() && l.is_finite() => T::one() / l,
                _ => lit(0.1),
            })
        }
    }
}

pub fn run_picard<T: Real>(config: &RatRunConfig<T>, problem: &RatProblem<'_, T>) -> Result<Solution<T>> {
    if !(config.defect_tol > T::zero()) {
        return Err(Error::invalid("defect tolerance must be positive"));
    }
    if config.max_iter == 0 {
        return Err(Error::invalid("max_iter must be positive"));
    }
    let m = problem.gram.m();
    let mut current = match &config.init {
        Some(w) if w.len() != m => return Err(Error::dims("picard init", m, w.len())),
        Some(w) => w.clone(),
        None => StudentWeights::zeros(m),
    };
    let eta = resolve_eta(config, problem, &current)?;
    let prox = ProxOperator::new(problem.student, problem.gram, eta)?;

    let record = |k: usize, w: &StudentWeights<T>, d: T, n_records: usize| IterRecord {
        k,
        theta: (n_records < DENSE_TRACE_LIMIT).then(|| w.theta.clone()),
        defect: d,
        fitted: (n_records < DENSE_TRACE_LIMIT).then(|| w.fitted(problem.gram)),
    };

    let mut records = Vec::new();
    let mut converged = false;
    let mut initial = None;
    let mut steps = 0;
    while steps < config.max_iter {
        let (next, d) = picard_step(problem, &prox, &current)?;
        if !d.is_finite() {
            return Err(Error::Numerical {
                context: "picard iteration",
                detail: format!("non-finite defect at iteration {steps}"),
                condition: None,
            });
        }
        let d0 = *initial.get_or_insert(d);
        let limit = lit::<T>(DIVERGENCE_FACTOR) * d0;
        if d0 > T::zero() && d > limit {
            return Err(Error::Divergence { iteration: steps, defect: to_f64(d), limit: to_f64(limit) });
        }
        records.push(record(steps, &current, d, records.len()));
        current = next;
        steps += 1;
        if d < config.defect_tol {
            converged = true;
            break;
        }
    }
    let (_, final_d) = picard_step(problem, &prox, &current)?;
    records.push(record(steps, &current, final_d, records.len()));
    Ok(Solution {
        weights: current,
        method: Method::RatPicard,
        trace: Some(IterateTrace { eta, records }),
        converged: converged || final_d < config.defect_tol,
        iterations: steps,
        final_defect: Some(final_d),
    })
}

/// Factorized `A + mγI` with `A = T·K̃_nm`, for repeated closed-form RaT solves.
pub struct RatSystem<T: Real> {
    lu: LuFactor<T>,
    teacher: DMatrix<T>,
}

impl<T: Real> RatSystem<T> {
    pub fn new(gram: &GramSet<T>, teacher: &TeacherOperator<T>, student: &StudentConfig<T>) -> Result<Self> {
        check_dims(gram, teacher, &DVector::zeros(gram.n()))?;
        let m = gram.m();
        let a = teacher.matrix() * &gram.kt_nm;
        let lu =
            LuFactor::new(with_diagonal_shift(&a, from_usize::<T>(m) * student.gamma), "RaT closed form (A + mγI)")?;
        Ok(Self { lu, teacher: teacher.matrix().clone() })
    }

    pub fn solve(&self, y: &DVector<T>) -> Result<StudentWeights<T>> {
        if y.len() != self.teacher.ncols() {
            return Err(Error::dims("responses", self.teacher.ncols(), y.len()));
        }
        StudentWeights::new(self.lu.solve_vec(&(&self.teacher * y)))
    }
}

/// Factorized `K̃_mm + mγI` for repeated soft-matching solves.
pub struct SmSystem<T: Real> {
    factor: SpdFactor<T>,
    teacher: DMatrix<T>,
}

impl<T: Real> SmSystem<T> {
    pub fn new(gram: &GramSet<T>, teacher: &TeacherOperator<T>, student: &StudentConfig<T>) -> Result<Self> {
        check_dims(gram, teacher, &DVector::zeros(gram.n()))?;
        let m = gram.m();
        let factor = SpdFactor::new(
            with_diagonal_shift(&gram.kt_mm, from_usize::<T>(m) * student.gamma),
            "soft matching (K̃_mm + mγI)",
        )?;
        Ok(Self { factor, teacher: teacher.matrix().clone() })
    }

    pub fn solve(&self, y: &DVector<T>) -> Result<StudentWeights<T>> {
        if y.len() != self.teacher.ncols() {
            return Err(Error::dims("responses", self.teacher.ncols(), y.len()));
        }
        StudentWeights::new(self.factor.solve_vec(&(&self.teacher * y)))
    }
}

fn closed<T: Real>(weights: StudentWeights<T>, method: Method) -> Solution<T> {
    Solution { weights, method, trace: None, converged: true, iterations: 0, final_defect: None }
}

/// `θ̂_RAT = (A + mγI)⁻¹ T y`.
pub fn rat_closed_form<T: Real>(
    gram: &GramSet<T>,
    teacher: &TeacherOperator<T>,
    student: &StudentConfig<T>,
    y: &DVector<T>,
) -> Result<Solution<T>> {
    check_dims(gram, teacher, y)?;
    let w = RatSystem::new(gram, teacher, student)?.solve(y)?;
    Ok(closed(w, Method::RatClosedForm))
}

/// `θ̂_SM = (K̃_mm + mγI)⁻¹ T y`.
pub fn sm_closed_form<T: Real>(
    gram: &GramSet<T>,
    teacher: &TeacherOperator<T>,
    student: &StudentConfig<T>,
    y: &DVector<T>,
) -> Result<Solution<T>> {
    check_dims(gram, teacher, y)?;
    let w = SmSystem::new(gram, teacher, student)?.solve(y)?;
    Ok(closed(w, Method::SmClosedForm))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::KernelSpec;
    use crate::student::prox;
    use approx::assert_relative_eq;

    fn scalar_gram() -> GramSet<f64> {
        let two = DMatrix::from_element(1, 1, 2.0);
        GramSet {
            k_nn: two.clone(),
            k_mn: two.clone(),
            kt_mm: two.clone(),
            kt_nm: two,
            teacher_kernel: KernelSpec::gaussian(1.0).unwrap(),
            student_kernel: KernelSpec::gaussian(1.0).unwrap(),
        }
    }

    fn scalar_setup() -> (GramSet<f64>, TeacherOperator<f64>, StudentConfig<f64>, DVector<f64>) {
        let g = scalar_gram();
        let t = crate::teacher::build_krr_teacher(&g, 1.0).unwrap();
        let s = StudentConfig::new(1.0, KernelSpec::gaussian(1.0).unwrap()).unwrap();
        (g, t, s, DVector::from_element(1, 3.0))
    }

    #[test]
    fn residual_values() {
        assert_eq!(LossModel::LeastSquares.residual(2.0, 2.0).unwrap(), 0.0);
        assert_eq!(LossModel::Logistic.residual(0.0, 0.0).unwrap(), 0.5);
        assert!(LossModel::Logistic.residual(0.0, 0.5).is_err());
        let r =
            residuals(LossModel::LeastSquares, &DVector::from_element(1, 12.0 / 7.0), &DVector::from_element(1, 3.0))
                .unwrap();
        assert_relative_eq!(r[0], -9.0 / 7.0, epsilon = 1e-15);
    }

    #[test]
    fn worked_scalar_example() {
        let (g, t, s, y) = scalar_setup();
        let a = t.matrix() * &g.kt_nm;
        assert_relative_eq!(a[(0, 0)], 4.0 / 3.0, epsilon = 1e-15);
        let rat = rat_closed_form(&g, &t, &s, &y).unwrap();
        assert_relative_eq!(rat.weights.theta[0], 6.0 / 7.0, epsilon = 1e-14);
        assert!(rat.converged);
        let sm = sm_closed_form(&g, &t, &s, &y).unwrap();
        assert_relative_eq!(sm.weights.theta[0], 2.0 / 3.0, epsilon = 1e-14);
        assert_relative_eq!(sm.weights.fitted(&g)[0], 4.0 / 3.0, epsilon = 1e-14);

        let gh = grad_hat(&t, &y, LossModel::LeastSquares, &rat.weights, &g).unwrap();
        assert_relative_eq!(gh[0], -6.0 / 7.0, epsilon = 1e-14);

        let p = RatProblem::new(&g, &t, &s, &y, LossModel::LeastSquares).unwrap();
        let cfg = RatRunConfig::default().with_eta(0.5).with_tol(1e-10).with_max_iter(200);
        let sol = run_picard(&cfg, &p).unwrap();
        assert!(sol.converged);
        assert!(sol.iterations <= 200);
        assert!((sol.weights.theta[0] - 6.0 / 7.0).abs() < 1e-9);
    }

    #[test]
    fn fixed_point_has_zero_defect_for_any_eta() {
        let (g, t, s, y) = scalar_setup();
        let rat = rat_closed_form(&g, &t, &s, &y).unwrap();
        let p = RatProblem::new(&g, &t, &s, &y, LossModel::LeastSquares).unwrap();
        for eta in [0.05, 0.5, 5.0] {
            let (_, d) = defect(&p, &rat.weights, eta).unwrap();
            assert!(d < 1e-10);
        }
        let (_, d0) = defect(&p, &StudentWeights::zeros(1), 0.5).unwrap();
        assert!(d0 > 0.0);

        let cfg = RatRunConfig::default().with_eta(0.5).with_init(rat.weights.clone());
        let sol = run_picard(&cfg, &p).unwrap();
        assert!(sol.converged);
        assert_eq!(sol.iterations, 1);
    }

    #[test]
    fn zero_teacher_contracts_to_zero() {
        let g = scalar_gram();
        let t = TeacherOperator::from_matrix(DMatrix::zeros(1, 1));
        let s = StudentConfig::new(0.5, KernelSpec::gaussian(1.0).unwrap()).unwrap();
        let y = DVector::from_element(1, 3.0);
        let p = RatProblem::new(&g, &t, &s, &y, LossModel::LeastSquares).unwrap();
        let init = StudentWeights::new(DVector::from_element(1, 5.0)).unwrap();
        let cfg = RatRunConfig::default().with_eta(1.0).with_init(init).with_max_iter(5000);
        let sol = run_picard(&cfg, &p).unwrap();
        assert!(sol.converged);
        assert!(sol.weights.theta[0].abs() < 1e-9);
        let trace = sol.trace.unwrap();
        assert!(trace.records.len() <= 5001);
    }

    #[test]
    fn divergence_is_reported() {
        // A negative-definite effective gradient makes the iteration expand.
        let g = scalar_gram();
        let t = TeacherOperator::from_matrix(DMatrix::from_element(1, 1, -10.0));
        let s = StudentConfig::new(0.01, KernelSpec::gaussian(1.0).unwrap()).unwrap();
        let y = DVector::from_element(1, 1.0);
        let p = RatProblem::new(&g, &t, &s, &y, LossModel::LeastSquares).unwrap();
        let cfg = RatRunConfig::default().with_eta(1.0).with_max_iter(1000);
        assert!(matches!(run_picard(&cfg, &p), Err(Error::Divergence { .. })));
    }

    #[test]
    fn sm_is_prox_of_pseudo_responses() {
        let (g, t, s, y) = scalar_setup();
        let ty = apply_teacher(&t, &y).unwrap();
        let via_prox = prox(&s, &g, &ty, 1.0).unwrap();
        let sm = sm_closed_form(&g, &t, &s, &y).unwrap();
        assert!((via_prox.theta - sm.weights.theta).amax() < 1e-12);
    }

    #[test]
    fn dimension_errors() {
        let (g, t, s, _) = scalar_setup();
        let y = DVector::from_element(2, 1.0);
        assert!(rat_closed_form(&g, &t, &s, &y).is_err());
        assert!(RatProblem::new(&g, &t, &s, &y, LossModel::LeastSquares).is_err());
    }
}
