#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rat_core::rng::{stream, BoxMuller};
use rat_core::*;

pub struct Instance {
    pub data: Dataset64,
    pub gram: GramSet64,
    pub teacher: TeacherOperator64,
    pub student: StudentConfig64,
    pub theta_star: DVector<f64>,
    pub sigma2: f64,
    pub lambda: f64,
}

impl Instance {
    pub fn y(&self) -> &DVector<f64> {
        self.data.source_y()
    }

    pub fn problem(&self) -> RatProblem<'_, f64> {
        RatProblem::new(&self.gram, &self.teacher, &self.student, self.y(), LossModel::LeastSquares).unwrap()
    }

    pub fn problem_instance(&self) -> ProblemInstance64 {
        ProblemInstance::new(self.data.clone(), GroundTruth::Representer(self.theta_star.clone()), self.sigma2, None)
            .unwrap()
    }
}

fn log_uniform<R: Rng>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    (lo.ln() + rng.random::<f64>() * (hi.ln() - lo.ln())).exp()
}

#[derive(Clone, Copy)]
pub enum TeacherKind {
    Krr,
    Nw,
}

/// Random shifted instance: source covariates N(0, 1), target N(0.5, 0.8²),
/// a shared Gaussian or Laplace kernel, KRR or NW teacher, and a unit-norm
/// representer truth.
pub fn random_instance(seed: u64, max_n: usize, max_m: usize, sigma2: f64, kind: TeacherKind) -> Instance {
    let mut rng = stream(seed, &[0xA11CE]);
    let mut g = BoxMuller::new();
    let n = rng.random_range(2..=max_n);
    let m = rng.random_range(2..=max_m);
    let d = rng.random_range(1..=2);
    let src: Vec<Vec<f64>> = (0..n).map(|_| (0..d).map(|_| g.sample(&mut rng)).collect()).collect();
    let tgt: Vec<Vec<f64>> = (0..m).map(|_| (0..d).map(|_| 0.5 + 0.8 * g.sample(&mut rng)).collect()).collect();
    let kernel = if rng.random::<bool>() {
        KernelSpec::gaussian(log_uniform(&mut rng, 0.5, 2.0)).unwrap()
    } else {
        KernelSpec::laplace(log_uniform(&mut rng, 0.5, 2.0)).unwrap()
    };
    let gamma = log_uniform(&mut rng, 0.01, 10.0);
    let lambda = log_uniform(&mut rng, 0.01, 10.0);
    let data = Dataset::new(src, vec![0.0; n], tgt).unwrap();
    let gram = build_gram(&kernel, &kernel, &data).unwrap();
    let teacher = match kind {
        TeacherKind::Krr => build_krr_teacher(&gram, lambda).unwrap(),
        TeacherKind::Nw => build_nw_teacher(&data, log_uniform(&mut rng, 0.3, 1.5)).unwrap(),
    };
    let student = StudentConfig::new(gamma, kernel).unwrap();
    let raw = DVector::from_fn(m, |_, _| g.sample(&mut rng));
    let norm = raw.dot(&(&gram.kt_mm * &raw)).sqrt();
    let theta_star = raw / norm;
    let sigma = sigma2.sqrt();
    let y = &gram.kt_nm * &theta_star + DVector::from_fn(n, |_, _| sigma * g.sample(&mut rng));
    let data = data.with_responses(y).unwrap();
    Instance { data, gram, teacher, student, theta_star, sigma2, lambda }
}

/// Random symmetric positive-definite matrix with eigenvalues in `[lo, hi]`.
pub fn random_spd(seed: u64, m: usize, lo: f64, hi: f64) -> DMatrix<f64> {
    let mut rng = stream(seed, &[0x5bd]);
    let mut g = BoxMuller::new();
    let a = DMatrix::from_fn(m, m, |_, _| g.sample(&mut rng));
    let q = a.qr().q();
    let ev = DVector::from_fn(m, |_, _| lo + (hi - lo) * rng.random::<f64>());
    &q * DMatrix::from_diagonal(&ev) * q.transpose()
}

/// GramSet whose student blocks are given explicitly (teacher blocks copied).
pub fn gram_from(kt_mm: DMatrix<f64>, kt_nm: DMatrix<f64>) -> GramSet64 {
    GramSet {
        k_nn: DMatrix::identity(kt_nm.nrows(), kt_nm.nrows()),
        k_mn: kt_nm.transpose(),
        kt_mm,
        kt_nm,
        teacher_kernel: KernelSpec::gaussian(1.0).unwrap(),
        student_kernel: KernelSpec::gaussian(1.0).unwrap(),
    }
}
