#![allow(dead_code)]

use nalgebra::DVector;
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

pub fn log_uniform<R: Rng>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    (lo.ln() + rng.random::<f64>() * (hi.ln() - lo.ln())).exp()
}

fn points(
    rng: &mut rand_chacha::ChaCha8Rng,
    g: &mut BoxMuller,
    count: usize,
    d: usize,
    mean: f64,
    sd: f64,
) -> Vec<Vec<f64>> {
    (0..count).map(|_| (0..d).map(|_| mean + sd * g.sample(rng)).collect()).collect()
}

fn finish(
    data: Dataset64,
    gram: GramSet64,
    teacher: TeacherOperator64,
    student: StudentConfig64,
    sigma2: f64,
    rng: &mut rand_chacha::ChaCha8Rng,
    g: &mut BoxMuller,
) -> Instance {
    let m = gram.m();
    let raw = DVector::from_fn(m, |_, _| g.sample(rng));
    let norm = raw.dot(&(&gram.kt_mm * &raw)).sqrt();
    let theta_star = raw / norm.max(f64::MIN_POSITIVE);
    let sigma = sigma2.sqrt();
    let n = gram.n();
    let y = &gram.kt_nm * &theta_star + DVector::from_fn(n, |_, _| sigma * g.sample(rng));
    let data = data.with_responses(y).unwrap();
    Instance { data, gram, teacher, student, theta_star, sigma2 }
}

/// Shifted instance: source N(0, 1), target N(0.5, 0.8²) in one or two
/// dimensions, a shared Gaussian or Laplace kernel, a KRR teacher,
/// `γ, λ` log-uniform in `[0.01, 10]` and a unit-norm representer truth.
pub fn random_instance(seed: u64, max_n: usize, max_m: usize, sigma2: f64) -> Instance {
    let mut rng = stream(seed, &[0xACCE97]);
    let mut g = BoxMuller::new();
    let n = rng.random_range(2..=max_n);
    let m = rng.random_range(2..=max_m);
    let d = rng.random_range(1..=2);
    let src = points(&mut rng, &mut g, n, d, 0.0, 1.0);
    let tgt = points(&mut rng, &mut g, m, d, 0.5, 0.8);
    let kernel = if rng.random::<bool>() {
        KernelSpec::gaussian(log_uniform(&mut rng, 0.5, 2.0)).unwrap()
    } else {
        KernelSpec::laplace(log_uniform(&mut rng, 0.5, 2.0)).unwrap()
    };
    let gamma = log_uniform(&mut rng, 0.01, 10.0);
    let lambda = log_uniform(&mut rng, 0.01, 10.0);
    let data = Dataset::new(src, vec![0.0; n], tgt).unwrap();
    let gram = build_gram(&kernel, &kernel, &data).unwrap();
    let teacher = build_krr_teacher(&gram, lambda).unwrap();
    let student = StudentConfig::new(gamma, kernel).unwrap();
    finish(data, gram, teacher, student, sigma2, &mut rng, &mut g)
}

/// One-dimensional linear student `f(x) = wx` with a Nadaraya–Watson or
/// Gaussian-KRR teacher, so the teacher is not linear in `x`.
pub fn linear_instance(seed: u64, max_n: usize, max_m: usize) -> Instance {
    let mut rng = stream(seed, &[0x11EA5]);
    let mut g = BoxMuller::new();
    let n = rng.random_range(5..=max_n);
    let m = rng.random_range(2..=max_m);
    let src = points(&mut rng, &mut g, n, 1, 0.0, 1.0);
    let tgt = points(&mut rng, &mut g, m, 1, 0.5, 0.8);
    let student_kernel = KernelSpec::feature_linear(FeatureMap::identity(1).unwrap());
    let data = Dataset::new(src, vec![0.0; n], tgt).unwrap();
    let (gram, teacher) = if rng.random::<bool>() {
        let gram = build_gram(&student_kernel, &student_kernel, &data).unwrap();
        let t = build_nw_teacher(&data, log_uniform(&mut rng, 0.3, 1.5)).unwrap();
        (gram, t)
    } else {
        let tk = KernelSpec::gaussian(log_uniform(&mut rng, 0.5, 2.0)).unwrap();
        let gram = build_gram(&tk, &student_kernel, &data).unwrap();
        let t = build_krr_teacher(&gram, log_uniform(&mut rng, 0.01, 1.0)).unwrap();
        (gram, t)
    };
    let student = StudentConfig::new(log_uniform(&mut rng, 0.01, 10.0), student_kernel).unwrap();
    finish(data, gram, teacher, student, 0.25, &mut rng, &mut g)
}
