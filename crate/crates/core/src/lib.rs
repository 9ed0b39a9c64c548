//! Kernel student–teacher regression under covariate shift.
//!
//! A teacher trained on labeled source data can be used in two ways to fit
//! a student on unlabeled target covariates:
//!
//! * **soft matching (SM)**: regress the student directly on the teacher's
//!   pseudo-responses `T(y)`;
//! * **residual-as-teacher (RaT)**: use the teacher to estimate the
//!   student's residuals, and iterate a proximal update until the student
//!   is self-consistent.
//!
//! Both are implemented here for response-linear teachers (kernel ridge
//! regression, Nadaraya–Watson, or any explicit `m × n` matrix) and an RKHS
//! student with squared-Hilbert-norm penalty, together with the exact
//! bias/variance formulas, spectral diagnostics and numeric checkers for the
//! associated risk and convergence inequalities.
//!
//! All numerical code is generic over the scalar type ([`Real`], i.e. `f32`
//! or `f64`); the `*64` aliases below fix it to `f64`, which is what the
//! tolerances in the test-suite assume.

// `!(x > 0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod error;
pub mod kernels;
mod linalg;
pub mod rng;
pub mod scalar;
pub mod solver;
pub mod student;
pub mod teacher;

pub use error::{Error, Result};
pub use scalar::Real;

pub use analysis::{
    check_thm1_bound, check_thm3_decay, estimate_stability, exact_mse_rat, exact_mse_sm, feature_bias_sm,
    feature_mse_rat, fit_eigendecay, monte_carlo_mse, noise_covariance, optimal_gamma, BiasSplit, BoundReport,
    DecayReport, EigendecayFit, Estimator, FeatureMse, GroundTruth, KernelMse, McEstimate, MseReport, NoiseDiagnostics,
    ProblemInstance, SpectralMse, StabilityEstimate,
};
pub use kernels::{
    build_gram, eval_kernel, hermite_features, second_moments, Dataset, FeatureMap, GramSet, KernelSpec, SecondMoments,
};
pub use solver::{
    defect, grad_hat, picard_step, rat_closed_form, residuals, run_picard, sm_closed_form, IterRecord, IterateTrace,
    LossModel, Method, RatProblem, RatRunConfig, RatSystem, SmSystem, Solution, StepSize,
};
pub use student::{hilbert_norm, predict, prox, ProxOperator, StudentConfig, StudentWeights};
pub use teacher::{
    apply_teacher, build_krr_teacher, build_nw_teacher, fit_residual_teacher, TeacherOperator, TeacherSpec,
};

pub type Dataset64 = Dataset<f64>;
pub type Dataset32 = Dataset<f32>;
pub type KernelSpec64 = KernelSpec<f64>;
pub type KernelSpec32 = KernelSpec<f32>;
pub type FeatureMap64 = FeatureMap<f64>;
pub type GramSet64 = GramSet<f64>;
pub type GramSet32 = GramSet<f32>;
pub type SecondMoments64 = SecondMoments<f64>;
pub type TeacherSpec64 = TeacherSpec<f64>;
pub type TeacherOperator64 = TeacherOperator<f64>;
pub type TeacherOperator32 = TeacherOperator<f32>;
pub type StudentConfig64 = StudentConfig<f64>;
pub type StudentWeights64 = StudentWeights<f64>;
pub type Solution64 = Solution<f64>;
pub type MseReport64 = MseReport<f64>;
pub type ProblemInstance64 = ProblemInstance<f64>;
