//! Exact risk formulas, spectral diagnostics and numeric checks of the
//! estimation and convergence inequalities.

mod checks;
mod feature;
mod mse;
mod spectrum;

pub use checks::{check_thm1_bound, check_thm3_decay, estimate_stability, BoundReport, DecayReport, StabilityEstimate};
pub use feature::{feature_bias_sm, feature_mse_rat, FeatureMse, SpectralMse};
pub use mse::{
    exact_mse_rat, exact_mse_sm, monte_carlo_mse, BiasSplit, Estimator, GroundTruth, KernelMse, McEstimate, MseReport,
    ProblemInstance,
};
pub use spectrum::{fit_eigendecay, noise_covariance, optimal_gamma, EigendecayFit, NoiseDiagnostics};
