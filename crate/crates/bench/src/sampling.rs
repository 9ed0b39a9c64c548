//! Synthetic covariate-shift problems.
//!
//! Seeds: every trial gets `derive_seed(config.seed, [cell, trial])`; inside a
//! trial the covariates, the ground truth and the noise use the sub-streams
//! `[COVARIATES]`, `[TRUTH]` and `[NOISE]` of that seed. Truths fixed for a
//! whole experiment come from `stream(config.seed, [EXPERIMENT_TRUTH])`.

use nalgebra::DVector;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rat_core::rng::{derive_seed, stream, BoxMuller};
use rat_core::{
    build_gram, hilbert_norm, Dataset64, FeatureMap64, GramSet64, GroundTruth, KernelSpec64, ProblemInstance64,
    StudentWeights,
};

use crate::config::{ExperimentConfig, KernelKind, Preset};
use crate::error::{BenchError, Result};

pub const COVARIATES: u64 = 0;
pub const TRUTH: u64 = 1;
pub const NOISE: u64 = 2;
pub const EXPERIMENT_TRUTH: u64 = u64::MAX;

/// Seed of trial `trial` in grid cell `cell`.
pub fn trial_seed(config_seed: u64, cell: usize, trial: usize) -> u64 {
    derive_seed(config_seed, &[cell as u64, trial as u64])
}

/// Covariate laws used by the presets.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Law {
    Normal {
        mean: f64,
        sd: f64,
    },
    /// `Beta(a, 1)`, drawn by inverse CDF `u^(1/a)`.
    BetaA1 {
        a: f64,
    },
    Uniform,
}

impl Law {
    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            Law::Normal { mean, sd } => mean.is_finite() && sd > 0.0 && sd.is_finite(),
            Law::BetaA1 { a } => a > 0.0 && a.is_finite(),
            Law::Uniform => true,
        };
        if ok {
            Ok(())
        } else {
            Err(BenchError::Config(format!("invalid distribution parameters {self:?}")))
        }
    }

    pub fn sample(&self, rng: &mut ChaCha8Rng, normal: &mut BoxMuller) -> f64 {
        match *self {
            Law::Normal { mean, sd } => mean + sd * normal.sample(rng),
            Law::BetaA1 { a } => beta_a1_inverse_cdf(a, rng.random::<f64>()),
            Law::Uniform => rng.random::<f64>(),
        }
    }

    pub fn draw(&self, count: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
        let mut normal = BoxMuller::new();
        (0..count).map(|_| vec![self.sample(rng, &mut normal)]).collect()
    }
}

pub fn beta_a1_inverse_cdf(a: f64, u: f64) -> f64 {
    u.powf(1.0 / a)
}

/// Diagonal spectra and truth coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralTruth {
    pub mu: Vec<f64>,
    pub mu_til: Vec<f64>,
    pub v: Vec<f64>,
}

/// One sampled problem.
#[derive(Debug, Clone)]
pub struct Sample {
    /// Covariates, noisy responses and ground truth.
    pub instance: ProblemInstance64,
    pub teacher_kernel: KernelSpec64,
    pub student_kernel: KernelSpec64,
    /// Gram matrices, when sampling had to build them.
    pub gram: Option<GramSet64>,
    /// Diagonal-preset spectra.
    pub spectral: Option<SpectralTruth>,
}

impl Sample {
    pub fn feature_map(&self) -> Option<&FeatureMap64> {
        match &self.student_kernel {
            KernelSpec64::FeatureLinear(map) => Some(map),
            _ => None,
        }
    }

    /// Gram matrices, built on demand.
    pub fn gram(&mut self) -> Result<&GramSet64> {
        if self.gram.is_none() {
            self.gram = Some(build_gram(&self.teacher_kernel, &self.student_kernel, &self.instance.data)?);
        }
        Ok(self.gram.as_ref().expect("gram just built"))
    }
}

/// Preset parameters plus anything drawn once per experiment.
#[derive(Debug, Clone)]
pub struct PresetParams {
    pub preset: Preset,
    pub noise_sd: f64,
    pub radius: f64,
    pub config: ExperimentConfig,
    /// Hermite coefficients shared by all trials.
    hermite_truth: Option<DVector<f64>>,
}

impl PresetParams {
    pub fn new(config: &ExperimentConfig) -> Result<Self> {
        config.validate()?;
        let hermite_truth = (config.preset == Preset::HermiteGaussian).then(|| {
            let mut rng = stream(config.seed, &[EXPERIMENT_TRUTH]);
            normalized_gaussian(config.hermite.degree + 1, config.radius, &mut rng)
        });
        Ok(Self {
            preset: config.preset,
            noise_sd: config.noise_sd,
            radius: config.radius,
            config: config.clone(),
            hermite_truth,
        })
    }

    pub fn hermite_truth(&self) -> Option<&DVector<f64>> {
        self.hermite_truth.as_ref()
    }

    fn laws(&self) -> (Law, Law) {
        let c = &self.config;
        match self.preset {
            Preset::HermiteGaussian => {
                (Law::Normal { mean: 0.0, sd: c.hermite.sigma_p }, Law::Normal { mean: 0.0, sd: 1.0 })
            }
            Preset::LaplaceBeta => (Law::BetaA1 { a: c.laplace.a }, Law::Uniform),
            Preset::Custom => (
                Law::Normal { mean: c.custom.source_mean, sd: c.custom.source_sd },
                Law::Normal { mean: c.custom.target_mean, sd: c.custom.target_sd },
            ),
            Preset::Diagonal => (Law::Uniform, Law::Uniform),
        }
    }
}

fn normalized_gaussian(len: usize, radius: f64, rng: &mut ChaCha8Rng) -> DVector<f64> {
    let mut normal = BoxMuller::new();
    let mut v = DVector::from_fn(len, |_, _| normal.sample(rng));
    let norm = v.norm();
    if norm > 0.0 {
        v *= radius / norm;
    }
    v
}

fn add_noise(mean: &DVector<f64>, sd: f64, seed: u64) -> Vec<f64> {
    let mut rng = stream(seed, &[NOISE]);
    let mut normal = BoxMuller::new();
    mean.iter().map(|&f| f + sd * normal.sample(&mut rng)).collect()
}

/// Draws covariates, a ground truth with `‖f*‖_H = R` and responses
/// `y = f*(x) + σw` for `n` source and `m` target points.
///
/// The diagonal preset ignores `m` (its covariates are the indices `1..=n`).
pub fn sample_dataset(params: &PresetParams, n: usize, m: usize, seed: u64) -> Result<Sample> {
    if n == 0 || m == 0 {
        return Err(BenchError::Config("sample sizes must be positive".into()));
    }
    let (src_law, tgt_law) = params.laws();
    src_law.validate()?;
    tgt_law.validate()?;
    let sd = params.noise_sd;
    let sigma2 = sd * sd;
    let c = &params.config;
    match params.preset {
        Preset::Diagonal => {
            let (alpha, beta) = (c.diagonal.alpha, c.diagonal.beta);
            let map = FeatureMap64::diagonal(alpha, beta, n)?;
            let (xs, xt) = rat_core::kernels::diagonal_covariates::<f64>(n);
            // f* = Σ_j θ_j k̃(·, x̃_j) has coordinates v_k ∝ k^(−β)θ_k.
            let mut rng = stream(seed, &[TRUTH]);
            let theta = normalized_gaussian(n, 1.0, &mut rng);
            let mut v = DVector::from_fn(n, |k, _| ((k + 1) as f64).powf(-beta) * theta[k]);
            v *= params.radius / v.norm();
            let mean = DVector::from_fn(n, |k, _| (n as f64).sqrt() * ((k + 1) as f64).powf(-alpha) * v[k]);
            let data = Dataset64::new(xs, add_noise(&mean, sd, seed), xt)?;
            let kernel = KernelSpec64::feature_linear(map);
            let spectral = SpectralTruth {
                mu: (1..=n).map(|k| (k as f64).powf(-2.0 * alpha)).collect(),
                mu_til: (1..=n).map(|k| (k as f64).powf(-2.0 * beta)).collect(),
                v: v.iter().copied().collect(),
            };
            Ok(Sample {
                instance: ProblemInstance64::new(
                    data,
                    GroundTruth::Feature { v, radius: Some(params.radius) },
                    sigma2,
                    None,
                )?,
                teacher_kernel: kernel.clone(),
                student_kernel: kernel,
                gram: None,
                spectral: Some(spectral),
            })
        }
        Preset::HermiteGaussian => {
            let map = FeatureMap64::hermite(c.hermite.degree)?;
            let mut rng = stream(seed, &[COVARIATES]);
            let xs = src_law.draw(n, &mut rng);
            let xt = tgt_law.draw(m, &mut rng);
            let v =
                params.hermite_truth().cloned().ok_or_else(|| BenchError::Config("hermite truth missing".into()))?;
            let mean = map.feature_matrix(&xs)? * &v;
            let data = Dataset64::new(xs, add_noise(&mean, sd, seed), xt)?;
            let kernel = KernelSpec64::feature_linear(map);
            Ok(Sample {
                instance: ProblemInstance64::new(
                    data,
                    GroundTruth::Feature { v, radius: Some(params.radius) },
                    sigma2,
                    None,
                )?,
                teacher_kernel: kernel.clone(),
                student_kernel: kernel,
                gram: None,
                spectral: None,
            })
        }
        Preset::LaplaceBeta | Preset::Custom => {
            let (teacher_kernel, student_kernel) = match params.preset {
                Preset::LaplaceBeta => (KernelSpec64::laplace(c.laplace.nu_s)?, KernelSpec64::laplace(c.laplace.nu_t)?),
                _ => {
                    let make = |s: f64| match c.custom.kernel {
                        KernelKind::Gaussian => KernelSpec64::gaussian(s),
                        KernelKind::Laplace => KernelSpec64::laplace(s),
                    };
                    (make(c.custom.teacher_scale)?, make(c.custom.student_scale)?)
                }
            };
            let mut rng = stream(seed, &[COVARIATES]);
            let xs = src_law.draw(n, &mut rng);
            let xt = tgt_law.draw(m, &mut rng);
            let bare = Dataset64::new(xs, vec![0.0; n], xt)?;
            let gram = build_gram(&teacher_kernel, &student_kernel, &bare)?;
            let mut rng = stream(seed, &[TRUTH]);
            let mut theta = normalized_gaussian(m, 1.0, &mut rng);
            let h = hilbert_norm(&StudentWeights::new(theta.clone())?, &gram)?;
            if h > 0.0 {
                theta *= params.radius / h;
            }
            let mean = &gram.kt_nm * &theta;
            let data = bare.with_responses(DVector::from_vec(add_noise(&mean, sd, seed)))?;
            Ok(Sample {
                instance: ProblemInstance64::new(data, GroundTruth::Representer(theta), sigma2, None)?,
                teacher_kernel,
                student_kernel,
                gram: Some(gram),
                spectral: None,
            })
        }
    }
}
