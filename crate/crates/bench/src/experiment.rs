//! Sweeps over the source-size grid.

use std::time::Instant;

use nalgebra::{DMatrix, SymmetricEigen};
use rat_core::{
    build_krr_teacher, fit_eigendecay, optimal_gamma, run_picard, second_moments, sm_closed_form, Estimator,
    FeatureMse, GroundTruth, KernelMse, LossModel, MseReport, RatProblem, RatRunConfig, SpectralMse, StudentConfig,
};
use rayon::prelude::*;

use crate::config::{ExperimentConfig, GammaPolicy, MseMode};
use crate::error::{BenchError, Result};
use crate::records::{MethodTag, TrialRecord};
use crate::sampling::{sample_dataset, trial_seed, PresetParams, Sample};

const METHODS: [Estimator; 2] = [Estimator::Rat, Estimator::Sm];

/// Spectra are measured at the largest grid size not above this.
const SPECTRUM_MAX_N: usize = 1024;

/// Decay exponents measured on one sampled problem.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeasuredSpectra {
    pub n: usize,
    /// Source spectrum decays like `j^(−2α)`.
    pub alpha: f64,
    /// Target spectrum decays like `j^(−2β)`.
    pub beta: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentOutput {
    pub records: Vec<TrialRecord>,
    pub spectra: Option<MeasuredSpectra>,
}

/// Exact bias and variance for one sampled problem at any `γ`.
pub enum ExactMse {
    Spectral(SpectralMse<f64>),
    Feature(FeatureMse<f64>),
    Kernel(KernelMse<f64>),
}

impl ExactMse {
    /// Picks the cheapest exact backend for the sample: spectral for the
    /// diagonal preset, feature space for finite feature maps, kernel
    /// matrices otherwise.
    pub fn for_sample(sample: &mut Sample, lambda: f64) -> Result<Self> {
        let inst = &sample.instance;
        let n = inst.data.n();
        if let Some(s) = &sample.spectral {
            return Ok(ExactMse::Spectral(SpectralMse::new(
                s.mu.clone(),
                s.mu_til.clone(),
                s.v.clone(),
                lambda,
                inst.sigma2,
                n,
            )?));
        }
        if let (Some(map), GroundTruth::Feature { v, .. }) = (sample.feature_map(), &inst.truth) {
            let moments = second_moments(map, &inst.data)?;
            return Ok(ExactMse::Feature(FeatureMse::new(&moments, lambda, v.clone(), inst.sigma2, n)?));
        }
        let gram = sample.gram()?.clone();
        let teacher = build_krr_teacher(&gram, lambda)?;
        Ok(ExactMse::Kernel(KernelMse::new(&gram, &teacher, &sample.instance)?))
    }

    pub fn evaluate(&self, estimator: Estimator, gamma: f64) -> Result<MseReport<f64>> {
        Ok(match self {
            ExactMse::Spectral(s) => s.evaluate(estimator, gamma),
            ExactMse::Feature(f) => f.evaluate(estimator, gamma)?,
            ExactMse::Kernel(k) => k.evaluate(estimator, gamma)?,
        })
    }
}

/// `γ` for one method under the configured policy.
pub fn choose_gamma(config: &ExperimentConfig, n: usize, exact: &ExactMse, estimator: Estimator) -> Result<f64> {
    match &config.gamma {
        GammaPolicy::Fixed(g) => Ok(*g),
        GammaPolicy::Optimal { alpha, beta } => Ok(optimal_gamma(
            config.teacher_lambda,
            config.noise_sd * config.noise_sd,
            config.radius,
            n,
            *alpha,
            *beta,
        )?),
        GammaPolicy::OracleGrid(grid) => {
            let mut best: Option<(f64, f64)> = None;
            let mut last_err = None;
            for &g in grid {
                match exact.evaluate(estimator, g) {
                    Ok(r) if r.total.is_finite() => {
                        if best.is_none_or(|(_, v)| r.total < v) {
                            best = Some((g, r.total));
                        }
                    }
                    Ok(_) => {}
                    Err(e) => last_err = Some(e),
                }
            }
            match (best, last_err) {
                (Some((g, _)), _) => Ok(g),
                (None, Some(e)) => Err(e),
                (None, None) => Err(BenchError::Fit("oracle grid produced no finite MSE".into())),
            }
        }
    }
}

fn base_record(config: &ExperimentConfig, n: usize, m: usize, trial: usize, est: Estimator) -> TrialRecord {
    TrialRecord {
        preset: config.preset.name().to_string(),
        n,
        m,
        trial,
        method: MethodTag::from(est),
        gamma: None,
        mse: None,
        bias_sq: None,
        variance: None,
        iters: None,
        defect: None,
        wall_ms: None,
        error: None,
    }
}

fn failed(mut r: TrialRecord, e: &BenchError) -> TrialRecord {
    r.error = Some(e.to_string());
    r
}

fn empirical(
    config: &ExperimentConfig,
    sample: &mut Sample,
    est: Estimator,
    gamma: f64,
    rec: &mut TrialRecord,
) -> Result<()> {
    let lambda = config.teacher_lambda;
    let student = StudentConfig::new(gamma, sample.student_kernel.clone())?;
    let gram = sample.gram()?.clone();
    let teacher = build_krr_teacher(&gram, lambda)?;
    let (_, f_t) = sample.instance.truth_values(&gram)?;
    let y = sample.instance.data.source_y();
    let weights = match est {
        Estimator::Rat => {
            let mut run = RatRunConfig::default().with_tol(config.picard.tol).with_max_iter(config.picard.max_iter);
            if config.picard.eta > 0.0 {
                run = run.with_eta(config.picard.eta);
            }
            let problem = RatProblem::new(&gram, &teacher, &student, y, LossModel::LeastSquares)?;
            let sol = run_picard(&run, &problem)?;
            rec.iters = Some(sol.iterations);
            rec.defect = sol.final_defect;
            sol.weights
        }
        Estimator::Sm => sm_closed_form(&gram, &teacher, &student, y)?.weights,
    };
    let err = weights.fitted(&gram) - f_t;
    rec.mse = Some(err.norm_squared() / gram.m() as f64);
    Ok(())
}

/// Both method rows for one (cell, trial).
pub fn run_trial(params: &PresetParams, cell: usize, n: usize, trial: usize) -> Vec<TrialRecord> {
    let config = &params.config;
    let m = config.m_for(n);
    let start = Instant::now();
    let prepared = sample_dataset(params, n, m, trial_seed(config.seed, cell, trial)).and_then(|mut s| {
        let exact = ExactMse::for_sample(&mut s, config.teacher_lambda)?;
        Ok((s, exact))
    });
    let setup_ms = start.elapsed().as_secs_f64() * 1e3;
    let (mut sample, exact) = match prepared {
        Ok(p) => p,
        Err(e) => return METHODS.iter().map(|&est| failed(base_record(config, n, m, trial, est), &e)).collect(),
    };
    METHODS
        .iter()
        .map(|&est| {
            let t0 = Instant::now();
            let mut rec = base_record(config, n, m, trial, est);
            let outcome = choose_gamma(config, n, &exact, est).and_then(|g| {
                rec.gamma = Some(g);
                match config.mse_mode {
                    MseMode::Exact => {
                        let r = exact.evaluate(est, g)?;
                        if !r.total.is_finite() {
                            return Err(BenchError::Core(rat_core::Error::Numerical {
                                context: "exact mse",
                                detail: format!("non-finite MSE at gamma {g:e}"),
                                condition: None,
                            }));
                        }
                        rec.mse = Some(r.total);
                        rec.bias_sq = Some(r.bias_sq);
                        rec.variance = Some(r.variance);
                        Ok(())
                    }
                    MseMode::Empirical => empirical(config, &mut sample, est, g, &mut rec),
                }
            });
            if config.record_timing {
                rec.wall_ms = Some(setup_ms + t0.elapsed().as_secs_f64() * 1e3);
            }
            match outcome {
                Ok(()) => rec,
                Err(e) => {
                    rec.mse = None;
                    failed(rec, &e)
                }
            }
        })
        .collect()
}

fn spectrum_of(m: &DMatrix<f64>, scale: f64) -> Vec<f64> {
    SymmetricEigen::new(m / scale).eigenvalues.iter().copied().collect()
}

/// Fits source and target eigendecay on trial 0 of the largest cell with
/// `n ≤ 1024` (the smallest cell when all are larger).
pub fn measure_spectra(params: &PresetParams) -> Result<MeasuredSpectra> {
    let cfg = &params.config;
    let (cell, n) =
        cfg.n_grid.iter().copied().enumerate().rfind(|&(_, n)| n <= SPECTRUM_MAX_N).unwrap_or((0, cfg.n_grid[0]));
    let m = cfg.m_for(n);
    let mut sample = sample_dataset(params, n, m, trial_seed(cfg.seed, cell, 0))?;
    let (src, tgt) = if let Some(s) = &sample.spectral {
        (s.mu.clone(), s.mu_til.clone())
    } else if let Some(map) = sample.feature_map() {
        let mom = second_moments(map, &sample.instance.data)?;
        (spectrum_of(&mom.sigma, 1.0), spectrum_of(&mom.sigma_til, 1.0))
    } else {
        let gram = sample.gram()?;
        (spectrum_of(&gram.k_nn, n as f64), spectrum_of(&gram.kt_mm, m as f64))
    };
    Ok(MeasuredSpectra { n, alpha: fit_eigendecay(&src)?.alpha, beta: fit_eigendecay(&tgt)?.alpha })
}

fn pool(config: &ExperimentConfig) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(config.threads)
        .build()
        .map_err(|e| BenchError::Config(format!("thread pool: {e}")))
}

/// Runs every cell and trial, handing records to `sink` in (cell, trial,
/// method) order as each cell completes. Trials within a cell run in
/// parallel; output does not depend on scheduling.
pub fn run_experiment_with<F>(config: &ExperimentConfig, mut sink: F) -> Result<Option<MeasuredSpectra>>
where
    F: FnMut(&TrialRecord) -> Result<()>,
{
    let params = PresetParams::new(config)?;
    let pool = pool(config)?;
    for (cell, &n) in config.n_grid.iter().enumerate() {
        let rows: Vec<Vec<TrialRecord>> =
            pool.install(|| (0..config.trials).into_par_iter().map(|t| run_trial(&params, cell, n, t)).collect());
        for r in rows.iter().flatten() {
            sink(r)?;
        }
    }
    Ok(pool.install(|| measure_spectra(&params).ok()))
}

pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentOutput> {
    let mut records = Vec::new();
    let spectra = run_experiment_with(config, |r| {
        records.push(r.clone());
        Ok(())
    })?;
    Ok(ExperimentOutput { records, spectra })
}
