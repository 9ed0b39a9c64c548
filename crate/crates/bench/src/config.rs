//! Experiment configuration, read from a TOML file.
//!
//! The accepted keys are listed in [`SCHEMA`].

use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::error::{BenchError, Result};

/// Annotated example of every configuration key with its default.
pub const SCHEMA: &str = r#"preset = "diagonal"          # diagonal | hermite_gaussian | laplace_beta | custom
seed = 1
trials = 20
n_grid = [64, 128, 256, 512, 1024, 2048, 4096]
m = "tied"                   # "tied" (m = n) or a fixed integer; laplace_beta defaults to 256
teacher_lambda = 0.5
noise_sd = 0.5
radius = 1.0
mse_mode = "exact"           # exact | empirical
record_timing = false
threads = 0                  # 0 = all cores
out = "out"                  # output directory for sweep artifacts

[gamma]
policy = "optimal"           # fixed | optimal | oracle_grid; oracle_grid unless diagonal
value = 0.1                  # fixed policy
lo = 1e-8                    # oracle grid, log-spaced
hi = 100.0
per_decade = 4
# alpha/beta for the optimal rule on presets other than diagonal

[diagonal]
alpha = 1.0
beta = 1.0

[hermite]
degree = 4
sigma_p = 0.9

[laplace]
a = 2.0
nu_s = 1.0
nu_t = 0.25

[custom]
kernel = "gaussian"          # gaussian | laplace
teacher_scale = 0.5
student_scale = 0.5
source_mean = 0.0
source_sd = 1.0
target_mean = 0.5
target_sd = 0.8

[picard]                     # empirical mode only
eta = 0.0                    # 0 = automatic
tol = 1e-10
max_iter = 100000
"#;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    HermiteGaussian,
    LaplaceBeta,
    Diagonal,
    Custom,
}

impl Preset {
    pub fn name(&self) -> &'static str {
        match self {
            Preset::HermiteGaussian => "hermite_gaussian",
            Preset::LaplaceBeta => "laplace_beta",
            Preset::Diagonal => "diagonal",
            Preset::Custom => "custom",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "hermite_gaussian" | "hermite" => Ok(Preset::HermiteGaussian),
            "laplace_beta" | "laplace" => Ok(Preset::LaplaceBeta),
            "diagonal" => Ok(Preset::Diagonal),
            "custom" => Ok(Preset::Custom),
            other => Err(BenchError::Config(format!("unknown preset '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GammaPolicyKind {
    Fixed,
    Optimal,
    OracleGrid,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GammaConfig {
    pub policy: Option<GammaPolicyKind>,
    pub value: Option<f64>,
    pub lo: f64,
    pub hi: f64,
    pub per_decade: usize,
    pub alpha: Option<f64>,
    pub beta: Option<f64>,
}

impl Default for GammaConfig {
    fn default() -> Self {
        Self { policy: None, value: None, lo: 1e-8, hi: 1e2, per_decade: 4, alpha: None, beta: None }
    }
}

/// How the student penalty is chosen in each trial.
#[derive(Debug, Clone, PartialEq)]
pub enum GammaPolicy {
    Fixed(f64),
    /// `γ = (1/λ)(σ²/(R²n))^(2(α+β)/(2α+1))`.
    Optimal {
        alpha: f64,
        beta: f64,
    },
    /// Per-method minimizer of the exact MSE over a log grid.
    OracleGrid(Vec<f64>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MseMode {
    Exact,
    Empirical,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum MSpec {
    Tied(String),
    Fixed(usize),
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DiagonalConfig {
    pub alpha: f64,
    pub beta: f64,
}

impl Default for DiagonalConfig {
    fn default() -> Self {
        Self { alpha: 1.0, beta: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HermiteConfig {
    pub degree: usize,
    /// Standard deviation of the source covariates; the target is N(0, 1).
    pub sigma_p: f64,
}

impl Default for HermiteConfig {
    fn default() -> Self {
        Self { degree: 4, sigma_p: 0.9 }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LaplaceConfig {
    /// Source covariates Beta(a, 1); the target is Uniform[0, 1].
    pub a: f64,
    pub nu_s: f64,
    pub nu_t: f64,
}

impl Default for LaplaceConfig {
    fn default() -> Self {
        Self { a: 2.0, nu_s: 1.0, nu_t: 0.25 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelKind {
    Gaussian,
    Laplace,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CustomConfig {
    pub kernel: KernelKind,
    pub teacher_scale: f64,
    pub student_scale: f64,
    pub source_mean: f64,
    pub source_sd: f64,
    pub target_mean: f64,
    pub target_sd: f64,
}

impl Default for CustomConfig {
    fn default() -> Self {
        Self {
            kernel: KernelKind::Gaussian,
            teacher_scale: 0.5,
            student_scale: 0.5,
            source_mean: 0.0,
            source_sd: 1.0,
            target_mean: 0.5,
            target_sd: 0.8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PicardConfig {
    /// 0 selects the stepsize automatically.
    pub eta: f64,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for PicardConfig {
    fn default() -> Self {
        Self { eta: 0.0, tol: 1e-10, max_iter: 100_000 }
    }
}

/// The raw file contents; every field optional so presets can fill defaults.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    preset: Option<Preset>,
    seed: Option<u64>,
    trials: Option<usize>,
    n_grid: Option<Vec<usize>>,
    m: Option<MSpec>,
    teacher_lambda: Option<f64>,
    noise_sd: Option<f64>,
    radius: Option<f64>,
    mse_mode: Option<MseMode>,
    record_timing: Option<bool>,
    threads: Option<usize>,
    out: Option<PathBuf>,
    #[serde(default)]
    gamma: GammaConfig,
    #[serde(default)]
    diagonal: DiagonalConfig,
    #[serde(default)]
    hermite: HermiteConfig,
    #[serde(default)]
    laplace: LaplaceConfig,
    #[serde(default)]
    custom: CustomConfig,
    #[serde(default)]
    picard: PicardConfig,
}

/// Validated experiment description.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub preset: Preset,
    pub seed: u64,
    pub trials: usize,
    pub n_grid: Vec<usize>,
    /// `None` ties `m` to `n`.
    pub m_fixed: Option<usize>,
    pub teacher_lambda: f64,
    pub noise_sd: f64,
    pub radius: f64,
    pub gamma: GammaPolicy,
    pub mse_mode: MseMode,
    pub record_timing: bool,
    pub threads: usize,
    pub out_dir: PathBuf,
    pub diagonal: DiagonalConfig,
    pub hermite: HermiteConfig,
    pub laplace: LaplaceConfig,
    pub custom: CustomConfig,
    pub picard: PicardConfig,
}

/// Command-line overrides applied on top of a file or preset defaults.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub preset: Option<Preset>,
    pub seed: Option<u64>,
    pub trials: Option<usize>,
    pub threads: Option<usize>,
    pub out: Option<PathBuf>,
}

const DEFAULT_GRID: [usize; 7] = [64, 128, 256, 512, 1024, 2048, 4096];

fn log_grid(lo: f64, hi: f64, per_decade: usize) -> Result<Vec<f64>> {
    if !(lo > 0.0 && hi > lo && per_decade > 0) {
        return Err(BenchError::Config("gamma grid needs 0 < lo < hi and per_decade > 0".into()));
    }
    let steps = ((hi / lo).log10() * per_decade as f64).round() as usize;
    Ok((0..=steps).map(|k| lo * 10f64.powf(k as f64 / per_decade as f64)).collect())
}

impl ExperimentConfig {
    /// Defaults for a preset.
    pub fn preset_defaults(preset: Preset) -> Self {
        Self::from_raw(RawConfig { preset: Some(preset), ..Default::default() }, &Overrides::default())
            .expect("preset defaults are valid")
    }

    pub fn from_toml_str(text: &str, overrides: &Overrides) -> Result<Self> {
        let raw: RawConfig = toml::from_str(text).map_err(|e| BenchError::Config(e.to_string()))?;
        Self::from_raw(raw, overrides)
    }

    pub fn from_file(path: &Path, overrides: &Overrides) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| BenchError::io(path, e))?;
        Self::from_toml_str(&text, overrides)
    }

    fn from_raw(raw: RawConfig, ov: &Overrides) -> Result<Self> {
        let preset = ov.preset.or(raw.preset).unwrap_or(Preset::Diagonal);
        let m_fixed = match raw.m {
            None => (preset == Preset::LaplaceBeta).then_some(256),
            Some(MSpec::Fixed(m)) => Some(m),
            Some(MSpec::Tied(s)) if s == "tied" => None,
            Some(MSpec::Tied(s)) => {
                return Err(BenchError::Config(format!("m must be \"tied\" or an integer, got '{s}'")))
            }
        };
        let g = &raw.gamma;
        let default_policy = match preset {
            Preset::Diagonal => GammaPolicyKind::Optimal,
            _ => GammaPolicyKind::OracleGrid,
        };
        let gamma = match g.policy.unwrap_or(default_policy) {
            GammaPolicyKind::Fixed => GammaPolicy::Fixed(
                g.value.ok_or_else(|| BenchError::Config("fixed gamma policy needs gamma.value".into()))?,
            ),
            GammaPolicyKind::Optimal => {
                let (alpha, beta) = match (g.alpha, g.beta, preset) {
                    (Some(a), Some(b), _) => (a, b),
                    (None, None, Preset::Diagonal) => (raw.diagonal.alpha, raw.diagonal.beta),
                    _ => {
                        return Err(BenchError::Config(
                            "optimal gamma policy needs gamma.alpha and gamma.beta for this preset".into(),
                        ))
                    }
                };
                GammaPolicy::Optimal { alpha, beta }
            }
            GammaPolicyKind::OracleGrid => GammaPolicy::OracleGrid(log_grid(g.lo, g.hi, g.per_decade)?),
        };
        let cfg = Self {
            preset,
            seed: ov.seed.or(raw.seed).unwrap_or(1),
            trials: ov.trials.or(raw.trials).unwrap_or(20),
            n_grid: raw.n_grid.unwrap_or_else(|| DEFAULT_GRID.to_vec()),
            m_fixed,
            teacher_lambda: raw.teacher_lambda.unwrap_or(0.5),
            noise_sd: raw.noise_sd.unwrap_or(0.5),
            radius: raw.radius.unwrap_or(1.0),
            gamma,
            mse_mode: raw.mse_mode.unwrap_or(MseMode::Exact),
            record_timing: raw.record_timing.unwrap_or(false),
            threads: ov.threads.or(raw.threads).unwrap_or(0),
            out_dir: ov.out.clone().or(raw.out).unwrap_or_else(|| PathBuf::from("out")),
            diagonal: raw.diagonal,
            hermite: raw.hermite,
            laplace: raw.laplace,
            custom: raw.custom,
            picard: raw.picard,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(BenchError::Config(msg.to_string()));
        if self.n_grid.is_empty() || self.n_grid[0] == 0 {
            return bad("n_grid must be non-empty with positive sizes");
        }
        if self.n_grid.windows(2).any(|w| w[1] <= w[0]) {
            return bad("n_grid must be strictly increasing");
        }
        if self.trials == 0 {
            return bad("trials must be at least 1");
        }
        if self.m_fixed == Some(0) {
            return bad("m must be positive");
        }
        if !(self.teacher_lambda > 0.0) {
            return bad("teacher_lambda must be positive");
        }
        if !(self.noise_sd >= 0.0) || !(self.radius > 0.0) {
            return bad("noise_sd must be non-negative and radius positive");
        }
        match &self.gamma {
            GammaPolicy::Fixed(v) if !(*v >= 0.0) => return bad("fixed gamma must be non-negative"),
            GammaPolicy::Optimal { .. } if self.noise_sd == 0.0 => return bad("optimal gamma rule needs noise_sd > 0"),
            GammaPolicy::Optimal { alpha, beta } if !(*alpha > 0.5 && *beta > 0.5 && *beta < 0.5 + alpha) => {
                return bad("optimal gamma rule needs alpha > 1/2 and beta in (1/2, 1/2 + alpha)")
            }
            _ => {}
        }
        match self.preset {
            Preset::Diagonal => {
                if self.m_fixed.is_some() {
                    return bad("diagonal preset requires m tied to n");
                }
                let DiagonalConfig { alpha, beta } = self.diagonal;
                if !(alpha > 0.5 && beta > 0.5 && beta < 0.5 + alpha) {
                    return bad("diagonal preset needs alpha > 1/2 and beta in (1/2, 1/2 + alpha)");
                }
            }
            Preset::HermiteGaussian => {
                if self.hermite.degree == 0 || !(self.hermite.sigma_p > 0.0) {
                    return bad("hermite preset needs degree >= 1 and sigma_p > 0");
                }
            }
            Preset::LaplaceBeta => {
                let l = &self.laplace;
                if !(l.a > 0.0 && l.nu_s > 0.0 && l.nu_t > 0.0) {
                    return bad("laplace preset needs a, nu_s, nu_t > 0");
                }
            }
            Preset::Custom => {
                let c = &self.custom;
                if !(c.teacher_scale > 0.0 && c.student_scale > 0.0 && c.source_sd > 0.0 && c.target_sd > 0.0) {
                    return bad("custom preset needs positive scales and standard deviations");
                }
            }
        }
        if self.mse_mode == MseMode::Empirical
            && !(self.picard.tol > 0.0 && self.picard.max_iter > 0 && self.picard.eta >= 0.0)
        {
            return bad("picard settings need tol > 0, max_iter > 0, eta >= 0");
        }
        Ok(())
    }

    pub fn m_for(&self, n: usize) -> usize {
        self.m_fixed.unwrap_or(n)
    }
}
