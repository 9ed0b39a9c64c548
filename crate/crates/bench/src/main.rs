use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use nalgebra::SymmetricEigen;
use rat_bench::config::SCHEMA;
use rat_bench::experiment::{choose_gamma, ExactMse};
use rat_bench::rates::cell_medians;
use rat_bench::sampling::trial_seed;
use rat_bench::{
    emit_svg_plot, fit_rates, sample_dataset, BenchError, ExperimentConfig, Overrides, Preset, PresetParams,
    RecordWriter, Result, Sample,
};
use rat_core::{
    build_krr_teacher, check_thm3_decay, estimate_stability, exact_mse_rat, exact_mse_sm, fit_eigendecay,
    monte_carlo_mse, noise_covariance, rat_closed_form, run_picard, sm_closed_form, Estimator, GramSet64, LossModel,
    RatProblem, RatRunConfig, StudentConfig, TeacherOperator64,
};

#[derive(Parser)]
#[command(
    name = "rat-bench",
    version,
    about = "Residual-as-teacher vs soft matching on synthetic covariate-shift problems",
    after_long_help = format!("Configuration file (TOML), with defaults:\n\n{SCHEMA}")
)]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct GlobalArgs {
    /// TOML configuration file; preset defaults when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed; every trial stream is derived from it.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory for sweep artifacts.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// diagonal | hermite_gaussian | laplace_beta | custom
    #[arg(long, global = true)]
    preset: Option<String>,
    /// Trials per grid cell.
    #[arg(long, global = true)]
    trials: Option<usize>,
    /// Worker threads (0 = all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Also write a log-log SVG plot of the sweep.
    #[arg(long, global = true)]
    emit_svg: bool,
}

#[derive(Args)]
struct InstanceArgs {
    /// Source size (defaults to the first grid value).
    #[arg(long)]
    n: Option<usize>,
    /// Student penalty; otherwise chosen by the configured policy.
    #[arg(long)]
    gamma: Option<f64>,
}

#[derive(Subcommand)]
enum Command {
    /// Solve one sampled instance and print weights and exact MSE.
    Solve(InstanceArgs),
    /// Compare exact MSE with a Monte Carlo estimate on one instance.
    Mse {
        #[command(flatten)]
        inst: InstanceArgs,
        /// Noise draws for the Monte Carlo estimate.
        #[arg(long, default_value_t = 2000)]
        mc_trials: usize,
    },
    /// Run the full grid sweep; writes records.csv (and rates.svg).
    Sweep,
    /// Spectra, noise covariance, stability constants and a Picard trace.
    Diagnose {
        #[command(flatten)]
        inst: InstanceArgs,
        /// Stability probes.
        #[arg(long, default_value_t = 256)]
        probes: usize,
    },
}

fn load_config(g: &GlobalArgs) -> Result<ExperimentConfig> {
    let overrides = Overrides {
        preset: g.preset.as_deref().map(Preset::parse).transpose()?,
        seed: g.seed,
        trials: g.trials,
        threads: g.threads,
        out: g.out.clone(),
    };
    match &g.config {
        Some(path) => ExperimentConfig::from_file(path, &overrides),
        None => ExperimentConfig::from_toml_str("", &overrides),
    }
}

struct Instance {
    sample: Sample,
    gram: GramSet64,
    teacher: TeacherOperator64,
    student: StudentConfig<f64>,
    gammas: [f64; 2],
}

fn instance(cfg: &ExperimentConfig, args: &InstanceArgs) -> Result<Instance> {
    let n = args.n.unwrap_or(cfg.n_grid[0]);
    let cell = cfg.n_grid.iter().position(|&v| v == n).unwrap_or(0);
    let params = PresetParams::new(cfg)?;
    let mut sample = sample_dataset(&params, n, cfg.m_for(n), trial_seed(cfg.seed, cell, 0))?;
    let gammas = match args.gamma {
        Some(g) => [g, g],
        None => {
            let exact = ExactMse::for_sample(&mut sample, cfg.teacher_lambda)?;
            [choose_gamma(cfg, n, &exact, Estimator::Rat)?, choose_gamma(cfg, n, &exact, Estimator::Sm)?]
        }
    };
    let gram = sample.gram()?.clone();
    let teacher = build_krr_teacher(&gram, cfg.teacher_lambda)?;
    let student = StudentConfig::new(gammas[0], sample.student_kernel.clone())?;
    Ok(Instance { sample, gram, teacher, student, gammas })
}

fn fmt_vec(v: &nalgebra::DVector<f64>) -> String {
    v.iter().map(|x| format!("{x:.6e}")).collect::<Vec<_>>().join(" ")
}

fn with_gamma(student: &StudentConfig<f64>, gamma: f64) -> Result<StudentConfig<f64>> {
    Ok(StudentConfig::new(gamma, student.kernel.clone())?)
}

fn solve(cfg: &ExperimentConfig, args: &InstanceArgs) -> Result<()> {
    let inst = instance(cfg, args)?;
    let y = inst.sample.instance.data.source_y();
    let sm_student = with_gamma(&inst.student, inst.gammas[1])?;
    let rat = rat_closed_form(&inst.gram, &inst.teacher, &inst.student, y)?;
    let sm = sm_closed_form(&inst.gram, &inst.teacher, &sm_student, y)?;
    let problem = RatProblem::new(&inst.gram, &inst.teacher, &inst.student, y, LossModel::LeastSquares)?;
    let run = RatRunConfig::default().with_tol(cfg.picard.tol).with_max_iter(cfg.picard.max_iter);
    let picard = run_picard(&run, &problem)?;
    let rat_mse = exact_mse_rat(&inst.gram, &inst.teacher, &inst.student, &inst.sample.instance)?;
    let (sm_mse, _) = exact_mse_sm(&inst.gram, &inst.teacher, &sm_student, &inst.sample.instance)?;
    println!("preset {} n {} m {}", cfg.preset.name(), inst.gram.n(), inst.gram.m());
    println!("gamma RAT {:.6e} SM {:.6e}", inst.gammas[0], inst.gammas[1]);
    println!("theta_RAT {}", fmt_vec(&rat.weights.theta));
    println!("theta_SM {}", fmt_vec(&sm.weights.theta));
    println!(
        "picard iterations {} converged {} max|theta - theta_RAT| {:.3e}",
        picard.iterations,
        picard.converged,
        (&picard.weights.theta - &rat.weights.theta).amax()
    );
    for r in [rat_mse, sm_mse] {
        println!(
            "{:<3} mse {:.6e} bias_sq {:.6e} variance {:.6e}",
            r.estimator.label(),
            r.total,
            r.bias_sq,
            r.variance
        );
    }
    Ok(())
}

fn mse(cfg: &ExperimentConfig, args: &InstanceArgs, mc_trials: usize) -> Result<()> {
    let inst = instance(cfg, args)?;
    println!("preset {} n {} m {} noise draws {}", cfg.preset.name(), inst.gram.n(), inst.gram.m(), mc_trials);
    println!("method gamma exact monte_carlo std_err z");
    for (k, est) in [Estimator::Rat, Estimator::Sm].into_iter().enumerate() {
        let student = with_gamma(&inst.student, inst.gammas[k])?;
        let exact = match est {
            Estimator::Rat => exact_mse_rat(&inst.gram, &inst.teacher, &student, &inst.sample.instance)?,
            Estimator::Sm => exact_mse_sm(&inst.gram, &inst.teacher, &student, &inst.sample.instance)?.0,
        };
        let mc = monte_carlo_mse(est, &inst.gram, &inst.teacher, &student, &inst.sample.instance, mc_trials, cfg.seed)?;
        let z = if mc.std_err > 0.0 { (mc.mean - exact.total) / mc.std_err } else { 0.0 };
        println!(
            "{} {:.4e} {:.6e} {:.6e} {:.2e} {:+.2}",
            est.label(),
            inst.gammas[k],
            exact.total,
            mc.mean,
            mc.std_err,
            z
        );
    }
    Ok(())
}

fn diagnose(cfg: &ExperimentConfig, args: &InstanceArgs, probes: usize) -> Result<()> {
    let inst = instance(cfg, args)?;
    let (n, m) = (inst.gram.n(), inst.gram.m());
    println!("preset {} n {n} m {m} gamma {:.4e}", cfg.preset.name(), inst.gammas[0]);
    let spec = |mat: &nalgebra::DMatrix<f64>, s: f64| -> Vec<f64> {
        SymmetricEigen::new(mat / s).eigenvalues.iter().copied().collect()
    };
    for (label, values) in [("source", spec(&inst.gram.k_nn, n as f64)), ("target", spec(&inst.gram.kt_mm, m as f64))] {
        match fit_eigendecay(&values) {
            Ok(f) => {
                println!("{label} eigendecay exponent {:.4} (rms {:.2e}, {} eigenvalues)", f.alpha, f.residual, f.used)
            }
            Err(e) => println!("{label} eigendecay: {e}"),
        }
    }
    let noise = noise_covariance(&inst.teacher);
    println!("teacher noise covariance opnorm {:.6e}", noise.opnorm);

    let y = inst.sample.instance.data.source_y();
    let problem = RatProblem::new(&inst.gram, &inst.teacher, &inst.student, y, LossModel::LeastSquares)?;
    let anchor = rat_closed_form(&inst.gram, &inst.teacher, &inst.student, y)?;
    let stab = estimate_stability(&problem, &anchor.weights, probes, cfg.seed)?;
    match stab.l_hat {
        Some(l) => println!(
            "stability L_hat {l:.6e} mu_hat {:.6e} epsilon {:.3e} ({} pairs)",
            stab.mu_hat, stab.epsilon, stab.pairs
        ),
        None => println!("stability: no probe with positive inner product ({} pairs)", stab.pairs),
    }
    let mut run = RatRunConfig::default().with_tol(cfg.picard.tol).with_max_iter(cfg.picard.max_iter);
    if cfg.picard.eta > 0.0 {
        run = run.with_eta(cfg.picard.eta);
    }
    let sol = run_picard(&run, &problem)?;
    let trace = sol.trace.as_ref().expect("picard returns a trace");
    println!("picard eta {:.6e} iterations {} converged {}", trace.eta, sol.iterations, sol.converged);
    let last = trace.records.len() - 1;
    for (i, r) in trace.records.iter().enumerate() {
        if i < 10 || i == last || i.is_power_of_two() {
            println!("  k {:>6} defect {:.6e}", r.k, r.defect);
        }
    }
    if trace.records.len() >= 3 {
        let fitted = anchor.weights.fitted(&inst.gram);
        let d = check_thm3_decay(trace, &stab, &fitted)?;
        println!(
            "decay check: min-defect bound {} geometric bound {} max contraction {}",
            d.weak_pass.map_or("n/a".to_string(), |p| p.to_string()),
            d.geometric_pass.map_or("n/a".to_string(), |p| p.to_string()),
            d.max_contraction.map_or("n/a".to_string(), |c| format!("{c:.4}"))
        );
    }
    Ok(())
}

fn sweep(cfg: &ExperimentConfig, emit_svg: bool) -> Result<()> {
    let dir = &cfg.out_dir;
    std::fs::create_dir_all(dir).map_err(|e| BenchError::io(dir, e))?;
    let csv_path = dir.join("records.csv");
    let file = std::fs::File::create(&csv_path).map_err(|e| BenchError::io(&csv_path, e))?;
    let mut writer = RecordWriter::new(std::io::BufWriter::new(file))?;
    let mut records = Vec::new();
    let spectra = rat_bench::run_experiment_with(cfg, |r| {
        writer.write(r)?;
        records.push(r.clone());
        Ok(())
    })?;
    writer.finish()?;
    println!("wrote {} records to {}", records.len(), csv_path.display());
    if !records.is_empty() && records.iter().all(|r| !r.is_ok()) {
        let first = records[0].error.clone().unwrap_or_default();
        return Err(BenchError::Core(rat_core::Error::Numerical {
            context: "sweep",
            detail: format!("every cell failed; first error: {first}"),
            condition: None,
        }));
    }
    if let Some(s) = &spectra {
        println!(
            "measured spectra at n = {}: alpha {:.4} beta {:.4} predicted exponent {:.4}",
            s.n,
            s.alpha,
            s.beta,
            -2.0 * s.beta / (2.0 * s.alpha + 1.0)
        );
    }
    match fit_rates(&records, spectra.as_ref()) {
        Ok(fits) => {
            println!("method slope intercept r2 plateau_ratio");
            for f in &fits {
                println!(
                    "{} {:.4} {:.4} {:.4} {:.4}",
                    f.method.label(),
                    f.slope,
                    f.intercept,
                    f.r_squared,
                    f.plateau_ratio
                );
            }
            if emit_svg {
                let path = dir.join("rates.svg");
                emit_svg_plot(&fits, &cell_medians(&records), &path)?;
                println!("wrote {}", path.display());
            }
        }
        Err(e) => println!("no rate fit: {e}"),
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let cfg = load_config(&cli.global)?;
    match &cli.command {
        Command::Solve(a) => solve(&cfg, a),
        Command::Mse { inst, mc_trials } => mse(&cfg, inst, *mc_trials),
        Command::Sweep => sweep(&cfg, cli.global.emit_svg),
        Command::Diagnose { inst, probes } => diagnose(&cfg, inst, *probes),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
