//! Acceptance criteria. Runs without the libtest harness so that every
//! criterion prints one PASS/FAIL line; exits non-zero if any fails.

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::Command;
use std::time::{Duration, Instant};

use common::{linear_instance, log_uniform, random_instance};
use nalgebra::DVector;
use rand::Rng;
use rat_bench::sampling::{sample_dataset, trial_seed, PresetParams};
use rat_bench::{cell_medians, fit_rates, run_experiment, ExperimentConfig, MethodTag, Preset};
use rat_core::rng::{stream, BoxMuller};
use rat_core::*;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn within(elapsed: Duration, limit_s: f64) -> bool {
    elapsed.as_secs_f64() < limit_s
}

fn fixed_point_equivalence() -> Outcome {
    let start = Instant::now();
    let mut worst = 0.0f64;
    let mut unconverged = 0;
    for seed in 0..50 {
        let inst = random_instance(1000 + seed, 40, 40, 0.25);
        let p = inst.problem();
        let sol = run_picard(&RatRunConfig::default().with_tol(1e-10).with_max_iter(200_000), &p).unwrap();
        unconverged += usize::from(!sol.converged);
        let closed = rat_closed_form(&inst.gram, &inst.teacher, &inst.student, inst.y()).unwrap();
        worst = worst.max((&sol.weights.theta - &closed.weights.theta).amax());
    }
    let t = start.elapsed();
    outcome(
        worst < 1e-7 && unconverged == 0 && within(t, 10.0),
        format!("max |theta_picard - theta_rat| = {worst:.2e}, unconverged {unconverged}, {:.2}s", t.as_secs_f64()),
    )
}

fn oracle_agreement() -> Outcome {
    let start = Instant::now();
    let mut worst_z = 0.0f64;
    for seed in 0..10 {
        let inst = random_instance(2000 + seed, 30, 30, 1.0);
        let pi = inst.problem_instance();
        for est in [Estimator::Rat, Estimator::Sm] {
            let exact = match est {
                Estimator::Rat => exact_mse_rat(&inst.gram, &inst.teacher, &inst.student, &pi).unwrap(),
                Estimator::Sm => exact_mse_sm(&inst.gram, &inst.teacher, &inst.student, &pi).unwrap().0,
            };
            let mc = monte_carlo_mse(est, &inst.gram, &inst.teacher, &inst.student, &pi, 20_000, seed).unwrap();
            worst_z = worst_z.max((mc.mean - exact.total).abs() / mc.std_err);
        }
    }
    let t = start.elapsed();
    outcome(worst_z <= 4.0 && within(t, 60.0), format!("max |exact - mc| / se = {worst_z:.2}, {:.2}s", t.as_secs_f64()))
}

fn rate_separation_diagonal() -> Outcome {
    let start = Instant::now();
    let cfg = ExperimentConfig::preset_defaults(Preset::Diagonal);
    let out = run_experiment(&cfg).unwrap();
    let fits = fit_rates(&out.records, out.spectra.as_ref()).unwrap();
    let fit = |m: MethodTag| fits.iter().find(|f| f.method == m).unwrap();
    let (rat, sm) = (fit(MethodTag::Rat), fit(MethodTag::Sm));
    let target = -2.0 / 3.0;
    let t = start.elapsed();
    outcome(
        (rat.slope - target).abs() <= 0.2 && sm.plateau_ratio >= 0.3 && rat.plateau_ratio <= 0.1 && within(t, 300.0),
        format!(
            "RaT slope {:.3} (target {target:.3}), RaT ratio {:.3}, SM ratio {:.3}, {:.2}s",
            rat.slope,
            rat.plateau_ratio,
            sm.plateau_ratio,
            t.as_secs_f64()
        ),
    )
}

fn hermite_separation() -> Outcome {
    let start = Instant::now();
    let mut pass = true;
    let mut detail = Vec::new();
    for sigma_p in [0.9, 1.1] {
        let mut cfg = ExperimentConfig::preset_defaults(Preset::HermiteGaussian);
        cfg.hermite.sigma_p = sigma_p;
        let out = run_experiment(&cfg).unwrap();
        let medians = cell_medians(&out.records);
        let get = |m: MethodTag| &medians.iter().find(|c| c.method == m).unwrap().points;
        let (rat, sm) = (get(MethodTag::Rat), get(MethodTag::Sm));
        let decreasing = rat.windows(2).all(|w| w[1].1 < w[0].1);
        let n_max = sm.last().unwrap().0;
        let at_eighth = sm.iter().find(|p| p.0 == n_max / 8).unwrap().1;
        let sm_ratio = sm.last().unwrap().1 / at_eighth;
        pass &= decreasing && sm_ratio >= 0.5;
        detail.push(format!(
            "sigma_P {sigma_p}: RaT medians decreasing {decreasing} ({:.2e} -> {:.2e}), SM(n_max)/SM(n_max/8) {sm_ratio:.3}",
            rat[0].1,
            rat.last().unwrap().1
        ));
    }
    let t = start.elapsed();
    outcome(pass && within(t, 300.0), format!("{}; {:.2}s", detail.join("; "), t.as_secs_f64()))
}

fn stepsize_invariance() -> Outcome {
    let mut worst = 0.0f64;
    let mut unconverged = 0;
    for seed in 0..20 {
        let inst = random_instance(3000 + seed, 30, 30, 0.25);
        let p = inst.problem();
        let base = run_picard(&RatRunConfig::default(), &p).unwrap();
        let eta = base.trace.as_ref().unwrap().eta;
        let run = |e: f64| run_picard(&RatRunConfig::default().with_eta(e).with_max_iter(500_000), &p).unwrap();
        let (a, b) = (run(eta), run(eta / 3.0));
        unconverged += usize::from(!a.converged) + usize::from(!b.converged);
        worst = worst.max((&a.weights.theta - &b.weights.theta).amax());
    }
    outcome(
        worst < 1e-7 && unconverged == 0,
        format!("max |theta(eta) - theta(eta/3)| = {worst:.2e}, unconverged {unconverged}"),
    )
}

fn estimation_bounds() -> Outcome {
    let mut worst = f64::INFINITY;
    let mut checked = 0;
    for seed in 0..100 {
        let inst = random_instance(4000 + seed, 30, 30, 0.25);
        let p = inst.problem();
        let sols = [
            rat_closed_form(&inst.gram, &inst.teacher, &inst.student, inst.y()).unwrap(),
            run_picard(&RatRunConfig::default(), &p).unwrap(),
            sm_closed_form(&inst.gram, &inst.teacher, &inst.student, inst.y()).unwrap(),
        ];
        for s in &sols {
            let r = check_thm1_bound(s, &p, &inst.theta_star).unwrap();
            worst = worst.min(r.slack);
            checked += 1;
        }
    }
    outcome(worst >= -1e-9, format!("min slack {worst:.2e} over {checked} solutions"))
}

fn convergence_bounds() -> Outcome {
    // Contraction on one-dimensional linear instances.
    let mut accepted = 0;
    let mut worst_excess = f64::NEG_INFINITY;
    let mut min_gap = f64::INFINITY;
    let mut seed = 0;
    while accepted < 50 && seed < 2000 {
        seed += 1;
        let inst = linear_instance(5000 + seed, 40, 40);
        let p = inst.problem();
        let closed = rat_closed_form(&inst.gram, &inst.teacher, &inst.student, inst.y()).unwrap();
        let stab = estimate_stability(&p, &closed.weights, 64, seed).unwrap();
        let Some(l) = stab.l_hat else { continue };
        if stab.mu_hat <= 0.0 || stab.epsilon > 1e-8 {
            continue;
        }
        let eta = stab.mu_hat / (l * l);
        let sol = run_picard(&RatRunConfig::default().with_eta(eta).with_max_iter(9_000), &p).unwrap();
        if !sol.converged || sol.iterations < 2 {
            continue;
        }
        let rep = check_thm3_decay(sol.trace.as_ref().unwrap(), &stab, &closed.weights.fitted(&inst.gram)).unwrap();
        let (Some(q), Some(c)) = (rep.contraction_bound, rep.max_contraction) else { continue };
        worst_excess = worst_excess.max(c - q);
        min_gap = min_gap.min(q - c);
        accepted += 1;
    }
    let contraction_ok = accepted == 50 && worst_excess <= 1e-6;

    // Min-defect bound on general converging traces at the automatic stepsize.
    let mut traces = 0;
    let mut weak_worst = f64::NEG_INFINITY;
    let mut seed = 0;
    while traces < 50 && seed < 500 {
        seed += 1;
        let inst = random_instance(6000 + seed, 30, 30, 0.25);
        let p = inst.problem();
        let closed = rat_closed_form(&inst.gram, &inst.teacher, &inst.student, inst.y()).unwrap();
        let stab = estimate_stability(&p, &closed.weights, 64, 0).unwrap();
        let sol = run_picard(&RatRunConfig::default().with_max_iter(9_000), &p).unwrap();
        if !sol.converged || sol.iterations < 2 {
            continue;
        }
        let rep = check_thm3_decay(sol.trace.as_ref().unwrap(), &stab, &closed.weights.fitted(&inst.gram)).unwrap();
        let Some(v) = rep.weak_max_violation else { continue };
        weak_worst = weak_worst.max(v);
        traces += 1;
    }
    let weak_ok = traces == 50 && weak_worst <= 1e-9;
    outcome(
        contraction_ok && weak_ok,
        format!(
            "{accepted} linear instances: max (contraction - bound) {worst_excess:.2e} (tightest gap {min_gap:.2e}); \
             {traces} traces: max min-defect violation {weak_worst:.2e}"
        ),
    )
}

fn structural_suites() -> Outcome {
    let start = Instant::now();
    let mut rng = stream(77, &[]);
    let mut g = BoxMuller::new();
    let mut notes = Vec::new();

    // Nadaraya–Watson rows are probability vectors.
    let mut nw_worst = 0.0f64;
    for _ in 0..50 {
        let n = rng.random_range(1..=40);
        let m = rng.random_range(1..=40);
        let xs: Vec<Vec<f64>> = (0..n).map(|_| vec![g.sample(&mut rng)]).collect();
        let xt: Vec<Vec<f64>> = (0..m).map(|_| vec![3.0 * g.sample(&mut rng)]).collect();
        let data = Dataset::new(xs, vec![0.0; n], xt).unwrap();
        let t = build_nw_teacher(&data, log_uniform(&mut rng, 0.01, 3.0)).unwrap();
        for row in t.matrix().row_iter() {
            nw_worst = nw_worst.max((row.sum() - 1.0).abs());
            assert!(row.iter().all(|&v| v >= 0.0));
        }
    }
    let nw_ok = nw_worst <= 1e-12;
    notes.push(format!("NW row-sum error {nw_worst:.1e}"));

    // Firm non-expansiveness of the prox on fitted values.
    let mut prox_worst = f64::NEG_INFINITY;
    for pair in 0..200 {
        let inst = random_instance(7000 + pair, 25, 25, 0.25);
        let m = inst.gram.m();
        let eta = log_uniform(&mut rng, 0.1, 10.0);
        let u = DVector::from_fn(m, |_, _| 3.0 * g.sample(&mut rng));
        let v = DVector::from_fn(m, |_, _| 3.0 * g.sample(&mut rng));
        let pu = prox(&inst.student, &inst.gram, &u, eta).unwrap().fitted(&inst.gram);
        let pv = prox(&inst.student, &inst.gram, &v, eta).unwrap().fitted(&inst.gram);
        let d = &pu - &pv;
        prox_worst = prox_worst.max(d.norm_squared() - (&u - &v).dot(&d));
    }
    let prox_ok = prox_worst <= 1e-9;
    notes.push(format!("prox max violation {prox_worst:.1e}"));

    // Soft-matching bias split.
    let mut split_worst = 0.0f64;
    for seed in 0..50 {
        let inst = random_instance(8000 + seed, 30, 30, 0.25);
        let (_, split) = exact_mse_sm(&inst.gram, &inst.teacher, &inst.student, &inst.problem_instance()).unwrap();
        let scale = 1.0 + split.shift.amax() + split.ridge.amax();
        split_worst = split_worst.max((&split.shift + &split.ridge - &split.total).amax() / scale);
    }
    let split_ok = split_worst <= 1e-12;
    notes.push(format!("bias split error {split_worst:.1e}"));

    // Feature-space and kernel-space MSE on feature-linear instances.
    let mut eq_worst = 0.0f64;
    for preset in [Preset::Diagonal, Preset::HermiteGaussian] {
        let mut cfg = ExperimentConfig::preset_defaults(preset);
        cfg.n_grid = vec![24, 48];
        let params = PresetParams::new(&cfg).unwrap();
        for trial in 0..5 {
            let mut sample = sample_dataset(&params, 48, 48, trial_seed(cfg.seed, 1, trial)).unwrap();
            let exact = rat_bench::experiment::ExactMse::for_sample(&mut sample, cfg.teacher_lambda).unwrap();
            let gram = sample.gram().unwrap().clone();
            let teacher = build_krr_teacher(&gram, cfg.teacher_lambda).unwrap();
            for gamma in [1e-4, 1e-2, 1.0] {
                let student = StudentConfig::new(gamma, sample.student_kernel.clone()).unwrap();
                let rat = exact_mse_rat(&gram, &teacher, &student, &sample.instance).unwrap();
                let sm = exact_mse_sm(&gram, &teacher, &student, &sample.instance).unwrap().0;
                for (kernel_side, est) in [(rat, Estimator::Rat), (sm, Estimator::Sm)] {
                    let feature_side = exact.evaluate(est, gamma).unwrap();
                    let rel = (feature_side.total - kernel_side.total).abs() / kernel_side.total.abs().max(1e-300);
                    eq_worst = eq_worst.max(rel);
                }
            }
        }
    }
    let eq_ok = eq_worst <= 1e-8;
    notes.push(format!("feature/kernel MSE relative gap {eq_worst:.1e}"));

    // Eigendecay fit on exact power laws.
    let mut fit_worst = 0.0f64;
    for k in 0..40 {
        let alpha = 0.1 * k as f64;
        let len = 8 + 5 * k;
        let c = log_uniform(&mut rng, 0.1, 10.0);
        let spec: Vec<f64> = (1..=len).map(|j| c * (j as f64).powf(-2.0 * alpha)).collect();
        fit_worst = fit_worst.max((fit_eigendecay(&spec).unwrap().alpha - alpha).abs());
    }
    let fit_ok = fit_worst <= 1e-10;
    notes.push(format!("eigendecay alpha error {fit_worst:.1e}"));

    let t = start.elapsed();
    outcome(
        nw_ok && prox_ok && split_ok && eq_ok && fit_ok && within(t, 10.0),
        format!("{}; {:.2}s", notes.join(", "), t.as_secs_f64()),
    )
}

fn sweep_determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let configs = [
        "preset = \"diagonal\"\ntrials = 4\nn_grid = [32, 64, 128]\n",
        "preset = \"hermite_gaussian\"\ntrials = 4\nn_grid = [32, 64, 128]\n",
        "preset = \"laplace_beta\"\ntrials = 3\nn_grid = [32, 64, 128]\nm = 40\n",
        "preset = \"custom\"\ntrials = 3\nn_grid = [16, 32, 48]\nm = 20\nmse_mode = \"empirical\"\n[gamma]\npolicy = \"fixed\"\nvalue = 0.05\n",
    ];
    let mut identical = 0;
    for (i, text) in configs.iter().enumerate() {
        let cfg_path = dir.path().join(format!("c{i}.toml"));
        std::fs::write(&cfg_path, text).unwrap();
        let mut outputs = Vec::new();
        for (run, threads) in [(0, "1"), (1, "4")] {
            let out = dir.path().join(format!("out{i}_{run}"));
            let status = Command::new(env!("CARGO_BIN_EXE_rat-bench"))
                .args(["--config", cfg_path.to_str().unwrap(), "--seed", "11", "--threads", threads])
                .args(["--out", out.to_str().unwrap(), "sweep"])
                .output()
                .unwrap();
            assert!(status.status.success(), "{}", String::from_utf8_lossy(&status.stderr));
            outputs.push(std::fs::read(out.join("records.csv")).unwrap());
        }
        identical += usize::from(outputs[0] == outputs[1] && !outputs[0].is_empty());
    }
    outcome(
        identical == configs.len(),
        format!("{identical}/{} configs byte-identical across re-runs and thread counts", configs.len()),
    )
}

fn main() {
    // Silence the default hook; panics are reported as failures below.
    std::panic::set_hook(Box::new(|_| {}));
    type Criterion = (&'static str, fn() -> Outcome);
    let criteria: [Criterion; 9] = [
        ("1 fixed-point equivalence", fixed_point_equivalence),
        ("2 exact vs Monte Carlo MSE", oracle_agreement),
        ("3 rate separation, diagonal preset", rate_separation_diagonal),
        ("4 Hermite-Gaussian separation", hermite_separation),
        ("5 stepsize invariance", stepsize_invariance),
        ("6 estimation bounds", estimation_bounds),
        ("7 Picard convergence bounds", convergence_bounds),
        ("8 structural properties", structural_suites),
        ("9 sweep determinism", sweep_determinism),
    ];
    let mut failures = 0;
    for (name, run) in criteria {
        let res = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            outcome(false, format!("panicked: {msg}"))
        });
        failures += usize::from(!res.pass);
        println!("{} {name}: {}", if res.pass { "PASS" } else { "FAIL" }, res.detail);
    }
    if failures > 0 {
        println!("{failures} acceptance criteria failed");
        std::process::exit(1);
    }
}
