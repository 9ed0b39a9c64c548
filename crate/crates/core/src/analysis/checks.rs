use nalgebra::{DVector, SymmetricEigen};

use crate::error::{Error, Result};
use crate::linalg::{with_diagonal_shift, SpdFactor};
use crate::rng::{stream, BoxMuller};
use crate::scalar::{from_usize, lit, Real};
use crate::solver::{IterateTrace, LossModel, Method, RatProblem, Solution};
use crate::student::{hilbert_norm, StudentWeights};

const SLACK_TOL: f64 = 1e-9;

fn inner_q<T: Real>(a: &DVector<T>, b: &DVector<T>) -> T {
    a.dot(b) / from_usize::<T>(a.len().max(1))
}

/// `lhs ≤ rhs` check; `slack = rhs − lhs`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundReport<T: Real> {
    pub lhs: T,
    pub rhs: T,
    pub slack: T,
    pub pass: bool,
}

/// Checks `‖f̂ − f†‖²_Q ≤ ⟨f̂ − f†, ∇L̄(f̂) − Ĝ(f̂)⟩_Q` at a solution, where
/// `∇L̄(f) = f(x̃) − f*(x̃)` and `f†` is the noiseless penalized fit
/// `θ† = (K̃_mm + mγI)⁻¹K̃_mm θ*`.
///
/// RaT solutions use `Ĝ(f) = T(f(x) − y)`; soft-matching solutions use
/// `Ĝ(f) = f(x̃) − T y`.
pub fn check_thm1_bound<T: Real>(
    solution: &Solution<T>,
    problem: &RatProblem<'_, T>,
    theta_star: &DVector<T>,
) -> Result<BoundReport<T>> {
    if problem.loss != LossModel::LeastSquares {
        return Err(Error::invalid("estimation bound check needs least-squares loss"));
    }
    let gram = problem.gram;
    let m = gram.m();
    if theta_star.len() != m || solution.weights.len() != m {
        return Err(Error::dims("estimation bound weights", m, theta_star.len()));
    }
    let mg = from_usize::<T>(m) * problem.student.gamma;
    let chol = SpdFactor::with_jitter(with_diagonal_shift(&gram.kt_mm, mg), "oracle fit (K̃_mm + mγI)")?;
    let theta_dag = chol.solve_vec(&(&gram.kt_mm * theta_star));
    let f_hat = solution.weights.fitted(gram);
    let d = &f_hat - &gram.kt_mm * theta_dag;
    let oracle = &f_hat - &gram.kt_mm * theta_star;
    let g_hat = match solution.method {
        Method::RatClosedForm | Method::RatPicard => problem.grad(&solution.weights)?,
        Method::SmClosedForm => &f_hat - problem.teacher.matrix() * problem.y,
    };
    let lhs = inner_q(&d, &d);
    let rhs = inner_q(&d, &(oracle - g_hat));
    let slack = rhs - lhs;
    Ok(BoundReport { lhs, rhs, slack, pass: slack >= -lit::<T>(SLACK_TOL) })
}

/// Empirical co-coercivity and monotonicity constants of `Ĝ` at an anchor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StabilityEstimate<T: Real> {
    /// `max ‖ΔĜ‖²/⟨Δf, ΔĜ⟩` over probes with positive inner product.
    pub l_hat: Option<T>,
    /// `min ⟨Δf, ΔĜ⟩/‖Δf‖²`; non-positive means monotonicity fails.
    pub mu_hat: T,
    /// `√max(‖ΔĜ‖² − L̂⟨Δf, ΔĜ⟩)₊`, the co-coercivity violation at `L̂`.
    pub epsilon: T,
    /// Probe pairs that entered the estimate.
    pub pairs: usize,
}

/// Probes `f` uniformly in the Hilbert ball of radius `2‖f_anchor‖_H + 1`
/// around the anchor, pairing each probe with the anchor.
///
/// The constants are tight over the probes only: a lower envelope for the
/// population quantities.
pub fn estimate_stability<T: Real>(
    problem: &RatProblem<'_, T>,
    anchor: &StudentWeights<T>,
    probes: usize,
    seed: u64,
) -> Result<StabilityEstimate<T>> {
    if probes < 10 {
        return Err(Error::invalid("stability estimate needs at least 10 probes"));
    }
    let gram = problem.gram;
    let m = gram.m();
    if anchor.len() != m {
        return Err(Error::dims("stability anchor", m, anchor.len()));
    }
    let radius = lit::<T>(2.0) * hilbert_norm(anchor, gram)? + T::one();
    let eig = SymmetricEigen::new(gram.kt_mm.clone());
    let lmax = eig.eigenvalues.iter().copied().fold(T::zero(), |a, b| a.max(b));
    let active: Vec<usize> = (0..m).filter(|&i| eig.eigenvalues[i] > lit::<T>(1e-12) * lmax).collect();
    let f_anchor = anchor.fitted(gram);
    let g_anchor = problem.grad(anchor)?;

    let mut rng = stream(seed, &[]);
    let mut normal = BoxMuller::new();
    let dim = active.len().max(1);
    let mut l_hat: Option<T> = None;
    let mut mu_hat: Option<T> = None;
    let mut samples = Vec::with_capacity(probes);
    for _ in 0..probes {
        // Uniform point in the unit ball of the whitened coordinates.
        let z: Vec<f64> = (0..dim).map(|_| normal.sample(&mut rng)).collect();
        let zn = z.iter().map(|v| v * v).sum::<f64>().sqrt();
        let u: f64 = rand::Rng::random(&mut rng);
        let scale = u.powf(1.0 / dim as f64) / zn.max(f64::MIN_POSITIVE);
        let mut delta = DVector::zeros(m);
        for (c, &i) in active.iter().enumerate() {
            let coef = lit::<T>(z[c] * scale) * radius / eig.eigenvalues[i].sqrt();
            delta += eig.eigenvectors.column(i) * coef;
        }
        let probe = StudentWeights::new(&anchor.theta + delta)?;
        let df = probe.fitted(gram) - &f_anchor;
        let dg = problem.grad(&probe)? - &g_anchor;
        let dd = inner_q(&df, &df);
        if dd == T::zero() {
            continue;
        }
        let ip = inner_q(&df, &dg);
        let gg = inner_q(&dg, &dg);
        if ip > T::zero() {
            let ratio = gg / ip;
            l_hat = Some(l_hat.map_or(ratio, |l| l.max(ratio)));
        }
        let mu = ip / dd;
        mu_hat = Some(mu_hat.map_or(mu, |v| v.min(mu)));
        samples.push((ip, gg));
    }
    let eps_sq = samples.iter().fold(T::zero(), |acc, &(ip, gg)| {
        let viol = match l_hat {
            Some(l) => gg - l * ip,
            None => gg,
        };
        acc.max(viol)
    });
    Ok(StabilityEstimate {
        l_hat,
        mu_hat: mu_hat.unwrap_or(T::zero()),
        epsilon: eps_sq.max(T::zero()).sqrt(),
        pairs: samples.len(),
    })
}

/// Outcome of checking a Picard trace against the convergence bounds.
#[derive(Debug, Clone, PartialEq)]
pub struct DecayReport<T: Real> {
    /// Largest `min_{k≤K}‖D_k‖² − (2/(K+1)‖f⁰ − f̂‖² + 4ε²/L̂²)` over prefixes `K`.
    pub weak_max_violation: Option<T>,
    pub weak_pass: Option<bool>,
    /// Largest `‖D_K‖² − (2(1 − μ̂²/L̂²)^K‖f⁰ − f̂‖² + 8ε²)` over `K`, when `μ̂ > 0`.
    pub geometric_max_violation: Option<T>,
    pub geometric_pass: Option<bool>,
    /// `1 − μ̂²/L̂²`, when `μ̂ > 0`.
    pub contraction_bound: Option<T>,
    /// Largest `‖f_{k+1} − f̂‖²/‖f_k − f̂‖²` over steps with `f_k ≠ f̂`.
    pub max_contraction: Option<T>,
    /// Largest `‖D_{k+1}‖²/‖D_k‖²` over steps with nonzero defect.
    pub max_defect_ratio: Option<T>,
}

/// Checks the min-defect bound and, when `μ̂ > 0`, the geometric bound on a
/// trace, using `fixed_point` (fitted values of `f̂`) as the reference.
pub fn check_thm3_decay<T: Real>(
    trace: &IterateTrace<T>,
    stability: &StabilityEstimate<T>,
    fixed_point: &DVector<T>,
) -> Result<DecayReport<T>> {
    let recs = &trace.records;
    if recs.len() < 3 {
        return Err(Error::invalid("decay check needs a trace of length >= 3"));
    }
    let fitted: Vec<&DVector<T>> = recs
        .iter()
        .map(|r| r.fitted.as_ref().ok_or_else(|| Error::invalid("trace lacks fitted values")))
        .collect::<Result<_>>()?;
    if fitted[0].len() != fixed_point.len() {
        return Err(Error::dims("decay check fixed point", fitted[0].len(), fixed_point.len()));
    }
    let dist: Vec<T> = fitted.iter().map(|f| inner_q(&(*f - fixed_point), &(*f - fixed_point))).collect();
    let dsq: Vec<T> = recs.iter().map(|r| r.defect * r.defect).collect();
    let eps2 = stability.epsilon * stability.epsilon;
    let tol = lit::<T>(SLACK_TOL);

    let (weak_max_violation, weak_pass) = match stability.l_hat {
        Some(l) => {
            let mut running_min = dsq[0];
            let mut worst: Option<T> = None;
            for (k, &d) in dsq.iter().enumerate() {
                running_min = running_min.min(d);
                let bound = lit::<T>(2.0) / from_usize::<T>(k + 1) * dist[0] + lit::<T>(4.0) * eps2 / (l * l);
                let v = running_min - bound;
                worst = Some(worst.map_or(v, |w: T| w.max(v)));
            }
            (worst, worst.map(|w| w <= tol))
        }
        None => (None, None),
    };

    let contraction_bound = match stability.l_hat {
        Some(l) if stability.mu_hat > T::zero() => Some(T::one() - stability.mu_hat * stability.mu_hat / (l * l)),
        _ => None,
    };
    let (geometric_max_violation, geometric_pass) = match contraction_bound {
        Some(q) => {
            let mut worst: Option<T> = None;
            let mut qk = T::one();
            for &d in &dsq {
                let v = d - (lit::<T>(2.0) * qk * dist[0] + lit::<T>(8.0) * eps2);
                worst = Some(worst.map_or(v, |w: T| w.max(v)));
                qk *= q.max(T::zero());
            }
            (worst, worst.map(|w| w <= tol))
        }
        None => (None, None),
    };

    let ratio_max = |v: &[T]| {
        // Ratios of round-off-sized quantities carry no information.
        let floor = lit::<T>(1e-16) * v[0];
        v.windows(2)
            .filter(|w| w[0] > floor)
            .map(|w| w[1] / w[0])
            .fold(None, |acc: Option<T>, r| Some(acc.map_or(r, |a| a.max(r))))
    };
    Ok(DecayReport {
        weak_max_violation,
        weak_pass,
        geometric_max_violation,
        geometric_pass,
        contraction_bound,
        max_contraction: ratio_max(&dist),
        max_defect_ratio: ratio_max(&dsq),
    })
}
