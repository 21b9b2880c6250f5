//! Conditioning machinery: entrywise relative distance, covariance
//! perturbation families, the randomized condition number, the
//! perturb-recover-average heuristic, local-dominance model checking and the
//! closed-form condition-number bound it certifies.

use crate::graph::MixedGraph;
use crate::linalg::Matrix;
use crate::recovery::{recover_lambda, RecoveryError};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Normal;
use serde::Serialize;
use thiserror::Error;

/// Number of log-spaced histogram bins in a [`ConditionReport`].
pub const HISTOGRAM_BINS: usize = 30;

#[derive(Debug, Error)]
pub enum StabilityError {
    #[error("reference matrix is identically zero")]
    AllZeroReference,
    #[error("baseline recovery failed: {0}")]
    BaselineRecoveryFailed(RecoveryError),
    #[error("bound inapplicable: {0}")]
    BoundInapplicable(String),
    #[error("invalid perturbation spec: {0}")]
    InvalidSpec(String),
    #[error("operation requires path-shaped inputs")]
    NotAPath,
}

/// How a covariance is perturbed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum PerturbMode {
    /// Independent zero-mean Gaussians of the given standard deviation.
    GaussianAdditive { eps: f64 },
    /// Entry shifts drawn uniformly within the given relative magnitude,
    /// rescaled so the largest relative shift hits the bound exactly.
    RelativeGamma { gamma: f64 },
    /// The same constant added to every targeted entry.
    UniformAdditive { gamma: f64 },
}

impl PerturbMode {
    pub fn magnitude(&self) -> f64 {
        match *self {
            PerturbMode::GaussianAdditive { eps } => eps,
            PerturbMode::RelativeGamma { gamma } | PerturbMode::UniformAdditive { gamma } => gamma,
        }
    }
}

/// Which entries the perturbation touches.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum PerturbTarget {
    NonzeroEntries,
    AllEntries,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PerturbationSpec {
    pub mode: PerturbMode,
    pub target: PerturbTarget,
    /// Mirror the shift at `(i, j)` onto `(j, i)`.
    pub symmetric: bool,
}

impl PerturbationSpec {
    pub fn new(
        mode: PerturbMode,
        target: PerturbTarget,
        symmetric: bool,
    ) -> Result<Self, StabilityError> {
        let m = mode.magnitude();
        if !m.is_finite() || m < 0.0 {
            return Err(StabilityError::InvalidSpec(format!(
                "perturbation magnitude must be finite and nonnegative, got {m}"
            )));
        }
        Ok(PerturbationSpec {
            mode,
            target,
            symmetric,
        })
    }
}

/// Entrywise relative distance: the largest `|a - b| / |a|` over entries
/// where the reference `a` is nonzero. Entries where `a` vanishes are
/// skipped even if `b` differs there, which makes the distance asymmetric
/// on purpose.
pub fn rel_dist(a: &Matrix, b: &Matrix) -> Result<f64, StabilityError> {
    assert!(a.same_shape(b), "rel_dist needs matching shapes");
    let mut max = f64::NEG_INFINITY;
    for i in 0..a.rows() {
        for j in 0..a.cols() {
            let reference = a[(i, j)];
            if reference == 0.0 {
                continue;
            }
            let r = (reference - b[(i, j)]).abs() / reference.abs();
            if r > max {
                max = r;
            }
        }
    }
    if max == f64::NEG_INFINITY {
        Err(StabilityError::AllZeroReference)
    } else {
        Ok(max)
    }
}

/// Applies a perturbation spec to a covariance, returning the perturbed
/// matrix (not necessarily PSD — the perturbation family is unconstrained).
pub fn perturb<R: Rng + ?Sized>(sigma: &Matrix, spec: &PerturbationSpec, rng: &mut R) -> Matrix {
    let n = sigma.rows();
    let m = sigma.cols();
    let mut shift = Matrix::zeros(n, m);
    let targeted = |i: usize, j: usize| -> bool {
        match spec.target {
            PerturbTarget::AllEntries => true,
            PerturbTarget::NonzeroEntries => sigma[(i, j)] != 0.0,
        }
    };
    match spec.mode {
        PerturbMode::GaussianAdditive { eps } => {
            let dist = Normal::new(0.0, eps.max(0.0)).expect("validated std dev");
            if spec.symmetric {
                assert_eq!(n, m, "symmetric perturbation needs a square matrix");
                for i in 0..n {
                    for j in i..m {
                        if targeted(i, j) {
                            let e = if eps == 0.0 { 0.0 } else { rng.sample(dist) };
                            shift[(i, j)] = e;
                            shift[(j, i)] = e;
                        }
                    }
                }
            } else {
                for i in 0..n {
                    for j in 0..m {
                        if targeted(i, j) {
                            shift[(i, j)] = if eps == 0.0 { 0.0 } else { rng.sample(dist) };
                        }
                    }
                }
            }
        }
        PerturbMode::RelativeGamma { gamma } => {
            // Draw u in [-1, 1] per entry, scale by gamma |sigma|, then
            // rescale everything so the extremal relative shift is exactly
            // gamma. Entries where sigma vanishes stay untouched (their
            // allowed band is {0}).
            if gamma > 0.0 {
                let mut max_ratio = 0.0f64;
                loop {
                    for i in 0..n {
                        for j in if spec.symmetric { i..m } else { 0..m } {
                            let s = sigma[(i, j)];
                            if s == 0.0 || !targeted(i, j) {
                                continue;
                            }
                            let u = rng.random::<f64>() * 2.0 - 1.0;
                            let e = u * gamma * s.abs();
                            shift[(i, j)] = e;
                            if spec.symmetric {
                                shift[(j, i)] = e;
                            }
                            max_ratio = max_ratio.max(e.abs() / s.abs());
                        }
                    }
                    if max_ratio > 0.0 {
                        break;
                    }
                    // All draws exactly zero: astronomically unlikely; redraw.
                }
                let rescale = gamma / max_ratio;
                for i in 0..n {
                    for j in 0..m {
                        shift[(i, j)] *= rescale;
                    }
                }
            }
        }
        PerturbMode::UniformAdditive { gamma } => {
            for i in 0..n {
                for j in 0..m {
                    if targeted(i, j) {
                        shift[(i, j)] = gamma;
                    }
                }
            }
        }
    }
    Matrix::from_fn(n, m, |i, j| sigma[(i, j)] + shift[(i, j)])
}

/// Histogram over log-spaced bins spanning the observed range.
#[derive(Debug, Clone, Serialize)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
}

impl Histogram {
    fn log_spaced(values: &[f64]) -> Histogram {
        if values.is_empty() {
            return Histogram {
                edges: vec![],
                counts: vec![],
            };
        }
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for &v in values {
            if v > 0.0 && v < lo {
                lo = v;
            }
            if v > hi {
                hi = v;
            }
        }
        if !lo.is_finite() {
            lo = 1e-300; // all values were zero
        }
        if hi <= lo {
            hi = lo * (1.0 + 1e-9);
        }
        let ratio = (hi / lo).ln();
        let edges: Vec<f64> = (0..=HISTOGRAM_BINS)
            .map(|k| lo * (ratio * k as f64 / HISTOGRAM_BINS as f64).exp())
            .collect();
        let mut counts = vec![0usize; HISTOGRAM_BINS];
        for &v in values {
            let pos = if v <= lo {
                0
            } else {
                let t = ((v / lo).ln() / ratio * HISTOGRAM_BINS as f64).floor() as usize;
                t.min(HISTOGRAM_BINS - 1)
            };
            counts[pos] += 1;
        }
        Histogram { edges, counts }
    }
}

/// Per-trial condition ratios and their summary.
#[derive(Debug, Clone, Serialize)]
pub struct ConditionReport {
    pub trials: usize,
    pub mean_kappa: f64,
    #[serde(rename = "failed")]
    pub failed_trials: usize,
    pub kappas: Vec<f64>,
    pub histogram: Histogram,
}

impl ConditionReport {
    /// Builds a report from per-trial ratios collected elsewhere.
    pub fn from_trials(trials: usize, kappas: Vec<f64>, failed_trials: usize) -> ConditionReport {
        let mean_kappa = if kappas.is_empty() {
            f64::NAN
        } else {
            kappas.iter().sum::<f64>() / kappas.len() as f64
        };
        let histogram = Histogram::log_spaced(&kappas);
        ConditionReport {
            trials,
            mean_kappa,
            failed_trials,
            kappas,
            histogram,
        }
    }
}

fn recover_for_graph(sigma: &Matrix, g: &MixedGraph) -> Result<Matrix, RecoveryError> {
    recover_lambda(sigma, g).map(|r| r.lambda_hat)
}

/// Per-trial ChaCha stream derived from one base draw, so trial results do
/// not depend on execution order.
fn trial_rng(base: u64, trial: usize) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(base);
    r.set_stream(trial as u64);
    r
}

/// Monte Carlo proxy for the relative condition number: per trial, perturb
/// the covariance, re-run recovery on both, and record
/// `rel_dist(lambda, lambda~) / rel_dist(sigma, sigma~)`. Trials where
/// recovery fails are counted separately and excluded from the mean.
pub fn randomized_condition_number<R: Rng + ?Sized>(
    sigma: &Matrix,
    g: &MixedGraph,
    spec: &PerturbationSpec,
    trials: usize,
    rng: &mut R,
) -> Result<ConditionReport, StabilityError> {
    if spec.mode.magnitude() <= 0.0 {
        return Err(StabilityError::InvalidSpec(
            "condition ratios are undefined for a zero-magnitude perturbation".into(),
        ));
    }
    let baseline =
        recover_for_graph(sigma, g).map_err(StabilityError::BaselineRecoveryFailed)?;
    if baseline.max_abs() == 0.0 {
        return Err(StabilityError::AllZeroReference);
    }
    let base_seed = rng.next_u64();
    let mut kappas = Vec::with_capacity(trials);
    let mut failed = 0usize;
    for trial in 0..trials {
        let mut trng = trial_rng(base_seed, trial);
        let perturbed = perturb(sigma, spec, &mut trng);
        match recover_for_graph(&perturbed, g) {
            Ok(lambda_tilde) => {
                let num = rel_dist(&baseline, &lambda_tilde)?;
                let den = rel_dist(sigma, &perturbed)?;
                kappas.push(num / den);
            }
            Err(_) => failed += 1,
        }
    }
    Ok(ConditionReport::from_trials(trials, kappas, failed))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Verdict {
    WellConditioned,
    IllConditioned,
}

/// Outcome of the perturb-recover-average heuristic.
#[derive(Debug, Clone, Serialize)]
pub struct HeuristicOutcome {
    pub verdict: Verdict,
    pub mean_kappa: f64,
    pub tau: f64,
    pub eps: f64,
    pub trials: usize,
    pub report: ConditionReport,
}

/// Decides whether an instance is well-conditioned: over many trials, add
/// independent `N(0, eps^2)` noise to every covariance entry, recover, and
/// average the ratio of entrywise infinity norms
/// `max|lambda~ - lambda| / max|sigma~ - sigma|` (an absolute-scale ratio,
/// deliberately distinct from the relative one above). The instance is
/// flagged ill-conditioned when the average reaches `tau`.
///
/// Defaults: `eps = 1 / n^4` and `n^4` trials; both are overridable, and
/// desk-scale runs should override (the defaults are infeasible past
/// `n` around 30).
pub fn condition_heuristic<R: Rng + ?Sized>(
    sigma: &Matrix,
    g: &MixedGraph,
    tau: f64,
    trials_override: Option<usize>,
    eps_override: Option<f64>,
    rng: &mut R,
) -> Result<HeuristicOutcome, StabilityError> {
    if !(tau > 0.0) {
        return Err(StabilityError::InvalidSpec(format!(
            "threshold must be positive, got {tau}"
        )));
    }
    let n = g.n();
    let n4 = (n as f64).powi(4);
    let eps = eps_override.unwrap_or(1.0 / n4);
    let trials = trials_override.unwrap_or(n4 as usize);
    if !(eps > 0.0) || trials == 0 {
        return Err(StabilityError::InvalidSpec(
            "heuristic needs a positive noise level and at least one trial".into(),
        ));
    }
    let baseline =
        recover_for_graph(sigma, g).map_err(StabilityError::BaselineRecoveryFailed)?;
    let spec = PerturbationSpec::new(
        PerturbMode::GaussianAdditive { eps },
        PerturbTarget::AllEntries,
        false,
    )?;
    let base_seed = rng.next_u64();
    let mut kappas = Vec::with_capacity(trials);
    let mut failed = 0usize;
    for trial in 0..trials {
        let mut trng = trial_rng(base_seed, trial);
        let perturbed = perturb(sigma, &spec, &mut trng);
        match recover_for_graph(&perturbed, g) {
            Ok(lambda_tilde) => {
                let num = lambda_tilde.max_abs_diff(&baseline);
                let den = perturbed.max_abs_diff(sigma);
                kappas.push(num / den);
            }
            Err(_) => failed += 1,
        }
    }
    let report = ConditionReport::from_trials(trials, kappas, failed);
    let mean_kappa = report.mean_kappa;
    // Failed trials are themselves evidence of ill-conditioning.
    let verdict = if mean_kappa.is_nan() || mean_kappa >= tau || report.failed_trials > 0 {
        Verdict::IllConditioned
    } else {
        Verdict::WellConditioned
    };
    Ok(HeuristicOutcome {
        verdict,
        mean_kappa,
        tau,
        eps,
        trials,
        report,
    })
}

/// Local-dominance check of a path-shaped covariance against its edge
/// weights. `alpha_min` is the smallest constant making all three families
/// of near-diagonal ratios hold; `lambda_param` is the reciprocal of the
/// smallest absolute edge weight.
#[derive(Debug, Clone, Serialize)]
pub struct ModelCheckReport {
    pub alpha_min: f64,
    pub lambda_param: f64,
    pub satisfied: bool,
    /// `|S[c-1][c]| / S[c][c]` for 0-based center `c` (None at `c = 0`).
    pub prev_ratio: Vec<Option<f64>>,
    /// `|S[c][c+1]| / S[c][c]`.
    pub next_ratio: Vec<Option<f64>>,
    /// `|S[c-1][c+1]| / S[c][c]` (None at `c = 0`).
    pub skip_ratio: Vec<Option<f64>>,
}

/// Computes the three near-diagonal ratio families over every interior
/// index, their maximum `alpha_min`, and whether the local-dominance model
/// holds: `alpha_min <= 1/5` together with every edge weight having
/// magnitude in `[1/n^2, 1]`.
pub fn check_model_assumptions(
    sigma: &Matrix,
    lambda: &Matrix,
) -> Result<ModelCheckReport, StabilityError> {
    let n = sigma.rows();
    if !sigma.is_square() || !lambda.same_shape(sigma) || n < 2 {
        return Err(StabilityError::NotAPath);
    }
    // The weight matrix must be supported on the path superdiagonal.
    for i in 0..n {
        for j in 0..n {
            if lambda[(i, j)] != 0.0 && j != i + 1 {
                return Err(StabilityError::NotAPath);
            }
        }
    }
    let mut prev_ratio = vec![None; n - 1];
    let mut next_ratio = vec![None; n - 1];
    let mut skip_ratio = vec![None; n - 1];
    let mut alpha_min = 0.0f64;
    for c in 0..n - 1 {
        let diag = sigma[(c, c)];
        let next = sigma[(c, c + 1)].abs() / diag;
        next_ratio[c] = Some(next);
        alpha_min = alpha_min.max(next);
        if c >= 1 {
            let prev = sigma[(c - 1, c)].abs() / diag;
            let skip = sigma[(c - 1, c + 1)].abs() / diag;
            prev_ratio[c] = Some(prev);
            skip_ratio[c] = Some(skip);
            alpha_min = alpha_min.max(prev).max(skip);
        }
    }
    let mut min_weight = f64::INFINITY;
    let mut max_weight = 0.0f64;
    for i in 0..n - 1 {
        let w = lambda[(i, i + 1)].abs();
        min_weight = min_weight.min(w);
        max_weight = max_weight.max(w);
    }
    let lambda_param = 1.0 / min_weight;
    let n2 = (n * n) as f64;
    let satisfied = alpha_min <= 0.2 && min_weight >= 1.0 / n2 && max_weight <= 1.0;
    Ok(ModelCheckReport {
        alpha_min,
        lambda_param,
        satisfied,
        prev_ratio,
        next_ratio,
        skip_ratio,
    })
}

/// The closed-form condition bound and its ingredients.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct KappaBound {
    pub tau: f64,
    pub beta_c: f64,
    pub bound: f64,
    /// Whether `gamma <= 1 / n^6`, the regime the derivation assumes. The
    /// formula is still evaluated outside it (callers probe larger
    /// perturbations routinely); the flag reports the excursion.
    pub gamma_in_regime: bool,
}

/// Evaluates the condition bound `lambda_param * beta_c / (1 - gamma)` with
/// `tau = 1 + 5 n gamma` and
/// `beta_c = ((3 + 3 tau) alpha + (tau + 1)) / (1 - (tau+2) alpha - (tau+1) alpha^2 - 4 n gamma)`.
///
/// Errors when the local-dominance constant exceeds 1/5 or the denominator
/// is not positive — outside that region the bound simply does not apply
/// and is reported as such rather than clamped.
pub fn theoretical_kappa_bound(
    alpha: f64,
    gamma: f64,
    n: usize,
    lambda_param: f64,
) -> Result<KappaBound, StabilityError> {
    if !(0.0..=0.2).contains(&alpha) {
        return Err(StabilityError::BoundInapplicable(format!(
            "local-dominance constant {alpha} outside [0, 1/5]"
        )));
    }
    if !(gamma >= 0.0) || gamma >= 1.0 {
        return Err(StabilityError::BoundInapplicable(format!(
            "relative perturbation {gamma} outside [0, 1)"
        )));
    }
    if n < 2 {
        return Err(StabilityError::BoundInapplicable(
            "need at least two vertices".into(),
        ));
    }
    if !(lambda_param.is_finite() && lambda_param > 0.0) {
        return Err(StabilityError::BoundInapplicable(format!(
            "weight parameter {lambda_param} must be positive and finite"
        )));
    }
    let nf = n as f64;
    let tau = 1.0 + 5.0 * nf * gamma;
    let denom = 1.0 - (tau + 2.0) * alpha - (tau + 1.0) * alpha * alpha - 4.0 * nf * gamma;
    if denom <= 0.0 {
        return Err(StabilityError::BoundInapplicable(format!(
            "bound denominator {denom} is not positive"
        )));
    }
    let beta_c = ((3.0 + 3.0 * tau) * alpha + (tau + 1.0)) / denom;
    let bound = lambda_param * beta_c / (1.0 - gamma);
    Ok(KappaBound {
        tau,
        beta_c,
        bound,
        gamma_in_regime: gamma <= 1.0 / nf.powi(6),
    })
}
