//! The iterative targeting loop: evaluate clever covariates, check the σ̂/n
//! tolerance, fit the pooled no-intercept offset logistic fluctuation, and
//! update the stacked predictions.

use crate::crossfit::CrossFittedNuisances;
use crate::data::{Dataset, FoldPlan};
use crate::error::{Error, Result};
use crate::numeric::{clamp_unit, expit, logit, mean, sample_sd};
use crate::params::{
    blip, clever_covariates, influence_curve, plugin_estimate, CleverCovariates, ParameterKind,
    Variant,
};

/// Current fluctuated predictions, in scaled outcome units.
#[derive(Debug, Clone)]
pub struct TargetingState {
    pub q_a: Vec<f64>,
    pub q_1: Vec<f64>,
    pub q_0: Vec<f64>,
    pub g1: Vec<f64>,
    pub kind: ParameterKind,
    pub variant: Variant,
    pub plan: FoldPlan,
}

impl TargetingState {
    pub fn from_nuisances(
        nuisances: &CrossFittedNuisances,
        kind: ParameterKind,
        variant: Variant,
    ) -> Self {
        TargetingState {
            q_a: nuisances.q0_a.clone(),
            q_1: nuisances.q0_1.clone(),
            q_0: nuisances.q0_0.clone(),
            g1: nuisances.g1.clone(),
            kind,
            variant,
            plan: nuisances.plan.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StopReason {
    ToleranceMet,
    EpsNegligible,
    MaxIter,
}

impl StopReason {
    pub fn label(&self) -> &'static str {
        match self {
            StopReason::ToleranceMet => "tolerance-met",
            StopReason::EpsNegligible => "eps-negligible",
            StopReason::MaxIter => "max-iter",
        }
    }
}

/// Iteration-by-iteration record of the fluctuation loop. `eps` holds the k
/// accepted fluctuations; `ic_mean`, `sigma_hat`, and `loglik` hold k+1
/// entries (the initial fit plus one per accepted step).
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct FluctuationTrace {
    pub eps: Vec<f64>,
    /// mean(d_Y) per iteration — the stopping statistic.
    pub ic_mean: Vec<f64>,
    pub sigma_hat: Vec<f64>,
    pub loglik: Vec<f64>,
    pub k: usize,
    pub converged: bool,
    pub reason: StopReason,
}

const NEWTON_TOL: f64 = 1e-10;
const NEWTON_MAX_ITER: usize = 50;
const EPS_NEGLIGIBLE: f64 = 1e-8;

fn pooled_loglik(y: &[f64], mu: impl Fn(usize) -> f64) -> f64 {
    (0..y.len())
        .map(|i| {
            let m = mu(i).clamp(1e-300, 1.0 - 1e-16);
            y[i] * m.ln() + (1.0 - y[i]) * (1.0 - m).ln()
        })
        .sum()
}

/// Log-likelihood of the one-parameter fluctuation at ε.
fn fluctuation_loglik(y: &[f64], offset: &[f64], h_a: &[f64], eps: f64) -> f64 {
    pooled_loglik(y, |i| expit(offset[i] + eps * h_a[i]))
}

fn golden_section_max(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = hi - inv_phi * (hi - lo);
    let mut x2 = lo + inv_phi * (hi - lo);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    for _ in 0..200 {
        if hi - lo < 1e-12 {
            break;
        }
        if f1 < f2 {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + inv_phi * (hi - lo);
            f2 = f(x2);
        } else {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - inv_phi * (hi - lo);
            f1 = f(x1);
        }
    }
    0.5 * (lo + hi)
}

/// MLE of the pooled no-intercept offset logistic regression: maximize
/// Σ [Y log μ + (1−Y) log(1−μ)] with μ = expit(offset + ε·h_A).
///
/// One-dimensional Newton from ε = 0; the likelihood is concave, so if
/// Newton wanders (non-finite step or no convergence inside the iteration
/// budget) a golden-section search over [−10, 10] takes over.
pub fn fit_epsilon(y: &[f64], offset: &[f64], h_a: &[f64]) -> Result<f64> {
    let n = y.len();
    if offset.len() != n || h_a.len() != n {
        return Err(Error::LengthMismatch { what: "fluctuation inputs" });
    }
    if offset.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite { what: "fluctuation offsets" });
    }
    if h_a.iter().all(|&h| h == 0.0) {
        return Ok(0.0);
    }

    let mut eps = 0.0f64;
    let mut converged = false;
    for _ in 0..NEWTON_MAX_ITER {
        let mut score = 0.0;
        let mut info = 0.0;
        for i in 0..n {
            let mu = expit(offset[i] + eps * h_a[i]);
            score += h_a[i] * (y[i] - mu);
            info += h_a[i] * h_a[i] * mu * (1.0 - mu);
        }
        if info <= f64::MIN_POSITIVE {
            break;
        }
        let delta = score / info;
        if !delta.is_finite() {
            break;
        }
        eps += delta;
        if !eps.is_finite() {
            break;
        }
        if delta.abs() <= NEWTON_TOL {
            converged = true;
            break;
        }
    }
    if !converged || !eps.is_finite() {
        eps = golden_section_max(|e| fluctuation_loglik(y, offset, h_a, e), -10.0, 10.0);
    }
    if !fluctuation_loglik(y, offset, h_a, eps).is_finite() {
        return Err(Error::NonFinite { what: "fluctuation log-likelihood" });
    }
    Ok(eps)
}

/// One fluctuation step: Q ← expit(logit(Q) + ε·h) for each of the three
/// prediction vectors, reclamped away from {0,1}.
pub fn apply_fluctuation(
    state: &TargetingState,
    eps: f64,
    cc: &CleverCovariates,
) -> TargetingState {
    let update = |q: &[f64], h: &[f64]| -> Vec<f64> {
        q.iter()
            .zip(h)
            .map(|(&qi, &hi)| {
                // A zero shift is an exact identity, not a logit round trip.
                if eps * hi == 0.0 {
                    qi
                } else {
                    clamp_unit(expit(logit(qi) + eps * hi))
                }
            })
            .collect()
    };
    TargetingState {
        q_a: update(&state.q_a, &cc.h_a),
        q_1: update(&state.q_1, &cc.h_1),
        q_0: update(&state.q_0, &cc.h_0),
        g1: state.g1.clone(),
        kind: state.kind,
        variant: state.variant,
        plan: state.plan.clone(),
    }
}

/// The σ̂/n stopping rule: true iff |mean(d_Y)| ≤ sigma_hat/n, where
/// sigma_hat is the sample standard deviation of the total influence curve
/// at the current iterate. A zero sigma_hat demands an exactly-zero mean.
pub fn stopping_check(d_y: &[f64], sigma_hat: f64, n: usize) -> bool {
    debug_assert!(n >= 2);
    mean(d_y).abs() <= sigma_hat / n as f64
}

/// Run the full Step 2–3 loop from cross-fitted initial predictions.
pub fn run_targeting(
    nuisances: &CrossFittedNuisances,
    data: &Dataset,
    kind: ParameterKind,
    variant: Variant,
    max_iter: usize,
) -> Result<(TargetingState, FluctuationTrace)> {
    if max_iter < 1 {
        return Err(Error::Invalid("max_iter must be at least 1".into()));
    }
    let n = data.n();
    let mut state = TargetingState::from_nuisances(nuisances, kind, variant);
    let mut trace = FluctuationTrace {
        eps: Vec::new(),
        ic_mean: Vec::new(),
        sigma_hat: Vec::new(),
        loglik: Vec::new(),
        k: 0,
        converged: false,
        reason: StopReason::MaxIter,
    };

    loop {
        let b = blip(&state.q_1, &state.q_0)?;
        let cc = clever_covariates(kind, variant, Some(&b), &state.g1, &data.a, &state.plan)?;
        let psi = plugin_estimate(kind, variant, &b, &state.q_1, &state.plan)?;
        let ic = influence_curve(
            kind, variant, &cc, &state.q_a, &data.y, &b, &state.q_1, psi, &state.plan,
        )?;
        let sigma_hat = sample_sd(&ic.total);
        trace.ic_mean.push(mean(&ic.d_y));
        trace.sigma_hat.push(sigma_hat);
        trace.loglik.push(pooled_loglik(&data.y, |i| state.q_a[i]));

        if stopping_check(&ic.d_y, sigma_hat, n) {
            trace.converged = true;
            trace.reason = StopReason::ToleranceMet;
            break;
        }
        if trace.eps.len() >= max_iter {
            trace.converged = false;
            trace.reason = StopReason::MaxIter;
            break;
        }

        let offset: Vec<f64> = state.q_a.iter().map(|&q| logit(q)).collect();
        let eps = fit_epsilon(&data.y, &offset, &cc.h_a)?;
        if eps.abs() < EPS_NEGLIGIBLE {
            trace.converged = true;
            trace.reason = StopReason::EpsNegligible;
            break;
        }
        trace.eps.push(eps);
        state = apply_fluctuation(&state, eps, &cc);
    }

    trace.k = trace.eps.len();
    Ok((state, trace))
}
