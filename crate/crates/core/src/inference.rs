//! Step 4: standard errors, confidence intervals, and the full audit report
//! in original outcome units.

use statrs::distribution::{ContinuousCDF, Normal};

use crate::crossfit::{CrossFittedNuisances, NuisanceAudit};
use crate::data::{unscale_parameter, unscale_se, Dataset};
use crate::error::{Error, Result};
use crate::numeric::{mean, sample_sd};
use crate::params::{blip, clever_covariates, influence_curve, plugin_estimate, ICComponents};
use crate::targeting::{FluctuationTrace, StopReason, TargetingState};

/// Everything a run reports, serialized as stable-keyed JSON. Numeric fields
/// survive a serialize/parse round trip bit-for-bit.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct EstimateReport {
    pub parameter: crate::params::ParameterKind,
    pub variant: crate::params::Variant,
    /// Point estimate in original outcome units.
    pub psi: f64,
    pub se: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    pub alpha: f64,
    pub psi_scaled: f64,
    pub se_scaled: f64,
    /// Sample sd of the residual IC component alone (scaled units) — the
    /// total-IC sd behind `se` is the default for intervals.
    pub sigma_dy_scaled: f64,
    pub k_iterations: usize,
    pub converged: bool,
    pub reason: StopReason,
    pub eps: Vec<f64>,
    /// Final stopping statistic mean(d_Y), scaled units.
    pub ic_mean_final: f64,
    pub n: usize,
    #[serde(rename = "K")]
    pub k_folds: usize,
    pub seed: u64,
    pub scale_min: f64,
    pub scale_max: f64,
    pub scale_degenerate: bool,
    pub learner_audit: Vec<NuisanceAudit>,
    pub g_truncated_count: usize,
    pub warnings: Vec<String>,
    /// Effective run configuration, echoed by the CLI for auditability.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub config: Option<serde_json::Value>,
}

/// sd(ic)/√n with the n−1 divisor, in the units of `ic_total`.
pub fn standard_error(ic_total: &[f64]) -> f64 {
    sample_sd(ic_total) / (ic_total.len() as f64).sqrt()
}

/// Normal quantile for the two-sided interval.
pub fn z_quantile(alpha: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::BadAlpha { alpha });
    }
    let normal = Normal::new(0.0, 1.0).expect("standard normal");
    Ok(normal.inverse_cdf(1.0 - alpha / 2.0))
}

pub fn confidence_interval(psi: f64, se: f64, alpha: f64) -> Result<(f64, f64)> {
    let z = z_quantile(alpha)?;
    Ok((psi - z * se, psi + z * se))
}

/// Build the final report from a completed targeting run: evaluate the
/// plug-in and influence curve at the final state, back-transform to
/// original units, and attach the audit trail.
pub fn assemble_report(
    state: &TargetingState,
    trace: &FluctuationTrace,
    data: &Dataset,
    nuisances: &CrossFittedNuisances,
    alpha: f64,
) -> Result<(EstimateReport, ICComponents)> {
    let kind = state.kind;
    let variant = state.variant;
    let b = blip(&state.q_1, &state.q_0)?;
    let cc = clever_covariates(kind, variant, Some(&b), &state.g1, &data.a, &state.plan)?;
    let psi_scaled = plugin_estimate(kind, variant, &b, &state.q_1, &state.plan)?;
    let ic = influence_curve(
        kind, variant, &cc, &state.q_a, &data.y, &b, &state.q_1, psi_scaled, &state.plan,
    )?;

    let se_scaled = standard_error(&ic.total);
    let psi = unscale_parameter(psi_scaled, kind, &data.scale);
    let se = unscale_se(se_scaled, kind, &data.scale);
    let (ci_lo, ci_hi) = confidence_interval(psi, se, alpha)?;

    let mut warnings = Vec::new();
    if data.scale.degenerate {
        warnings.push("degenerate outcome scale: all outcomes equal".to_owned());
    }
    if se == 0.0 {
        warnings.push("degenerate inference: constant influence curve".to_owned());
    }
    if !trace.converged {
        warnings.push(format!(
            "targeting stopped at max_iter without meeting the tolerance (k = {})",
            trace.k
        ));
    }
    if nuisances.per_fold_audit.iter().any(|a| a.q_ridge_fallback || a.g_ridge_fallback) {
        warnings.push("ridge fallback used in at least one nuisance fit".to_owned());
    }

    let report = EstimateReport {
        parameter: kind,
        variant,
        psi,
        se,
        ci_lo,
        ci_hi,
        alpha,
        psi_scaled,
        se_scaled,
        sigma_dy_scaled: sample_sd(&ic.d_y),
        k_iterations: trace.k,
        converged: trace.converged,
        reason: trace.reason,
        eps: trace.eps.clone(),
        ic_mean_final: mean(&ic.d_y),
        n: data.n(),
        k_folds: state.plan.k,
        seed: state.plan.seed,
        scale_min: data.scale.min,
        scale_max: data.scale.max,
        scale_degenerate: data.scale.degenerate,
        learner_audit: nuisances.per_fold_audit.clone(),
        g_truncated_count: nuisances.g_truncated_count,
        warnings,
        config: None,
    };
    Ok((report, ic))
}
