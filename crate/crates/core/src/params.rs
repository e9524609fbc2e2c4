//! Parameter-specific machinery: blip, clever covariates under both
//! targeting variants, plug-in mappings, and influence-curve components.

use crate::data::FoldPlan;
use crate::error::{Error, Result};
use crate::numeric::mean;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ParameterKind {
    Ate,
    Tsm,
    Vte,
}

impl ParameterKind {
    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ate" => Ok(ParameterKind::Ate),
            "tsm" => Ok(ParameterKind::Tsm),
            "vte" => Ok(ParameterKind::Vte),
            _ => Err(Error::Invalid(format!("unknown parameter '{s}' (want ate|tsm|vte)"))),
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            ParameterKind::Ate => "ate",
            ParameterKind::Tsm => "tsm",
            ParameterKind::Vte => "vte",
        }
    }
}

/// Which targeting formulation to run: `Stacked` pools all validation-set
/// predictions and uses full-sample empirical means inside the clever
/// covariate and plug-in; `Foldwise` uses validation-fold means and averages
/// per-fold plug-ins.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    Stacked,
    Foldwise,
}

impl Variant {
    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "stacked" => Ok(Variant::Stacked),
            "foldwise" => Ok(Variant::Foldwise),
            _ => Err(Error::Invalid(format!("unknown variant '{s}' (want stacked|foldwise)"))),
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            Variant::Stacked => "stacked",
            Variant::Foldwise => "foldwise",
        }
    }
}

/// Fluctuation covariate evaluated at the observed treatment and at both
/// counterfactual arms.
#[derive(Debug, Clone)]
pub struct CleverCovariates {
    pub h_a: Vec<f64>,
    pub h_1: Vec<f64>,
    pub h_0: Vec<f64>,
}

/// Influence-curve components: the outcome-residual part d_Y (drives the
/// stopping rule) and the covariate-marginal part d_W (mean zero at the
/// plug-in by construction). total = d_Y + d_W drives the variance estimate.
#[derive(Debug, Clone)]
pub struct ICComponents {
    pub d_y: Vec<f64>,
    pub d_w: Vec<f64>,
    pub total: Vec<f64>,
}

/// b(W) = Q(1,W) − Q(0,W).
pub fn blip(q1: &[f64], q0: &[f64]) -> Result<Vec<f64>> {
    if q1.len() != q0.len() {
        return Err(Error::LengthMismatch { what: "blip inputs" });
    }
    Ok(q1.iter().zip(q0).map(|(&a, &b)| a - b).collect())
}

/// Mean of `values` over each validation fold, indexed by fold-1.
fn fold_validation_means(values: &[f64], plan: &FoldPlan) -> Vec<f64> {
    let mut sums = vec![0.0; plan.k];
    let mut counts = vec![0usize; plan.k];
    for (i, &v) in values.iter().enumerate() {
        let f = plan.fold_of(i) - 1;
        sums[f] += v;
        counts[f] += 1;
    }
    sums.iter().zip(&counts).map(|(&s, &c)| if c > 0 { s / c as f64 } else { 0.0 }).collect()
}

/// Per-row centered blip b_i − b̄, with b̄ the full-sample mean (stacked) or
/// the mean over the row's validation fold (foldwise).
fn centered_blip(variant: Variant, b: &[f64], plan: &FoldPlan) -> Vec<f64> {
    match variant {
        Variant::Stacked => {
            let m = mean(b);
            b.iter().map(|&v| v - m).collect()
        }
        Variant::Foldwise => {
            let means = fold_validation_means(b, plan);
            b.iter()
                .enumerate()
                .map(|(i, &v)| v - means[plan.fold_of(i) - 1])
                .collect()
        }
    }
}

pub fn clever_covariates(
    kind: ParameterKind,
    variant: Variant,
    b: Option<&[f64]>,
    g1: &[f64],
    a: &[u8],
    plan: &FoldPlan,
) -> Result<CleverCovariates> {
    let n = g1.len();
    if a.len() != n || plan.n() != n {
        return Err(Error::LengthMismatch { what: "clever covariate inputs" });
    }
    let (h_1, h_0): (Vec<f64>, Vec<f64>) = match kind {
        ParameterKind::Ate => (
            g1.iter().map(|&g| 1.0 / g).collect(),
            g1.iter().map(|&g| -1.0 / (1.0 - g)).collect(),
        ),
        ParameterKind::Tsm => (g1.iter().map(|&g| 1.0 / g).collect(), vec![0.0; n]),
        ParameterKind::Vte => {
            let b = b.ok_or(Error::EmptyInput { what: "blip vector for VTE covariate" })?;
            if b.len() != n {
                return Err(Error::LengthMismatch { what: "blip vs propensity" });
            }
            let c = centered_blip(variant, b, plan);
            (
                c.iter().zip(g1).map(|(&ci, &g)| 2.0 * ci / g).collect(),
                c.iter().zip(g1).map(|(&ci, &g)| -2.0 * ci / (1.0 - g)).collect(),
            )
        }
    };
    debug_assert!(h_1.iter().chain(&h_0).all(|v| v.is_finite()));
    let h_a = a
        .iter()
        .enumerate()
        .map(|(i, &ai)| if ai == 1 { h_1[i] } else { h_0[i] })
        .collect();
    Ok(CleverCovariates { h_a, h_1, h_0 })
}

/// Evaluate the plug-in mapping at the current (stacked) predictions, in
/// scaled outcome units.
pub fn plugin_estimate(
    kind: ParameterKind,
    variant: Variant,
    b: &[f64],
    q1: &[f64],
    plan: &FoldPlan,
) -> Result<f64> {
    if b.is_empty() || q1.is_empty() {
        return Err(Error::EmptyInput { what: "plug-in inputs" });
    }
    Ok(match kind {
        // Per-fold blip means average to the full mean on a balanced
        // partition, so both variants use the pooled mean.
        ParameterKind::Ate => mean(b),
        ParameterKind::Tsm => mean(q1),
        ParameterKind::Vte => match variant {
            Variant::Stacked => {
                let m = mean(b);
                b.iter().map(|&v| (v - m) * (v - m)).sum::<f64>() / b.len() as f64
            }
            Variant::Foldwise => {
                let means = fold_validation_means(b, plan);
                let mut per_fold = vec![0.0; plan.k];
                let mut counts = vec![0usize; plan.k];
                for (i, &v) in b.iter().enumerate() {
                    let f = plan.fold_of(i) - 1;
                    let d = v - means[f];
                    per_fold[f] += d * d;
                    counts[f] += 1;
                }
                let fold_vars: Vec<f64> = per_fold
                    .iter()
                    .zip(&counts)
                    .filter(|&(_, &c)| c > 0)
                    .map(|(&s, &c)| s / c as f64)
                    .collect();
                mean(&fold_vars)
            }
        },
    })
}

#[allow(clippy::too_many_arguments)]
pub fn influence_curve(
    kind: ParameterKind,
    variant: Variant,
    cc: &CleverCovariates,
    q_a: &[f64],
    y: &[f64],
    b: &[f64],
    q1: &[f64],
    psi: f64,
    plan: &FoldPlan,
) -> Result<ICComponents> {
    let n = y.len();
    if cc.h_a.len() != n || q_a.len() != n || b.len() != n || q1.len() != n {
        return Err(Error::LengthMismatch { what: "influence curve inputs" });
    }
    if !psi.is_finite() {
        return Err(Error::NonFinite { what: "plug-in estimate" });
    }
    let d_y: Vec<f64> = (0..n).map(|i| cc.h_a[i] * (y[i] - q_a[i])).collect();
    let d_w: Vec<f64> = match kind {
        ParameterKind::Ate => b.iter().map(|&bi| bi - psi).collect(),
        ParameterKind::Tsm => q1.iter().map(|&qi| qi - psi).collect(),
        ParameterKind::Vte => centered_blip(variant, b, plan)
            .iter()
            .map(|&ci| ci * ci - psi)
            .collect(),
    };
    let total = d_y.iter().zip(&d_w).map(|(&a, &b)| a + b).collect();
    Ok(ICComponents { d_y, d_w, total })
}
