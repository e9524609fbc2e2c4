//! Cross-fitted initial nuisance estimation: train the outcome model and
//! propensity score on each fold's complement, predict on the held-out fold,
//! and stack the validation predictions into full-length vectors.

use nalgebra::DMatrix;

use crate::data::{make_folds, Dataset, FoldPlan};
use crate::error::{Error, Result};
use crate::learners::{select_learner, predict, LearnerSpec, SelectorLoss};
use crate::numeric::clamp_unit;

/// Per-fold record of what the discrete selector chose for each nuisance.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct NuisanceAudit {
    pub fold: usize,
    pub q_learner: String,
    pub q_cv_risk: f64,
    pub q_ridge_fallback: bool,
    pub g_learner: String,
    pub g_cv_risk: f64,
    pub g_ridge_fallback: bool,
}

/// Stacked validation-set predictions for all n rows, in original row order.
#[derive(Debug, Clone)]
pub struct CrossFittedNuisances {
    /// Q̄⁰ at the observed (A_i, W_i).
    pub q0_a: Vec<f64>,
    /// Q̄⁰(1, W_i).
    pub q0_1: Vec<f64>,
    /// Q̄⁰(0, W_i).
    pub q0_0: Vec<f64>,
    /// ĝ(1|W_i) after truncation.
    pub g1: Vec<f64>,
    pub plan: FoldPlan,
    pub per_fold_audit: Vec<NuisanceAudit>,
    /// How many ĝ entries the truncation bounds clipped.
    pub g_truncated_count: usize,
}

/// Elementwise clamp of the propensity into `bounds`, returning the clamped
/// vector and the number of entries that moved.
pub fn truncate_propensity(g1: &[f64], bounds: (f64, f64)) -> Result<(Vec<f64>, usize)> {
    let (lo, hi) = bounds;
    if !(lo > 0.0 && lo <= hi && hi < 1.0) {
        return Err(Error::BadPropensityBounds { lo, hi });
    }
    let mut count = 0;
    let out = g1
        .iter()
        .map(|&g| {
            let c = g.clamp(lo, hi);
            if c != g {
                count += 1;
            }
            c
        })
        .collect();
    Ok((out, count))
}

/// Design matrix for the outcome model: treatment in the first column
/// (optionally overridden to a counterfactual arm), covariates after it.
fn q_design(data: &Dataset, rows: &[usize], set_a: Option<f64>) -> DMatrix<f64> {
    let p = data.n_covariates();
    DMatrix::from_fn(rows.len(), p + 1, |i, j| {
        let r = rows[i];
        if j == 0 {
            set_a.unwrap_or(data.a[r] as f64)
        } else {
            data.w[(r, j - 1)]
        }
    })
}

fn w_rows(data: &Dataset, rows: &[usize]) -> DMatrix<f64> {
    let p = data.n_covariates();
    DMatrix::from_fn(rows.len(), p, |i, j| data.w[(rows[i], j)])
}

/// Deterministic seed for a fold's inner selector split, derived from the
/// outer plan so repeated runs agree and no global RNG state is involved.
fn inner_seed(plan: &FoldPlan, fold: usize) -> u64 {
    plan.seed
        .wrapping_mul(0x9E3779B97F4A7C15)
        .wrapping_add(fold as u64)
}

pub fn crossfit_nuisances(
    data: &Dataset,
    plan: &FoldPlan,
    q_candidates: &[LearnerSpec],
    g_candidates: &[LearnerSpec],
    g_bounds: (f64, f64),
) -> Result<CrossFittedNuisances> {
    let n = data.n();
    if plan.n() != n {
        return Err(Error::LengthMismatch { what: "fold plan vs dataset" });
    }
    // Validate bounds before any fitting happens.
    truncate_propensity(&[], g_bounds)?;

    let mut q0_a = vec![0.0; n];
    let mut q0_1 = vec![0.0; n];
    let mut q0_0 = vec![0.0; n];
    let mut g1_raw = vec![0.0; n];
    let mut per_fold_audit = Vec::with_capacity(plan.k);

    for fold in 1..=plan.k {
        let train = plan.training_indices(fold);
        let valid = plan.validation_indices(fold);
        for arm in [0u8, 1] {
            if !train.iter().any(|&i| data.a[i] == arm) {
                return Err(Error::TrainingFoldMissingArm { fold, arm });
            }
        }

        let m = train.len();
        if m < 2 {
            return Err(Error::TooFewRows { n: m });
        }
        let inner = make_folds(m, 10.min(m), inner_seed(plan, fold), None)?;

        let y_train: Vec<f64> = train.iter().map(|&i| data.y[i]).collect();
        let q_sel = select_learner(
            q_candidates,
            &q_design(data, &train, None),
            &y_train,
            &inner,
            SelectorLoss::LogLoss,
        )?;

        let a_train: Vec<f64> = train.iter().map(|&i| data.a[i] as f64).collect();
        let g_sel = select_learner(
            g_candidates,
            &w_rows(data, &train),
            &a_train,
            &inner,
            SelectorLoss::LogLoss,
        )?;

        let p_obs = predict(&q_sel.fitted, &q_design(data, &valid, None))?;
        let p_1 = predict(&q_sel.fitted, &q_design(data, &valid, Some(1.0)))?;
        let p_0 = predict(&q_sel.fitted, &q_design(data, &valid, Some(0.0)))?;
        let p_g = predict(&g_sel.fitted, &w_rows(data, &valid))?;
        for (pos, &i) in valid.iter().enumerate() {
            q0_a[i] = clamp_unit(p_obs[pos]);
            q0_1[i] = clamp_unit(p_1[pos]);
            q0_0[i] = clamp_unit(p_0[pos]);
            g1_raw[i] = p_g[pos];
        }

        per_fold_audit.push(NuisanceAudit {
            fold,
            q_learner: q_sel.spec.label(),
            q_cv_risk: q_sel.cv_risks[q_sel.chosen_index],
            q_ridge_fallback: q_sel.fitted.ridge_fallback,
            g_learner: g_sel.spec.label(),
            g_cv_risk: g_sel.cv_risks[g_sel.chosen_index],
            g_ridge_fallback: g_sel.fitted.ridge_fallback,
        });
    }

    let (g1, g_truncated_count) = truncate_propensity(&g1_raw, g_bounds)?;
    Ok(CrossFittedNuisances {
        q0_a,
        q0_1,
        q0_0,
        g1,
        plan: plan.clone(),
        per_fold_audit,
        g_truncated_count,
    })
}
