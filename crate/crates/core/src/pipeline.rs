//! End-to-end estimation: fold plan → cross-fitted nuisances → targeting →
//! report.

use crate::crossfit::{crossfit_nuisances, CrossFittedNuisances};
use crate::data::{make_folds, Dataset, FoldPlan};
use crate::error::{Error, Result};
use crate::inference::{assemble_report, EstimateReport};
use crate::learners::{Family, LearnerSpec, ModelForm};
use crate::params::{ICComponents, ParameterKind, Variant};
use crate::targeting::{run_targeting, FluctuationTrace, TargetingState};

pub const DEFAULT_K: usize = 10;
pub const DEFAULT_ALPHA: f64 = 0.05;
pub const DEFAULT_G_BOUNDS: (f64, f64) = (0.025, 0.975);
pub const DEFAULT_MAX_ITER: usize = 100;
pub const DEFAULT_SEED: u64 = 1;

#[derive(Debug, Clone)]
pub struct EstimatorConfig {
    pub kind: ParameterKind,
    pub variant: Variant,
    pub k: usize,
    pub seed: u64,
    /// Stratify the fold split by treatment arm (default on, protecting
    /// positivity within training folds).
    pub stratify: bool,
    pub q_candidates: Vec<LearnerSpec>,
    pub g_candidates: Vec<LearnerSpec>,
    pub g_bounds: (f64, f64),
    pub max_iter: usize,
    pub alpha: f64,
}

impl EstimatorConfig {
    pub fn new(kind: ParameterKind) -> Self {
        let binomial = |form| LearnerSpec { family: Family::Binomial, form };
        EstimatorConfig {
            kind,
            variant: Variant::Stacked,
            k: DEFAULT_K,
            seed: DEFAULT_SEED,
            stratify: true,
            q_candidates: vec![
                binomial(ModelForm::InterceptOnly),
                binomial(ModelForm::MainTerms),
                binomial(ModelForm::Interaction),
            ],
            g_candidates: vec![binomial(ModelForm::InterceptOnly), binomial(ModelForm::MainTerms)],
            g_bounds: DEFAULT_G_BOUNDS,
            max_iter: DEFAULT_MAX_ITER,
            alpha: DEFAULT_ALPHA,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k < 2 {
            return Err(Error::BadFoldCount { k: self.k, n: 0 });
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::BadAlpha { alpha: self.alpha });
        }
        let (lo, hi) = self.g_bounds;
        if !(lo > 0.0 && lo <= hi && hi < 1.0) {
            return Err(Error::BadPropensityBounds { lo, hi });
        }
        if self.max_iter < 1 {
            return Err(Error::Invalid("max_iter must be at least 1".into()));
        }
        if self.q_candidates.is_empty() {
            return Err(Error::EmptyInput { what: "outcome-model candidates" });
        }
        if self.g_candidates.is_empty() {
            return Err(Error::EmptyInput { what: "propensity candidates" });
        }
        Ok(())
    }
}

/// A completed run: the report plus the internals tests and dump flags need.
#[derive(Debug, Clone)]
pub struct EstimateRun {
    pub report: EstimateReport,
    pub state: TargetingState,
    pub trace: FluctuationTrace,
    /// Influence-curve components at the final state.
    pub ic: ICComponents,
    pub nuisances: CrossFittedNuisances,
}

/// Build the fold plan and cross-fit the nuisances per the config.
pub fn prepare_nuisances(data: &Dataset, cfg: &EstimatorConfig) -> Result<CrossFittedNuisances> {
    cfg.validate()?;
    let strata = cfg.stratify.then_some(data.a.as_slice());
    let plan = make_folds(data.n(), cfg.k, cfg.seed, strata)?;
    crossfit_nuisances(data, &plan, &cfg.q_candidates, &cfg.g_candidates, cfg.g_bounds)
}

/// Target and report on already cross-fitted nuisances (used to run several
/// variants against identical initial fits).
pub fn run_with_nuisances(
    data: &Dataset,
    cfg: &EstimatorConfig,
    nuisances: &CrossFittedNuisances,
) -> Result<EstimateRun> {
    cfg.validate()?;
    let (state, trace) = run_targeting(nuisances, data, cfg.kind, cfg.variant, cfg.max_iter)?;
    let (report, ic) = assemble_report(&state, &trace, data, nuisances, cfg.alpha)?;
    Ok(EstimateRun { report, state, trace, ic, nuisances: nuisances.clone() })
}

/// Full pipeline with an explicit fold plan (fold-purity and overlap tests
/// need to pin the plan across runs).
pub fn run_estimate_with_plan(
    data: &Dataset,
    cfg: &EstimatorConfig,
    plan: &FoldPlan,
) -> Result<EstimateRun> {
    cfg.validate()?;
    let nuisances =
        crossfit_nuisances(data, plan, &cfg.q_candidates, &cfg.g_candidates, cfg.g_bounds)?;
    run_with_nuisances(data, cfg, &nuisances)
}

/// Full pipeline: fold plan from the config seed, cross-fit, target, report.
pub fn run_estimate(data: &Dataset, cfg: &EstimatorConfig) -> Result<EstimateRun> {
    let nuisances = prepare_nuisances(data, cfg)?;
    run_with_nuisances(data, cfg, &nuisances)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_validation() {
        let mut cfg = EstimatorConfig::new(ParameterKind::Ate);
        assert!(cfg.validate().is_ok());
        cfg.alpha = 1.5;
        assert!(matches!(cfg.validate(), Err(Error::BadAlpha { .. })));
        cfg.alpha = 0.05;
        cfg.k = 1;
        assert!(matches!(cfg.validate(), Err(Error::BadFoldCount { .. })));
        cfg.k = 10;
        cfg.g_bounds = (0.0, 0.9);
        assert!(matches!(cfg.validate(), Err(Error::BadPropensityBounds { .. })));
        cfg.g_bounds = (0.025, 0.975);
        cfg.q_candidates.clear();
        assert!(cfg.validate().is_err());
    }
}
