//! Cross-validated targeted maximum likelihood estimation for the average
//! treatment effect, the treatment-specific mean, and the variance of the
//! treatment effect, with influence-curve-based inference.
//!
//! Initial nuisance fits are cross-fitted: each fold's outcome-model and
//! propensity predictions come from models trained on the fold's complement,
//! stacked back into full-length vectors. Targeting then fluctuates the
//! stacked predictions along a one-dimensional logistic submodel (pooled
//! no-intercept offset regression) until the residual influence-curve mean
//! falls below σ̂/n. Two formulations are available: `stacked` uses
//! full-sample empirical means inside the clever covariate, `foldwise` uses
//! validation-fold means. For the ATE and TSM the two coincide exactly; for
//! the VTE they differ only through the centering.
//!
//! A Monte Carlo harness with known-truth generating processes verifies
//! bias, confidence-interval coverage, and variant agreement.

pub mod crossfit;
pub mod data;
pub mod error;
pub mod inference;
pub mod learners;
pub mod numeric;
pub mod params;
pub mod pipeline;
pub mod sim;
pub mod targeting;

pub use crossfit::{crossfit_nuisances, truncate_propensity, CrossFittedNuisances, NuisanceAudit};
pub use data::{load_csv, make_folds, scale_parameter, unscale_parameter, unscale_se, Dataset, FoldPlan, OutcomeScale};
pub use error::{Error, Result};
pub use inference::{assemble_report, confidence_interval, standard_error, EstimateReport};
pub use learners::{fit_learner, predict, select_learner, Family, FittedPredictor, LearnerSpec, ModelForm, SelectorLoss};
pub use params::{blip, clever_covariates, influence_curve, plugin_estimate, CleverCovariates, ICComponents, ParameterKind, Variant};
pub use pipeline::{prepare_nuisances, run_estimate, run_estimate_with_plan, run_with_nuisances, EstimateRun, EstimatorConfig};
pub use sim::{compare_variants, draw_sample, replicate_stream, run_monte_carlo, true_value, DgpSpec, MCResult, VariantComparison, WLaw};
pub use targeting::{apply_fluctuation, fit_epsilon, run_targeting, stopping_check, FluctuationTrace, StopReason, TargetingState};
