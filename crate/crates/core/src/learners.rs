//! Base prediction algorithms (GLMs fit in-repo) and a cross-validated
//! discrete selector used for the initial nuisance fits.

use nalgebra::{DMatrix, DVector};

use crate::data::FoldPlan;
use crate::error::{Error, Result};
use crate::numeric::{expit, logit};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Family {
    Binomial,
    Gaussian,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelForm {
    InterceptOnly,
    MainTerms,
    /// Per-column powers 1..=degree; no cross terms.
    Polynomial(u32),
    /// Main terms plus all pairwise products.
    Interaction,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LearnerSpec {
    pub family: Family,
    pub form: ModelForm,
}

impl LearnerSpec {
    /// Parse the compact CLI string form: "mean", "glm", "glm-poly:D",
    /// "glm-interact".
    pub fn parse(s: &str, family: Family) -> Result<Self> {
        let form = match s {
            "mean" => ModelForm::InterceptOnly,
            "glm" => ModelForm::MainTerms,
            "glm-interact" => ModelForm::Interaction,
            _ => match s.strip_prefix("glm-poly:") {
                Some(d) => {
                    let degree: u32 = d
                        .parse()
                        .map_err(|_| Error::BadLearnerSpec { spec: s.to_owned() })?;
                    if degree < 1 {
                        return Err(Error::BadLearnerSpec { spec: s.to_owned() });
                    }
                    ModelForm::Polynomial(degree)
                }
                None => return Err(Error::BadLearnerSpec { spec: s.to_owned() }),
            },
        };
        Ok(LearnerSpec { family, form })
    }

    pub fn label(&self) -> String {
        match self.form {
            ModelForm::InterceptOnly => "mean".to_owned(),
            ModelForm::MainTerms => "glm".to_owned(),
            ModelForm::Polynomial(d) => format!("glm-poly:{d}"),
            ModelForm::Interaction => "glm-interact".to_owned(),
        }
    }
}

/// Expanded design for a model form: intercept column first, then the
/// form-specific terms, in a fixed deterministic order.
fn expand_features(form: ModelForm, x: &DMatrix<f64>) -> DMatrix<f64> {
    let m = x.nrows();
    let q = x.ncols();
    let cols = expanded_arity(form, q);
    let mut z = DMatrix::zeros(m, cols);
    z.column_mut(0).fill(1.0);
    match form {
        ModelForm::InterceptOnly => {}
        ModelForm::MainTerms => {
            z.view_mut((0, 1), (m, q)).copy_from(x);
        }
        ModelForm::Polynomial(d) => {
            let mut c = 1;
            for j in 0..q {
                for p in 1..=d {
                    for i in 0..m {
                        z[(i, c)] = x[(i, j)].powi(p as i32);
                    }
                    c += 1;
                }
            }
        }
        ModelForm::Interaction => {
            z.view_mut((0, 1), (m, q)).copy_from(x);
            let mut c = 1 + q;
            for j1 in 0..q {
                for j2 in (j1 + 1)..q {
                    for i in 0..m {
                        z[(i, c)] = x[(i, j1)] * x[(i, j2)];
                    }
                    c += 1;
                }
            }
        }
    }
    z
}

fn expanded_arity(form: ModelForm, q: usize) -> usize {
    match form {
        ModelForm::InterceptOnly => 1,
        ModelForm::MainTerms => 1 + q,
        ModelForm::Polynomial(d) => 1 + q * d as usize,
        ModelForm::Interaction => 1 + q + q * (q - 1) / 2,
    }
}

#[derive(Debug, Clone)]
pub struct FittedPredictor {
    pub spec: LearnerSpec,
    pub coefficients: DVector<f64>,
    /// Number of raw input columns the feature map expects.
    pub input_arity: usize,
    /// True when a singular system forced the ridge-regularized solve.
    pub ridge_fallback: bool,
}

const IRLS_MAX_ITER: usize = 100;
const IRLS_GRAD_TOL: f64 = 1e-8;
const RIDGE: f64 = 1e-6;

/// Solve the binomial MLE by iteratively reweighted least squares.
/// Fractional responses in [0,1] are valid (quasi-binomial likelihood).
fn fit_binomial(z: &DMatrix<f64>, y: &[f64]) -> (DVector<f64>, bool) {
    let m = z.nrows();
    let q = z.ncols();
    let mut beta = DVector::<f64>::zeros(q);
    let mut ridge_used = false;
    for _ in 0..IRLS_MAX_ITER {
        let eta = z * &beta;
        let mu: Vec<f64> = eta.iter().map(|&e| expit(e)).collect();
        let resid = DVector::from_iterator(m, y.iter().zip(&mu).map(|(&yi, &mi)| yi - mi));
        let grad = z.transpose() * &resid;
        if grad.norm() <= IRLS_GRAD_TOL {
            break;
        }
        let mut zw = z.clone();
        for i in 0..m {
            let w = (mu[i] * (1.0 - mu[i])).max(1e-10);
            zw.row_mut(i).scale_mut(w);
        }
        let h = z.transpose() * zw;
        let delta = match h.clone().cholesky() {
            Some(ch) => ch.solve(&grad),
            None => {
                ridge_used = true;
                let hr = h + DMatrix::identity(q, q) * RIDGE;
                match hr.cholesky() {
                    Some(ch) => ch.solve(&grad),
                    None => break,
                }
            }
        };
        if delta.iter().any(|v| !v.is_finite()) {
            break;
        }
        beta += delta;
    }
    (beta, ridge_used)
}

fn fit_gaussian(z: &DMatrix<f64>, y: &[f64]) -> (DVector<f64>, bool) {
    let q = z.ncols();
    let yv = DVector::from_column_slice(y);
    let zty = z.transpose() * &yv;
    let ztz = z.transpose() * z;
    match ztz.clone().cholesky() {
        Some(ch) => (ch.solve(&zty), false),
        None => {
            let reg = ztz + DMatrix::identity(q, q) * RIDGE;
            let beta = reg
                .cholesky()
                .map(|ch| ch.solve(&zty))
                .unwrap_or_else(|| DVector::zeros(q));
            (beta, true)
        }
    }
}

pub fn fit_learner(spec: LearnerSpec, x: &DMatrix<f64>, y: &[f64]) -> Result<FittedPredictor> {
    let m = x.nrows();
    if m == 0 || y.is_empty() {
        return Err(Error::EmptyInput { what: "training data" });
    }
    if y.len() != m {
        return Err(Error::LengthMismatch { what: "design rows vs responses" });
    }
    if spec.family == Family::Binomial && y.iter().any(|&v| !(0.0..=1.0).contains(&v)) {
        return Err(Error::Invalid("binomial response outside [0,1]".into()));
    }

    let q_eff = expanded_arity(spec.form, x.ncols());

    // Constant binomial response: the MLE puts every prediction at the
    // empirical mean, so return the intercept-only solution directly (the
    // clamp keeps the logit finite when the constant is 0 or 1).
    if spec.family == Family::Binomial {
        let y0 = y[0];
        if y.iter().all(|&v| v == y0) {
            let mut coefficients = DVector::zeros(q_eff);
            coefficients[0] = logit(y0.clamp(1e-6, 1.0 - 1e-6));
            return Ok(FittedPredictor {
                spec,
                coefficients,
                input_arity: x.ncols(),
                ridge_fallback: false,
            });
        }
    }

    if m <= q_eff {
        return Err(Error::Invalid(format!(
            "design with {q_eff} expanded columns needs more than {q_eff} rows, got {m}"
        )));
    }

    let z = expand_features(spec.form, x);
    let (coefficients, ridge_fallback) = match spec.family {
        Family::Binomial => fit_binomial(&z, y),
        Family::Gaussian => fit_gaussian(&z, y),
    };
    if coefficients.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite { what: "fitted coefficients" });
    }
    Ok(FittedPredictor { spec, coefficients, input_arity: x.ncols(), ridge_fallback })
}

pub fn predict(fp: &FittedPredictor, x: &DMatrix<f64>) -> Result<Vec<f64>> {
    if x.ncols() != fp.input_arity {
        return Err(Error::ArityMismatch { expected: fp.input_arity, got: x.ncols() });
    }
    if x.nrows() == 0 {
        return Ok(Vec::new());
    }
    let z = expand_features(fp.spec.form, x);
    let eta = z * &fp.coefficients;
    Ok(match fp.spec.family {
        // Clamp hard enough to keep predictions strictly inside (0,1) even
        // when a separable fit pushed coefficients far out.
        Family::Binomial => eta.iter().map(|&e| expit(e).clamp(1e-12, 1.0 - 1e-12)).collect(),
        Family::Gaussian => eta.iter().cloned().collect(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SelectorLoss {
    LogLoss,
    SquaredError,
}

fn pointwise_loss(loss: SelectorLoss, y: f64, p: f64) -> f64 {
    match loss {
        SelectorLoss::LogLoss => {
            let p = p.clamp(1e-12, 1.0 - 1e-12);
            -(y * p.ln() + (1.0 - y) * (1.0 - p).ln())
        }
        SelectorLoss::SquaredError => (y - p) * (y - p),
    }
}

#[derive(Debug, Clone)]
pub struct LearnerSelection {
    pub chosen_index: usize,
    pub spec: LearnerSpec,
    pub fitted: FittedPredictor,
    /// Cross-validated risk per candidate, in candidate order; failed
    /// candidates carry +inf.
    pub cv_risks: Vec<f64>,
}

fn submatrix(x: &DMatrix<f64>, rows: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), x.ncols(), |i, j| x[(rows[i], j)])
}

fn subvector(y: &[f64], rows: &[usize]) -> Vec<f64> {
    rows.iter().map(|&i| y[i]).collect()
}

/// Discrete cross-validated selector: evaluate each candidate's CV risk over
/// the inner folds, pick the minimizer (earliest on ties), refit on all rows.
pub fn select_learner(
    candidates: &[LearnerSpec],
    x: &DMatrix<f64>,
    y: &[f64],
    inner_folds: &FoldPlan,
    loss: SelectorLoss,
) -> Result<LearnerSelection> {
    if candidates.is_empty() {
        return Err(Error::EmptyInput { what: "learner candidates" });
    }
    if inner_folds.n() != x.nrows() || y.len() != x.nrows() {
        return Err(Error::LengthMismatch { what: "selector inputs vs fold plan" });
    }

    let cv_risks: Vec<f64> = candidates
        .iter()
        .map(|&spec| {
            let mut total = 0.0;
            for fold in 1..=inner_folds.k {
                let train = inner_folds.training_indices(fold);
                let valid = inner_folds.validation_indices(fold);
                let fit = match fit_learner(spec, &submatrix(x, &train), &subvector(y, &train)) {
                    Ok(f) => f,
                    Err(_) => return f64::INFINITY,
                };
                let preds = match predict(&fit, &submatrix(x, &valid)) {
                    Ok(p) => p,
                    Err(_) => return f64::INFINITY,
                };
                for (&i, &p) in valid.iter().zip(&preds) {
                    total += pointwise_loss(loss, y[i], p);
                }
            }
            let risk = total / y.len() as f64;
            if risk.is_finite() {
                risk
            } else {
                f64::INFINITY
            }
        })
        .collect();

    let mut chosen_index = 0;
    for (i, &r) in cv_risks.iter().enumerate() {
        if r < cv_risks[chosen_index] {
            chosen_index = i;
        }
    }
    if !cv_risks[chosen_index].is_finite() {
        return Err(Error::AllLearnersFailed);
    }

    let fitted = fit_learner(candidates[chosen_index], x, y)?;
    Ok(LearnerSelection { chosen_index, spec: candidates[chosen_index], fitted, cv_risks })
}
