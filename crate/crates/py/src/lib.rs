//! Python bindings: estimation, fold construction, truth computation, and
//! the Monte Carlo harness, with reports returned as plain dicts.

use nalgebra::DMatrix;
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::{PyBool, PyDict, PyList, PyString};

use cvtmle_core::data::{load_csv, make_folds as core_make_folds, Dataset};
use cvtmle_core::learners::{Family, LearnerSpec};
use cvtmle_core::params::{ParameterKind, Variant};
use cvtmle_core::pipeline::{run_estimate, EstimatorConfig};
use cvtmle_core::sim::{
    compare_variants as core_compare_variants, run_monte_carlo, true_value as core_true_value,
    DgpSpec,
};

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn json_to_py<'py>(py: Python<'py>, v: &serde_json::Value) -> PyResult<Bound<'py, PyAny>> {
    use serde_json::Value;
    Ok(match v {
        Value::Null => py.None().into_bound(py),
        Value::Bool(b) => PyBool::new(py, *b).to_owned().into_any(),
        Value::Number(n) => {
            if let Some(i) = n.as_i64() {
                i.into_pyobject(py)?.into_any()
            } else if let Some(u) = n.as_u64() {
                u.into_pyobject(py)?.into_any()
            } else {
                n.as_f64().unwrap_or(f64::NAN).into_pyobject(py)?.into_any()
            }
        }
        Value::String(s) => PyString::new(py, s).into_any(),
        Value::Array(items) => {
            let list = PyList::empty(py);
            for item in items {
                list.append(json_to_py(py, item)?)?;
            }
            list.into_any()
        }
        Value::Object(map) => {
            let dict = PyDict::new(py);
            for (key, val) in map {
                dict.set_item(key, json_to_py(py, val)?)?;
            }
            dict.into_any()
        }
    })
}

fn to_py_dict<'py, T: serde::Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let json = serde_json::to_value(value).map_err(value_err)?;
    json_to_py(py, &json)
}

#[allow(clippy::too_many_arguments)]
fn build_config(
    param: &str,
    variant: &str,
    k: usize,
    seed: u64,
    q_learners: &str,
    g_learners: &str,
    g_lo: f64,
    g_hi: f64,
    max_iter: usize,
    alpha: f64,
    stratify: bool,
) -> PyResult<EstimatorConfig> {
    let kind = ParameterKind::parse(param).map_err(value_err)?;
    let mut cfg = EstimatorConfig::new(kind);
    cfg.variant = Variant::parse(variant).map_err(value_err)?;
    cfg.k = k;
    cfg.seed = seed;
    cfg.q_candidates = parse_learners(q_learners)?;
    cfg.g_candidates = parse_learners(g_learners)?;
    cfg.g_bounds = (g_lo, g_hi);
    cfg.max_iter = max_iter;
    cfg.alpha = alpha;
    cfg.stratify = stratify;
    cfg.validate().map_err(value_err)?;
    Ok(cfg)
}

fn parse_learners(spec: &str) -> PyResult<Vec<LearnerSpec>> {
    spec.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| LearnerSpec::parse(s, Family::Binomial).map_err(value_err))
        .collect()
}

fn run_report<'py>(py: Python<'py>, data: &Dataset, cfg: &EstimatorConfig) -> PyResult<Bound<'py, PyAny>> {
    let run = run_estimate(data, cfg).map_err(value_err)?;
    to_py_dict(py, &run.report)
}

/// Estimate a parameter from in-memory arrays. `w` is row-major (one inner
/// list per observation); returns the full report as a dict.
#[pyfunction]
#[pyo3(signature = (w, a, y, param, variant = "stacked", k = 10, seed = 1,
       q_learners = "mean,glm,glm-interact", g_learners = "mean,glm",
       g_lo = 0.025, g_hi = 0.975, max_iter = 100, alpha = 0.05, stratify = true))]
#[allow(clippy::too_many_arguments)]
fn estimate<'py>(
    py: Python<'py>,
    w: Vec<Vec<f64>>,
    a: Vec<u8>,
    y: Vec<f64>,
    param: &str,
    variant: &str,
    k: usize,
    seed: u64,
    q_learners: &str,
    g_learners: &str,
    g_lo: f64,
    g_hi: f64,
    max_iter: usize,
    alpha: f64,
    stratify: bool,
) -> PyResult<Bound<'py, PyAny>> {
    let n = w.len();
    let p = w.first().map_or(0, Vec::len);
    if w.iter().any(|row| row.len() != p) {
        return Err(value_err("covariate rows must all have the same length"));
    }
    let flat: Vec<f64> = w.iter().flatten().copied().collect();
    let matrix = DMatrix::from_row_iterator(n, p, flat);
    let names = (1..=p).map(|j| format!("w{j}")).collect();
    let data = Dataset::new(matrix, names, a, y).map_err(value_err)?;
    let cfg = build_config(
        param, variant, k, seed, q_learners, g_learners, g_lo, g_hi, max_iter, alpha, stratify,
    )?;
    run_report(py, &data, &cfg)
}

/// Estimate a parameter from a CSV file (columns besides the treatment and
/// outcome are covariates).
#[pyfunction]
#[pyo3(signature = (path, param, treatment_col = "A", outcome_col = "Y",
       variant = "stacked", k = 10, seed = 1,
       q_learners = "mean,glm,glm-interact", g_learners = "mean,glm",
       g_lo = 0.025, g_hi = 0.975, max_iter = 100, alpha = 0.05, stratify = true))]
#[allow(clippy::too_many_arguments)]
fn estimate_csv<'py>(
    py: Python<'py>,
    path: &str,
    param: &str,
    treatment_col: &str,
    outcome_col: &str,
    variant: &str,
    k: usize,
    seed: u64,
    q_learners: &str,
    g_learners: &str,
    g_lo: f64,
    g_hi: f64,
    max_iter: usize,
    alpha: f64,
    stratify: bool,
) -> PyResult<Bound<'py, PyAny>> {
    let data = load_csv(path.as_ref(), treatment_col, outcome_col).map_err(value_err)?;
    let cfg = build_config(
        param, variant, k, seed, q_learners, g_learners, g_lo, g_hi, max_iter, alpha, stratify,
    )?;
    run_report(py, &data, &cfg)
}

/// Build a cross-validation split; returns the 1-based validation-fold
/// label per row. Pass `stratify_by` (per-row labels) for stratified folds.
#[pyfunction]
#[pyo3(signature = (n, k, seed, stratify_by = None))]
fn make_folds(n: usize, k: usize, seed: u64, stratify_by: Option<Vec<u8>>) -> PyResult<Vec<usize>> {
    let plan = core_make_folds(n, k, seed, stratify_by.as_deref()).map_err(value_err)?;
    Ok(plan.assignment)
}

/// Exact target-parameter value under a named generating-process preset.
#[pyfunction]
fn true_value(dgp: &str, param: &str) -> PyResult<f64> {
    let spec = DgpSpec::preset(dgp).map_err(value_err)?;
    let kind = ParameterKind::parse(param).map_err(value_err)?;
    Ok(core_true_value(&spec, kind))
}

fn with_pool<T: Send>(jobs: usize, work: impl FnOnce() -> T + Send) -> PyResult<T> {
    if jobs == 0 {
        return Err(value_err("jobs must be at least 1"));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| value_err(format!("cannot build worker pool: {e}")))?;
    Ok(pool.install(work))
}

/// Monte Carlo study against a known generating process; returns replicate
/// records and aggregates as a dict.
#[pyfunction]
#[pyo3(signature = (dgp, param, n, reps, variant = "stacked", k = 10, seed = 1,
       q_learners = "mean,glm,glm-interact", g_learners = "mean,glm",
       g_lo = 0.025, g_hi = 0.975, max_iter = 100, alpha = 0.05, jobs = 1))]
#[allow(clippy::too_many_arguments)]
fn simulate<'py>(
    py: Python<'py>,
    dgp: &str,
    param: &str,
    n: usize,
    reps: u64,
    variant: &str,
    k: usize,
    seed: u64,
    q_learners: &str,
    g_learners: &str,
    g_lo: f64,
    g_hi: f64,
    max_iter: usize,
    alpha: f64,
    jobs: usize,
) -> PyResult<Bound<'py, PyAny>> {
    let spec = DgpSpec::preset(dgp).map_err(value_err)?;
    let cfg = build_config(
        param, variant, k, seed, q_learners, g_learners, g_lo, g_hi, max_iter, alpha, true,
    )?;
    let result = with_pool(jobs, || run_monte_carlo(&spec, n, reps, seed, &cfg))?
        .map_err(value_err)?;
    to_py_dict(py, &result)
}

/// Run both targeting variants on identical replicates; returns paired
/// differences, the RMSE ratio, and the coverage difference as a dict.
#[pyfunction]
#[pyo3(signature = (dgp, param, n, reps, k = 10, seed = 1,
       q_learners = "mean,glm,glm-interact", g_learners = "mean,glm",
       g_lo = 0.025, g_hi = 0.975, max_iter = 100, alpha = 0.05, jobs = 1))]
#[allow(clippy::too_many_arguments)]
fn compare_variants<'py>(
    py: Python<'py>,
    dgp: &str,
    param: &str,
    n: usize,
    reps: u64,
    k: usize,
    seed: u64,
    q_learners: &str,
    g_learners: &str,
    g_lo: f64,
    g_hi: f64,
    max_iter: usize,
    alpha: f64,
    jobs: usize,
) -> PyResult<Bound<'py, PyAny>> {
    let spec = DgpSpec::preset(dgp).map_err(value_err)?;
    let cfg = build_config(
        param, "stacked", k, seed, q_learners, g_learners, g_lo, g_hi, max_iter, alpha, true,
    )?;
    let result = with_pool(jobs, || core_compare_variants(&spec, n, reps, seed, &cfg))?
        .map_err(value_err)?;
    to_py_dict(py, &result)
}

#[pymodule]
fn cvtmle(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(estimate, m)?)?;
    m.add_function(wrap_pyfunction!(estimate_csv, m)?)?;
    m.add_function(wrap_pyfunction!(make_folds, m)?)?;
    m.add_function(wrap_pyfunction!(true_value, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(compare_variants, m)?)?;
    Ok(())
}
