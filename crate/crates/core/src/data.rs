//! Observed-data representation, CSV ingestion, outcome scaling, and
//! cross-validation fold construction.

use std::path::Path;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::params::ParameterKind;

/// Min-max record for the outcome. The targeting step fluctuates on the
/// logistic scale, so outcomes are mapped into [0,1] up front and every
/// estimate is mapped back at report time.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct OutcomeScale {
    pub min: f64,
    pub max: f64,
    pub degenerate: bool,
}

impl OutcomeScale {
    pub fn from_raw(y_raw: &[f64]) -> Result<Self> {
        if y_raw.is_empty() {
            return Err(Error::EmptyInput { what: "outcome vector" });
        }
        let min = y_raw.iter().cloned().fold(f64::INFINITY, f64::min);
        let max = y_raw.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        Ok(OutcomeScale { min, max, degenerate: min == max })
    }

    pub fn range(&self) -> f64 {
        self.max - self.min
    }

    /// Map a raw outcome into [0,1]. A degenerate scale (all outcomes equal)
    /// maps everything to the constant 0.5.
    pub fn to_unit(&self, y_raw: f64) -> f64 {
        if self.degenerate {
            0.5
        } else {
            (y_raw - self.min) / self.range()
        }
    }
}

/// Back-transform a scaled-unit estimate into original outcome units.
pub fn unscale_parameter(psi_scaled: f64, kind: ParameterKind, scale: &OutcomeScale) -> f64 {
    if scale.degenerate {
        return match kind {
            ParameterKind::Ate | ParameterKind::Vte => 0.0,
            ParameterKind::Tsm => scale.min,
        };
    }
    let r = scale.range();
    match kind {
        ParameterKind::Ate => psi_scaled * r,
        ParameterKind::Tsm => scale.min + psi_scaled * r,
        ParameterKind::Vte => psi_scaled * r * r,
    }
}

/// Inverse of [`unscale_parameter`] on non-degenerate scales.
pub fn scale_parameter(psi_raw: f64, kind: ParameterKind, scale: &OutcomeScale) -> f64 {
    if scale.degenerate {
        return match kind {
            ParameterKind::Ate | ParameterKind::Vte => 0.0,
            ParameterKind::Tsm => 0.5,
        };
    }
    let r = scale.range();
    match kind {
        ParameterKind::Ate => psi_raw / r,
        ParameterKind::Tsm => (psi_raw - scale.min) / r,
        ParameterKind::Vte => psi_raw / (r * r),
    }
}

/// Delta-method factor for the standard error: the scaling maps are affine in
/// psi, so the SE scales by the linear coefficient exactly.
pub fn unscale_se(se_scaled: f64, kind: ParameterKind, scale: &OutcomeScale) -> f64 {
    if scale.degenerate {
        return 0.0;
    }
    let r = scale.range();
    match kind {
        ParameterKind::Ate | ParameterKind::Tsm => se_scaled * r,
        ParameterKind::Vte => se_scaled * r * r,
    }
}

/// n observations O = (W, A, Y) with the outcome kept in both original and
/// scaled units.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub w: DMatrix<f64>,
    pub w_names: Vec<String>,
    pub a: Vec<u8>,
    pub y_raw: Vec<f64>,
    /// Outcome scaled into [0,1] (constant 0.5 when the scale is degenerate).
    pub y: Vec<f64>,
    pub scale: OutcomeScale,
}

impl Dataset {
    pub fn new(w: DMatrix<f64>, w_names: Vec<String>, a: Vec<u8>, y_raw: Vec<f64>) -> Result<Self> {
        let n = y_raw.len();
        if n < 2 {
            return Err(Error::TooFewRows { n });
        }
        if a.len() != n || w.nrows() != n {
            return Err(Error::LengthMismatch { what: "dataset columns" });
        }
        if w_names.len() != w.ncols() {
            return Err(Error::LengthMismatch { what: "covariate names" });
        }
        for (row, &ai) in a.iter().enumerate() {
            if ai > 1 {
                return Err(Error::NonBinaryTreatment { row: row + 1, value: ai as f64 });
            }
        }
        if !a.contains(&1) {
            return Err(Error::MissingTreatmentArm { arm: 1 });
        }
        if !a.contains(&0) {
            return Err(Error::MissingTreatmentArm { arm: 0 });
        }
        if y_raw.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { what: "outcome vector" });
        }
        if w.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { what: "covariate matrix" });
        }
        let scale = OutcomeScale::from_raw(&y_raw)?;
        let y = y_raw.iter().map(|&v| scale.to_unit(v)).collect();
        Ok(Dataset { w, w_names, a, y_raw, y, scale })
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn n_covariates(&self) -> usize {
        self.w.ncols()
    }
}

/// Load a dataset from a headed CSV file. The named treatment and outcome
/// columns are extracted; every remaining column becomes a covariate, in
/// header order.
pub fn load_csv(path: &Path, treatment_col: &str, outcome_col: &str) -> Result<Dataset> {
    let file = std::fs::File::open(path).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(file);

    let headers: Vec<String> = reader.headers()?.iter().map(str::to_owned).collect();
    let col_index = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::MissingColumn { name: name.to_owned() })
    };
    let a_idx = col_index(treatment_col)?;
    let y_idx = col_index(outcome_col)?;
    let w_idx: Vec<usize> = (0..headers.len()).filter(|&j| j != a_idx && j != y_idx).collect();
    let w_names: Vec<String> = w_idx.iter().map(|&j| headers[j].clone()).collect();

    let mut a = Vec::new();
    let mut y_raw = Vec::new();
    let mut w_rows: Vec<f64> = Vec::new();
    for (rec_no, record) in reader.records().enumerate() {
        let record = record?;
        let row = rec_no + 1; // 1-based data row for diagnostics
        let parse = |j: usize| -> Result<f64> {
            let cell = record.get(j).unwrap_or("");
            match cell.parse::<f64>() {
                Ok(v) if v.is_finite() => Ok(v),
                _ => Err(Error::NonNumericCell {
                    row,
                    column: headers[j].clone(),
                    value: cell.to_owned(),
                }),
            }
        };
        let a_val = parse(a_idx)?;
        if a_val != 0.0 && a_val != 1.0 {
            return Err(Error::NonBinaryTreatment { row, value: a_val });
        }
        a.push(a_val as u8);
        y_raw.push(parse(y_idx)?);
        for &j in &w_idx {
            w_rows.push(parse(j)?);
        }
    }

    let n = y_raw.len();
    if n < 2 {
        return Err(Error::TooFewRows { n });
    }
    let w = DMatrix::from_row_iterator(n, w_idx.len(), w_rows);
    Dataset::new(w, w_names, a, y_raw)
}

/// The cross-validation split B_n: a validation-fold label in {1..K} per row.
/// Each row's training set is the complement of its validation fold.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct FoldPlan {
    pub k: usize,
    /// 1-based validation-fold label per row.
    pub assignment: Vec<usize>,
    pub seed: u64,
    pub stratified: bool,
}

impl FoldPlan {
    pub fn n(&self) -> usize {
        self.assignment.len()
    }

    pub fn fold_of(&self, i: usize) -> usize {
        self.assignment[i]
    }

    pub fn validation_indices(&self, fold: usize) -> Vec<usize> {
        (0..self.n()).filter(|&i| self.assignment[i] == fold).collect()
    }

    pub fn training_indices(&self, fold: usize) -> Vec<usize> {
        (0..self.n()).filter(|&i| self.assignment[i] != fold).collect()
    }

    pub fn fold_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0usize; self.k];
        for &f in &self.assignment {
            sizes[f - 1] += 1;
        }
        sizes
    }
}

/// Build a balanced K-fold plan, optionally stratified (shuffle within each
/// stratum, then deal rows round-robin with a counter that continues across
/// strata, so fold sizes are balanced within 1 both overall and per stratum).
pub fn make_folds(
    n: usize,
    k: usize,
    seed: u64,
    stratify_by: Option<&[u8]>,
) -> Result<FoldPlan> {
    if k < 2 || k > n {
        return Err(Error::BadFoldCount { k, n });
    }
    if let Some(strata) = stratify_by {
        if strata.len() != n {
            return Err(Error::LengthMismatch { what: "stratification vector" });
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut assignment = vec![0usize; n];
    let mut counter = 0usize;

    let mut labels: Vec<u8> = match stratify_by {
        Some(strata) => {
            let mut l: Vec<u8> = strata.to_vec();
            l.sort_unstable();
            l.dedup();
            l
        }
        None => vec![0],
    };
    labels.sort_unstable();

    for label in labels {
        let mut members: Vec<usize> = match stratify_by {
            Some(strata) => (0..n).filter(|&i| strata[i] == label).collect(),
            None => (0..n).collect(),
        };
        members.shuffle(&mut rng);
        for i in members {
            assignment[i] = counter % k + 1;
            counter += 1;
        }
    }

    if let Some(strata) = stratify_by {
        let mut seen: Vec<u8> = strata.to_vec();
        seen.sort_unstable();
        seen.dedup();
        for label in seen {
            let folds: std::collections::BTreeSet<usize> = (0..n)
                .filter(|&i| strata[i] == label)
                .map(|i| assignment[i])
                .collect();
            if folds.len() == 1 {
                let fold = *folds.iter().next().unwrap();
                return Err(Error::StratumConcentrated { stratum: label, fold });
            }
        }
    }

    Ok(FoldPlan { k, assignment, seed, stratified: stratify_by.is_some() })
}
