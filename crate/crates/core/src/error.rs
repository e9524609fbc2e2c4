//! Error type shared across the crate.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot read '{path}': {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("column '{name}' not found in header")]
    MissingColumn { name: String },
    #[error("non-numeric or non-finite value '{value}' at data row {row}, column '{column}'")]
    NonNumericCell {
        row: usize,
        column: String,
        value: String,
    },
    #[error("treatment not binary: value {value} at data row {row}")]
    NonBinaryTreatment { row: usize, value: f64 },
    #[error("need at least 2 rows, got {n}")]
    TooFewRows { n: usize },
    #[error("treatment arm {arm} absent from the data")]
    MissingTreatmentArm { arm: u8 },
    #[error("non-finite value in {what}")]
    NonFinite { what: &'static str },
    #[error("fold count {k} out of range for n = {n} (need 2 <= K <= n)")]
    BadFoldCount { k: usize, n: usize },
    #[error(
        "stratum {stratum} lies entirely inside fold {fold}; \
         the training complement of fold {fold} would lose it"
    )]
    StratumConcentrated { stratum: u8, fold: usize },
    #[error("length mismatch in {what}")]
    LengthMismatch { what: &'static str },
    #[error("empty input: {what}")]
    EmptyInput { what: &'static str },
    #[error("unknown learner spec '{spec}'")]
    BadLearnerSpec { spec: String },
    #[error("all candidate learners failed to fit")]
    AllLearnersFailed,
    #[error("design arity mismatch: predictor expects {expected} columns, got {got}")]
    ArityMismatch { expected: usize, got: usize },
    #[error("training fold {fold} lacks treatment arm {arm}")]
    TrainingFoldMissingArm { fold: usize, arm: u8 },
    #[error("invalid propensity bounds ({lo}, {hi}); need 0 < lo <= hi < 1")]
    BadPropensityBounds { lo: f64, hi: f64 },
    #[error("invalid alpha {alpha}; need 0 < alpha < 1")]
    BadAlpha { alpha: f64 },
    #[error("unknown dgp preset '{0}'")]
    UnknownDgp(String),
    #[error("invalid input: {0}")]
    Invalid(String),
}
