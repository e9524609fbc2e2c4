//! Machine-readable outputs: JSON reports and row-level CSV dumps.

use std::path::{Path, PathBuf};

use cvtmle_core::params::ICComponents;
use cvtmle_core::pipeline::EstimateRun;
use cvtmle_core::sim::{PairedRecord, RepRecord};
use cvtmle_core::targeting::FluctuationTrace;
use serde_json::Value;

pub type IoResult<T> = std::result::Result<T, String>;

fn io_err<E: std::fmt::Display>(path: &Path, e: E) -> String {
    format!("cannot write {}: {e}", path.display())
}

/// Pretty JSON with a trailing newline, to a file or stdout.
pub fn write_json(value: &Value, out: &Option<PathBuf>) -> IoResult<()> {
    let text = serde_json::to_string_pretty(value).expect("report serializes");
    match out {
        Some(path) => {
            std::fs::write(path, text + "\n").map_err(|e| io_err(path, e))
        }
        None => {
            println!("{text}");
            Ok(())
        }
    }
}

fn csv_writer(path: &Path) -> IoResult<csv::Writer<std::fs::File>> {
    csv::Writer::from_path(path).map_err(|e| io_err(path, e))
}

/// Stacked nuisance dump: one row per observation, 0-based row index,
/// 1-based validation-fold label.
pub fn dump_nuisances(path: &Path, run: &EstimateRun) -> IoResult<()> {
    let nuis = &run.nuisances;
    let mut w = csv_writer(path)?;
    w.write_record(["row", "fold", "Q0_A", "Q0_1", "Q0_0", "g1"]).map_err(|e| io_err(path, e))?;
    for i in 0..nuis.plan.n() {
        w.write_record([
            i.to_string(),
            nuis.plan.assignment[i].to_string(),
            nuis.q0_a[i].to_string(),
            nuis.q0_1[i].to_string(),
            nuis.q0_0[i].to_string(),
            nuis.g1[i].to_string(),
        ])
        .map_err(|e| io_err(path, e))?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

/// Per-iteration targeting trace. Rows are loop-top snapshots: the metrics
/// columns have one more entry than accepted steps, so the terminal row
/// carries an empty eps cell.
pub fn dump_trace(path: &Path, trace: &FluctuationTrace) -> IoResult<()> {
    let mut w = csv_writer(path)?;
    w.write_record(["k", "eps", "ic_mean", "sigma_hat", "loglik"]).map_err(|e| io_err(path, e))?;
    for k in 0..trace.ic_mean.len() {
        let eps = trace.eps.get(k).map(|e| e.to_string()).unwrap_or_default();
        w.write_record([
            k.to_string(),
            eps,
            trace.ic_mean[k].to_string(),
            trace.sigma_hat[k].to_string(),
            trace.loglik[k].to_string(),
        ])
        .map_err(|e| io_err(path, e))?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

/// Influence-curve components at the final state, one row per observation.
pub fn dump_ic(path: &Path, ic: &ICComponents) -> IoResult<()> {
    let mut w = csv_writer(path)?;
    w.write_record(["row", "d_Y", "d_W", "total"]).map_err(|e| io_err(path, e))?;
    for i in 0..ic.total.len() {
        w.write_record([
            i.to_string(),
            ic.d_y[i].to_string(),
            ic.d_w[i].to_string(),
            ic.total[i].to_string(),
        ])
        .map_err(|e| io_err(path, e))?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

fn opt<T: ToString>(v: &Option<T>) -> String {
    v.as_ref().map(|x| x.to_string()).unwrap_or_default()
}

/// Per-replicate simulation results.
pub fn write_replicates_csv(path: &Path, reps: &[RepRecord]) -> IoResult<()> {
    let mut w = csv_writer(path)?;
    w.write_record([
        "rep",
        "psi",
        "se",
        "ci_lo",
        "ci_hi",
        "covered",
        "k_iterations",
        "converged",
        "reason",
        "eic_solved",
        "error",
    ])
    .map_err(|e| io_err(path, e))?;
    for r in reps {
        w.write_record([
            r.rep.to_string(),
            opt(&r.psi),
            opt(&r.se),
            opt(&r.ci_lo),
            opt(&r.ci_hi),
            opt(&r.covered),
            opt(&r.k_iterations),
            opt(&r.converged),
            opt(&r.reason),
            opt(&r.eic_solved),
            opt(&r.error),
        ])
        .map_err(|e| io_err(path, e))?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

/// Paired per-replicate records from a variant comparison.
pub fn write_paired_csv(path: &Path, reps: &[PairedRecord]) -> IoResult<()> {
    let mut w = csv_writer(path)?;
    w.write_record(["rep", "psi_stacked", "psi_foldwise", "diff", "error"])
        .map_err(|e| io_err(path, e))?;
    for r in reps {
        w.write_record([
            r.rep.to_string(),
            opt(&r.psi_stacked),
            opt(&r.psi_foldwise),
            opt(&r.diff),
            opt(&r.error),
        ])
        .map_err(|e| io_err(path, e))?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

/// Attach the effective config to an already-serialized report object.
pub fn with_config(mut report: Value, echo: &Value) -> Value {
    if let Some(map) = report.as_object_mut() {
        map.insert("config".to_owned(), echo.clone());
    }
    report
}

/// Collapse a message onto one line for the exit-2/3 diagnostic contract.
pub fn single_line_diagnostic(msg: &str) -> String {
    msg.replace('\n', " ")
}
